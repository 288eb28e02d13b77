#pragma once
#include <cstdint>
#include <random>
#include <vector>

namespace nsfbm {

// splitmix64 finalizer
std::uint64_t mix64(std::uint64_t x);

// Sub-seed for stream `index` of a master seed. Stable: adding streams never
// changes existing ones.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

using Engine = std::mt19937_64;

Engine make_engine(std::uint64_t seed, std::uint64_t index);

void fill_normal(Engine& eng, double* out, std::size_t n);
std::vector<double> normal_vector(std::uint64_t seed, std::uint64_t index, std::size_t n);

}  // namespace nsfbm
