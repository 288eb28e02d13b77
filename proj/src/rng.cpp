#include "nsfbm/rng.hpp"

namespace nsfbm {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    return mix64(mix64(seed) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

Engine make_engine(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t s = derive_seed(seed, index);
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return Engine(seq);
}

void fill_normal(Engine& eng, double* out, std::size_t n) {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) out[i] = nd(eng);
}

std::vector<double> normal_vector(std::uint64_t seed, std::uint64_t index, std::size_t n) {
    auto eng = make_engine(seed, index);
    std::vector<double> v(n);
    fill_normal(eng, v.data(), n);
    return v;
}

}  // namespace nsfbm
