#pragma once
#include <cstdint>
#include <string>
#include <vector>

#include "nsfbm/model.hpp"

namespace nsfbm {

struct GridSpec {
    std::size_t n_points = 0;
    double dt = 1.0;
};

struct GaussianPath {
    std::vector<double> values;
    GridSpec grid;
    SfbmParams mode;
    std::uint64_t seed = 0;
    VolSampling sampling = VolSampling::left_point;
};

// Covariance sequence c_k of the sampled field at lags k*dt.
std::vector<double> path_covariance(const SfbmParams& mode, const GridSpec& grid,
                                    VolSampling sampling);

// Marginal variance of the sampled field (nu^2/2 for left-point sampling).
double path_variance(const SfbmParams& mode, double dt, VolSampling sampling);

// Circulant-embedding sampler. The embedding eigenvalues are computed once;
// draw() is thread-safe.
class CirculantSampler {
public:
    CirculantSampler(const SfbmParams& mode, const GridSpec& grid,
                     VolSampling sampling = VolSampling::left_point);
    // Arbitrary stationary covariance c_0, c_1, ... given up to embedding_size()/2.
    CirculantSampler(const std::vector<double>& cov, const GridSpec& grid);

    // Embedding size for a grid of n points.
    static std::size_t embedding_size_for(std::size_t n_points);

    // Path with mean -variance/2, so E[exp(omega)] = 1.
    std::vector<double> draw(std::uint64_t seed) const;
    // Zero-mean path into out (length n_points).
    void draw_centered(std::uint64_t seed, double* out) const;

    std::size_t embedding_size() const { return m_; }
    double min_eigenvalue() const { return min_eig_; }
    std::size_t clipped() const { return clipped_; }
    double mean() const { return mean_; }
    double variance() const { return var_; }

private:
    void init(const std::vector<double>& cov);

    SfbmParams mode_;
    GridSpec grid_;
    std::size_t m_ = 0;
    std::vector<double> sqrt_eig_;
    double min_eig_ = 0.0;
    std::size_t clipped_ = 0;
    double mean_ = 0.0;
    double var_ = 0.0;
};

GaussianPath sample_sfbm_path(const SfbmParams& mode, const GridSpec& grid, std::uint64_t seed,
                              VolSampling sampling = VolSampling::left_point);

// Independent paths; path i uses sub-seed derive_seed(seed, i).
std::vector<GaussianPath> sample_many(const std::vector<SfbmParams>& modes, const GridSpec& grid,
                                      std::uint64_t seed,
                                      VolSampling sampling = VolSampling::left_point);

// Dense Cholesky sampler (n_points <= 2048), for cross-validation.
GaussianPath sample_sfbm_path_dense(const SfbmParams& mode, const GridSpec& grid,
                                    std::uint64_t seed,
                                    VolSampling sampling = VolSampling::left_point);

void write_path_csv(const GaussianPath& path, const std::string& file);

}  // namespace nsfbm
