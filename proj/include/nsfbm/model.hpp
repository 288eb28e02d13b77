#pragma once
#include <cstddef>
#include <vector>

namespace nsfbm {

// One S-fBM log-volatility mode.
struct SfbmParams {
    static constexpr double h_min = 1e-3;
    static constexpr double h_eps = 1e-3;

    double hurst = 0.1;
    double intermittency_sq = 0.01;  // lambda^2
    double horizon = 1.0;            // T

    SfbmParams() = default;
    SfbmParams(double h, double lambda_sq, double T);

    double nu_sq() const { return intermittency_sq / (hurst * (1.0 - 2.0 * hurst)); }
    void validate() const;
};

enum class VolSampling {
    left_point,    // omega evaluated at grid points
    cell_average,  // omega averaged over each grid cell
};

struct NestedModelSpec {
    std::size_t n_stocks = 0;
    std::vector<double> betas;
    std::vector<double> sigmas;
    std::vector<double> gammas;
    SfbmParams factor_mode;
    std::vector<SfbmParams> idio_modes;
    std::size_t n_periods = 0;     // L
    std::size_t subdivisions = 0;  // s
    double period = 1.0;           // Delta
    bool allow_long_sample = false;  // permit L*Delta > T
    VolSampling vol_sampling = VolSampling::left_point;

    void validate() const;
};

}  // namespace nsfbm
