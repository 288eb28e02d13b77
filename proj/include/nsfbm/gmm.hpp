#pragma once
#include <cstdint>
#include <string>
#include <vector>

namespace nsfbm {

struct GmmConfig {
    int q = 32;                      // lags floor(2^{k/4}), k = 0..q
    bool nugget = false;             // include lag 0 and a noise constant at lags <= 2
    double h_lo = 1e-3;
    double h_hi = 0.499;
    int grid_points = 50;
    int jackknife_blocks = 20;       // 0 disables the jackknife
    // Fit the expectation of the mean-removed autocovariance estimator instead
    // of the raw model covariance.
    bool demean_correction = true;
    double tol = 1e-7;
    // Parametric bootstrap replicates for se_hurst (0 keeps the jackknife only).
    // Block jackknife errors are too small under long memory.
    int bootstrap_paths = 0;
    std::uint64_t bootstrap_seed = 0;

    void validate() const;
};

struct HurstFit {
    double hurst = 0.0;
    double lambda_sq = 0.0;
    double nugget = 0.0;
    double objective = 0.0;
    std::vector<std::size_t> lags;
    double se_hurst = 0.0;
    double se_lambda_sq = 0.0;
    double se_hurst_jackknife = 0.0;
    double se_hurst_bootstrap = 0.0;  // 0 when not computed
    std::size_t n = 0;
    std::vector<std::string> flags;

    bool has_flag(const std::string& f) const;
};

std::vector<std::size_t> lag_set(int q, std::size_t n);

std::vector<double> empirical_autocov(const std::vector<double>& series,
                                      const std::vector<std::size_t>& lags);

// Model moment per lag in units of lambda^2 (series of Delta-averages, T = n*Delta).
std::vector<double> model_moments(double hurst, std::size_t n, double delta,
                                  const std::vector<std::size_t>& lags, bool demean_correction);

// Profile objective at fixed H; returns J and writes the linear coefficients.
double profile_objective(const std::vector<double>& c_hat, const std::vector<double>& m,
                         const std::vector<std::size_t>& lags, bool nugget, double* lambda_sq,
                         double* nugget_value);

HurstFit fit_hurst(const std::vector<double>& series, const GmmConfig& config, double delta);

// Fit from precomputed autocovariances (used by the jackknife and oracle tests).
HurstFit fit_hurst_moments(const std::vector<double>& c_hat, const std::vector<std::size_t>& lags,
                           std::size_t n, const GmmConfig& config, double delta);

// Standard deviation of H over Gaussian replicates drawn from the fitted model:
// lambda^2 C_Upsilon at lags >= 1 plus white noise making up the sample variance.
double bootstrap_se_hurst(const HurstFit& fit, double sample_variance, const GmmConfig& config,
                          double delta, int n_paths, std::uint64_t seed);

struct MultiLagsetResult {
    double mean = 0.0;
    double sd = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::vector<int> qs;
    std::vector<double> hursts;
    std::size_t n_success = 0;
};

MultiLagsetResult fit_hurst_multi_lagset(const std::vector<double>& series, const GmmConfig& base,
                                         double delta, int q_lo, int q_hi, int n_trials,
                                         std::uint64_t seed);

}  // namespace nsfbm
