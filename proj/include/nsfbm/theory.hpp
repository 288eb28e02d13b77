#pragma once
#include <cstdint>
#include <vector>

#include "nsfbm/model.hpp"

namespace nsfbm {

double sfbm_cov(const SfbmParams& p, double tau);
double sfbm_mean(const SfbmParams& p);

// Small-intermittency shape functions. H may be 0 (limit forms).
double g_h(double hurst, double z);
double g_tilde_h(double hurst, double z);
double r_ratio(double h_i, double h, double z);
// C_H (3 - 2 ln z), upper bound for r_{0,H}(z) on (0,1)
double r_bound(double hurst, double z);

struct WeightedMode {
    double weight;
    SfbmParams mode;
};

// sum a_l lambda_l^2 (tau/T)^{2H_l} g_{H_l}(delta/tau)
double small_intermittency_W(const std::vector<WeightedMode>& modes, double tau, double delta);
// same with weights entering as b_l^4
double small_intermittency_V(const std::vector<WeightedMode>& modes, double tau, double delta);

// Autocovariance of Delta-averages of omega, in units of lambda^2.
double c_upsilon(const SfbmParams& p, double delta, double tau);
double c_upsilon(double hurst, double horizon, double delta, double tau);

// Covariance (units of lambda^2) between the averages of omega over [a,b] and [c,d].
double interval_cov(double hurst, double horizon, double a, double b, double c, double d);

struct RegimeReport {
    std::vector<double> gamma_margin;       // 1/gamma_i (criterion gamma_i <= 1)
    std::vector<double> beta_upper_margin;  // sigma_i/|beta_i|
    double subindex_lhs = 0.0;              // beta_bar^{4/3} N_s
    double subindex_threshold = 10.0;
    // full first-order inequalities, RHS/LHS
    std::vector<double> gamma_ineq_margin;
    std::vector<double> beta_ineq_margin;
    bool gamma_ok = false;
    bool beta_upper_ok = false;
    bool subindex_ok = false;
    double tau = 0.0;
    double delta = 0.0;
    const char* note = "sub-index condition assumes lambda_i ~ lambda, equal weights over all stocks";
};

constexpr double kDominanceFactor = 10.0;

RegimeReport check_regime(const NestedModelSpec& spec, double tau, double delta);
RegimeReport check_regime(const std::vector<double>& betas, const std::vector<double>& sigmas,
                          const std::vector<double>& gammas, const SfbmParams& factor,
                          const std::vector<SfbmParams>& idio, double tau, double delta);

struct AppendixCConstants {
    double v1, v2, v3, c0;
    double var_upsilon;  // Var(Upsilon_Delta) = Delta * V2
};

AppendixCConstants appendix_c_constants(double horizon, double delta);

// Exact H = 0, tau = 0 value lambda^2 C(0) / (4 Var(Upsilon)).
double small_intermittency_error_ratio(double lambda_sq, double horizon, double delta);

struct ErrorRatioBudget {
    std::size_t n_periods = 4096;
    std::size_t substeps = 32;
    std::size_t n_paths = 20;
};

struct ErrorRatioEstimate {
    std::vector<double> lags;
    std::vector<double> ratio;
    std::vector<double> stderr_;
};

// Monte-Carlo estimate of R(tau) at lags tau = k*delta, k = 0..max_lag.
ErrorRatioEstimate small_intermittency_error_ratio_mc(double hurst, double lambda_sq, double horizon,
                                                      double delta, std::size_t max_lag,
                                                      const ErrorRatioBudget& budget,
                                                      std::uint64_t seed);

}  // namespace nsfbm
