#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsfbm/gmm.hpp"
#include "nsfbm/nested_sim.hpp"
#include "nsfbm/theory.hpp"
#include "nsfbm/vol_estimators.hpp"

namespace nsfbm {

struct BetaEstimate {
    std::vector<double> beta;
    int iterations = 0;
    double residual = 0.0;  // off-diagonal Frobenius misfit
    bool converged = false;
};

// Off-diagonal rank-one fit of the sample covariance of an N x L return matrix.
BetaEstimate estimate_beta(const Eigen::MatrixXd& daily_returns, double tol = 1e-10,
                           int max_iter = 500);
BetaEstimate estimate_beta_from_cov(const Eigen::MatrixXd& cov, double tol = 1e-10,
                                    int max_iter = 500);

// sum_i beta_i^2 <x^i> / sum_i beta_i^4 per period.
VolSeries factor_qv_proxy(const Eigen::MatrixXd& stock_qv, const std::vector<double>& beta,
                          double period = 1.0);

// beta' X_t / beta'beta per column.
std::vector<double> estimate_factor_series(const Eigen::MatrixXd& returns,
                                           const std::vector<double>& beta);
std::vector<double> estimate_factor_series(const RowMatrix& returns, const std::vector<double>& beta);

// Realized QV of the projected factor on the fine grid.
VolSeries factor_qv_ols(const ReturnsPanel& panel, const std::vector<double>& beta);

// <x> - beta^2 <f>, floored.
VolSeries residual_qv(const std::vector<double>& stock_qv, double beta,
                      const std::vector<double>& factor_qv, double period = 1.0);

// QV of the fine-grid residual dx_i - beta f_hat; avoids the <f, eps> cross
// term left by the per-period difference.
VolSeries residual_qv_fine(const ReturnsPanel& panel, std::size_t stock, double beta,
                           const std::vector<double>& factor_fine);

enum class GammaMethod {
    ols,     // Cov(w, W)/Var(W)
    lagged,  // lag 1..k cross moments, robust to white noise in W
};

struct GammaFit {
    double gamma = 0.0;
    std::vector<double> idio;  // w - gamma * W
};

GammaFit estimate_gamma_and_idio(const std::vector<double>& residual_logvol,
                                 const std::vector<double>& factor_logvol,
                                 GammaMethod method = GammaMethod::ols, int max_lag = 5);

struct FactorSource {
    enum class Mode {
        proxy,          // projected-factor QV with fine data, formula otherwise
        proxy_formula,  // always the beta^2-weighted formula
        external,       // supplied factor volatility series
    };
    Mode mode = Mode::proxy;
    std::vector<double> external;  // per period, positive (e.g. GK of the index)
    std::string label;

    void validate(std::size_t n_periods) const;
};

struct CalibrationOptions {
    FactorSource factor_source;
    GmmConfig gmm;
    GammaMethod gamma_method = GammaMethod::lagged;
    int gamma_max_lag = 5;
    bool gaussianize = true;
    double regime_tau_periods = 10.0;
    std::uint64_t seed = 0;  // bootstrap replicates, when enabled in gmm
};

struct CalibrationDiagnostics {
    std::size_t factor_floor_count = 0;
    std::vector<std::size_t> residual_floor_counts;
    std::optional<double> omega_reference_corr;   // proxy log-vol vs external series
    std::optional<double> proxy_ratio_median;     // <f_hat>/<f> vs simulator truth
    std::optional<double> formula_ratio_median;   // same for the formula proxy
    std::string residual_method;                  // fine_path or qv_difference
    std::size_t dropped_periods = 0;
    std::vector<std::string> warnings;
};

struct CalibrationReport {
    std::vector<std::string> tickers;
    std::size_t n_periods = 0;
    double period = 1.0;
    std::vector<double> beta_hat;
    int beta_iterations = 0;
    double beta_residual = 0.0;
    std::string factor_source;
    HurstFit factor_fit;
    std::vector<double> factor_logvol;  // Omega-hat
    std::vector<double> gamma_hat;
    std::string gamma_method;
    std::vector<HurstFit> idio_fits;
    std::vector<double> sigma_hat;
    RegimeReport regime;
    CalibrationDiagnostics diagnostics;
};

// Steps 1-5. Errors are rethrown with the step index in the message (and in
// NumericalError::step); completed fields are left in *partial when given.
CalibrationReport run_calibration(const ReturnsPanel& panel, const CalibrationOptions& options = {},
                                  CalibrationReport* partial = nullptr);

// Log of a QV series, gaussianized and rescaled to the log series' own
// standard deviation; without gaussianization only the mean is removed.
std::vector<double> prepare_logvol(const VolSeries& qv, bool gaussianize_series);

const char* to_string(FactorSource::Mode m);
const char* to_string(GammaMethod m);

}  // namespace nsfbm
