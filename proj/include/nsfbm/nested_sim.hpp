#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nsfbm/model.hpp"

namespace nsfbm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Provenance { synthetic, empirical };

struct IndexSpec {
    std::vector<std::size_t> members;  // 0-based
    std::vector<double> weights;

    static IndexSpec equal_weight(std::vector<std::size_t> members);
    static IndexSpec first_n(std::size_t n);
    void validate(std::size_t n_stocks) const;
};

struct SimOptions {
    bool keep_fine = true;         // store N x (L*s) fine returns
    bool keep_vol_paths = false;   // store fine Omega and residual log-vol paths
    std::vector<IndexSpec> indexes;  // per-period index QVs accumulated on the fly
    std::size_t batch = 8;         // stocks generated concurrently
};

// Fine-grid panel plus per-period aggregates. For empirical data only the
// per-period fields are populated and subdivisions is 1.
struct ReturnsPanel {
    std::size_t n_stocks = 0;
    std::size_t n_periods = 0;
    std::size_t subdivisions = 1;
    double period = 1.0;
    Provenance provenance = Provenance::synthetic;
    std::vector<std::string> tickers;

    RowMatrix fine_returns;          // N x (L*s), may be empty
    Eigen::VectorXd factor_returns;  // L*s, may be empty (oracle tests only)

    Eigen::MatrixXd daily_returns;  // N x L
    Eigen::MatrixXd stock_qv;       // N x L
    // simulator ground truth
    Eigen::MatrixXd residual_qv;    // N x L
    Eigen::VectorXd factor_qv;      // L
    Eigen::VectorXd factor_daily;   // L

    std::vector<Eigen::VectorXd> index_qv;     // per SimOptions::indexes
    std::vector<Eigen::VectorXd> index_daily;
    std::vector<double> index_beta_bar;

    Eigen::VectorXd factor_logvol;  // fine Omega, when kept
    RowMatrix residual_logvol;      // fine omega-tilde, when kept

    bool has_fine() const { return fine_returns.size() > 0; }
};

// Residual log-vol shift making E[exp(gamma*Omega + omega_i + shift)] = 1.
double residual_shift(double gamma, double factor_var, double factor_mean, double idio_var);

ReturnsPanel simulate_panel(const NestedModelSpec& spec, std::uint64_t seed,
                            const SimOptions& opt = {});

struct IndexSeries {
    std::vector<double> returns;  // length L*s
    std::optional<double> beta_bar;
};

IndexSeries build_index(const ReturnsPanel& panel, const IndexSpec& index,
                        const std::vector<double>* betas = nullptr);

struct BetaSigmaDraw {
    std::vector<double> betas;
    std::vector<double> sigmas;
};

constexpr double kBetaA = 9.66, kBetaB = 5.63;
constexpr double kSigmaA = 13.10, kSigmaB = 4.18;

BetaSigmaDraw sample_beta_sigma(std::size_t n, std::pair<double, double> beta_params,
                                std::pair<double, double> sigma_params, std::uint64_t seed);

// Homogeneous spec: common idiosyncratic mode, gamma and sigma (sigma <= 0 draws sigmas).
NestedModelSpec make_homogeneous_spec(std::size_t n_stocks, const SfbmParams& factor,
                                      const SfbmParams& idio, double gamma, double sigma,
                                      std::size_t n_periods, std::size_t subdivisions,
                                      double period, std::uint64_t beta_seed);

void write_panel_csv(const ReturnsPanel& panel, const std::string& file, bool daily);

}  // namespace nsfbm
