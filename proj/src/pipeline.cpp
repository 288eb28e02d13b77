#include "nsfbm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include "nsfbm/errors.hpp"
#include "nsfbm/rng.hpp"

namespace nsfbm {

const char* to_string(FactorSource::Mode m) {
    switch (m) {
        case FactorSource::Mode::proxy: return "proxy";
        case FactorSource::Mode::proxy_formula: return "proxy_formula";
        case FactorSource::Mode::external: return "external";
    }
    return "?";
}

const char* to_string(GammaMethod m) { return m == GammaMethod::ols ? "ols" : "lagged"; }

BetaEstimate estimate_beta_from_cov(const Eigen::MatrixXd& cov, double tol, int max_iter) {
    const long n = cov.rows();
    if (cov.cols() != n) throw ConfigError("covariance must be square");
    if (n < 3)
        throw DataError("beta estimation needs N >= 3 stocks (N = 2 leaves beta beta' underdetermined)");
    if (!cov.allFinite()) throw DataError("covariance has non-finite entries");

    Eigen::MatrixXd work = cov;
    work.diagonal().setZero();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    auto leading = [&](const Eigen::MatrixXd& m) {
        es.compute(m);
        double lam = es.eigenvalues()(n - 1);
        Eigen::VectorXd v = es.eigenvectors().col(n - 1);
        return Eigen::VectorXd(std::sqrt(std::max(lam, 0.0)) * v);
    };
    Eigen::VectorXd b = leading(work);
    BetaEstimate out;
    for (int it = 1; it <= max_iter; ++it) {
        work.diagonal() = b.array().square().matrix();
        Eigen::VectorXd nb = leading(work);
        if (nb.dot(b) < 0.0) nb = -nb;
        double step = (nb - b).norm();
        b = nb;
        out.iterations = it;
        if (step <= tol * std::max(1.0, b.norm())) {
            out.converged = true;
            break;
        }
    }
    if (b.sum() < 0.0) b = -b;
    Eigen::MatrixXd r = cov - b * b.transpose();
    r.diagonal().setZero();
    out.residual = r.norm();
    out.beta.assign(b.data(), b.data() + n);
    if (!out.converged) {
        std::ostringstream msg;
        msg << "beta estimation did not converge after " << max_iter
            << " iterations; off-diagonal residual " << out.residual << "; last iterate [";
        for (long i = 0; i < std::min<long>(n, 8); ++i) msg << (i ? ", " : "") << b[i];
        msg << (n > 8 ? ", ...]" : "]");
        throw NumericalError(msg.str(), 1);
    }
    return out;
}

BetaEstimate estimate_beta(const Eigen::MatrixXd& x, double tol, int max_iter) {
    if (x.rows() < 3)
        throw DataError("beta estimation needs N >= 3 stocks (N = 2 leaves beta beta' underdetermined)");
    if (x.cols() < 2) throw DataError("beta estimation needs at least 2 periods");
    Eigen::MatrixXd c = x.colwise() - x.rowwise().mean();
    Eigen::MatrixXd cov = c * c.transpose() / double(x.cols() - 1);
    return estimate_beta_from_cov(cov, tol, max_iter);
}

namespace {

double sum_pow(const std::vector<double>& b, int p) {
    double s = 0.0;
    for (double x : b) s += std::pow(x, p);
    return s;
}

}  // namespace

VolSeries factor_qv_proxy(const Eigen::MatrixXd& qv, const std::vector<double>& beta,
                          double period) {
    if (std::size_t(qv.rows()) != beta.size()) throw ConfigError("beta length mismatch");
    double b4 = sum_pow(beta, 4);
    if (!(b4 > 0.0)) throw DataError("factor proxy: all betas are zero");
    Eigen::VectorXd b2(long(beta.size()));
    for (std::size_t i = 0; i < beta.size(); ++i) b2[long(i)] = beta[i] * beta[i];
    Eigen::VectorXd f = qv.transpose() * b2 / b4;
    VolSeries s;
    s.kind = VolKind::proxy;
    s.scale = period;
    s.values.assign(f.data(), f.data() + f.size());
    s.floor_count = apply_floor(s.values, &s.floor_level);
    return s;
}

std::vector<double> estimate_factor_series(const Eigen::MatrixXd& x, const std::vector<double>& beta) {
    if (std::size_t(x.rows()) != beta.size()) throw ConfigError("beta length mismatch");
    Eigen::Map<const Eigen::VectorXd> b(beta.data(), long(beta.size()));
    double bb = b.squaredNorm();
    if (!(bb > 0.0)) throw DataError("factor projection: zero beta norm");
    Eigen::VectorXd f = x.transpose() * b / bb;
    return {f.data(), f.data() + f.size()};
}

std::vector<double> estimate_factor_series(const RowMatrix& x, const std::vector<double>& beta) {
    if (std::size_t(x.rows()) != beta.size()) throw ConfigError("beta length mismatch");
    Eigen::Map<const Eigen::VectorXd> b(beta.data(), long(beta.size()));
    double bb = b.squaredNorm();
    if (!(bb > 0.0)) throw DataError("factor projection: zero beta norm");
    Eigen::RowVectorXd f = b.transpose() * x / bb;
    return {f.data(), f.data() + f.size()};
}

VolSeries factor_qv_ols(const ReturnsPanel& panel, const std::vector<double>& beta) {
    if (!panel.has_fine()) throw DataError("projected factor QV needs fine-grid returns");
    auto f = estimate_factor_series(panel.fine_returns, beta);
    auto s = realized_qv(f, panel.subdivisions, panel.period);
    s.kind = VolKind::proxy;
    return s;
}

VolSeries residual_qv(const std::vector<double>& x, double beta, const std::vector<double>& f,
                      double period) {
    if (x.size() != f.size()) throw DataError("residual QV: length mismatch");
    VolSeries s;
    s.kind = VolKind::realized_qv;
    s.scale = period;
    s.values.resize(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) s.values[t] = x[t] - beta * beta * f[t];
    s.floor_count = apply_floor(s.values, &s.floor_level);
    return s;
}

VolSeries residual_qv_fine(const ReturnsPanel& panel, std::size_t stock, double beta,
                           const std::vector<double>& f) {
    if (!panel.has_fine()) throw DataError("fine residual QV needs fine-grid returns");
    if (stock >= panel.n_stocks) throw ConfigError("stock index out of range");
    if (f.size() != std::size_t(panel.fine_returns.cols())) throw DataError("factor path length mismatch");
    const auto row = panel.fine_returns.row(long(stock));
    std::vector<double> e(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) e[k] = row[long(k)] - beta * f[k];
    return realized_qv(e, panel.subdivisions, panel.period);
}

GammaFit estimate_gamma_and_idio(const std::vector<double>& w, const std::vector<double>& W,
                                 GammaMethod method, int max_lag) {
    const std::size_t n = W.size();
    if (w.size() != n) throw DataError("gamma regression: length mismatch");
    if (n < 3) throw DataError("gamma regression: series too short");
    double mw = mean_of(w), mW = mean_of(W);
    auto cross = [&](const std::vector<double>& a, double ma, const std::vector<double>& b,
                     double mb, std::size_t k) {
        double s = 0.0;
        for (std::size_t t = 0; t + k < n; ++t) s += (a[t] - ma) * (b[t + k] - mb);
        return s / double(n);
    };
    GammaFit g;
    double den = cross(W, mW, W, mW, 0);
    if (!(den > 0.0)) throw DataError("gamma regression: factor log-vol has zero variance");
    if (method == GammaMethod::ols) {
        g.gamma = cross(w, mw, W, mW, 0) / den;
    } else {
        if (max_lag < 1 || std::size_t(max_lag) * 4 >= n)
            throw ConfigError("gamma max_lag must be in [1, n/4)");
        double num = 0.0;
        den = 0.0;
        for (int k = 1; k <= max_lag; ++k) {
            num += cross(w, mw, W, mW, std::size_t(k)) + cross(W, mW, w, mw, std::size_t(k));
            den += 2.0 * cross(W, mW, W, mW, std::size_t(k));
        }
        if (!(den > 0.0))
            throw NumericalError("gamma regression: factor log-vol has no positive lagged autocovariance", 5);
        g.gamma = num / den;
    }
    g.idio.resize(n);
    for (std::size_t t = 0; t < n; ++t) g.idio[t] = (w[t] - mw) - g.gamma * (W[t] - mW);
    return g;
}

void FactorSource::validate(std::size_t n_periods) const {
    if (mode != Mode::external) return;
    if (external.size() != n_periods)
        throw DataError("external factor series has " + std::to_string(external.size()) +
                        " values, panel has " + std::to_string(n_periods) + " periods");
    for (double v : external)
        if (!std::isfinite(v) || v < 0.0) throw DataError("external factor series must be finite and >= 0");
}

std::vector<double> prepare_logvol(const VolSeries& qv, bool gaussianize_series) {
    auto y = log_values(qv);
    double m = mean_of(y);
    if (!gaussianize_series) {
        for (double& v : y) v -= m;
        return y;
    }
    double sd = std::sqrt(variance_of(y));
    auto g = gaussianize(y);
    for (double& v : g.values) v *= sd;
    return g.values;
}

namespace {

template <class F>
auto run_step(int step, const char* name, F&& f) -> decltype(f()) {
    auto prefix = [&] { return "calibration step " + std::to_string(step) + " (" + name + "): "; };
    try {
        return f();
    } catch (const NumericalError& e) {
        throw NumericalError(prefix() + e.what(), step);
    } catch (const ConfigError& e) {
        throw ConfigError(prefix() + e.what());
    } catch (const DataError& e) {
        throw DataError(prefix() + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(prefix() + e.what());
    } catch (const std::exception& e) {
        throw NumericalError(prefix() + e.what(), step);
    }
}

std::vector<double> row_of(const Eigen::MatrixXd& m, long i) {
    std::vector<double> v(std::size_t(m.cols()));
    for (long t = 0; t < m.cols(); ++t) v[std::size_t(t)] = m(i, t);
    return v;
}

double median_ratio(const std::vector<double>& a, const Eigen::VectorXd& b) {
    std::vector<double> r;
    for (std::size_t t = 0; t < a.size(); ++t)
        if (b[long(t)] > 0.0) r.push_back(a[t] / b[long(t)]);
    return median_of(r);
}

}  // namespace

CalibrationReport run_calibration(const ReturnsPanel& panel, const CalibrationOptions& opt,
                                  CalibrationReport* partial) {
    CalibrationReport local;
    CalibrationReport& rep = partial ? *partial : local;
    rep = CalibrationReport{};
    const std::size_t N = panel.n_stocks, L = panel.n_periods;
    const double delta = panel.period;
    rep.tickers = panel.tickers;
    rep.n_periods = L;
    rep.period = delta;
    rep.gamma_method = to_string(opt.gamma_method);
    rep.factor_source = to_string(opt.factor_source.mode);
    if (!opt.factor_source.label.empty()) rep.factor_source += ":" + opt.factor_source.label;

    run_step(0, "input", [&] {
        opt.gmm.validate();
        if (std::size_t(panel.daily_returns.rows()) != N || std::size_t(panel.daily_returns.cols()) != L ||
            std::size_t(panel.stock_qv.rows()) != N || std::size_t(panel.stock_qv.cols()) != L)
            throw DataError("panel arrays do not match n_stocks x n_periods");
        opt.factor_source.validate(L);
    });

    // Step 1: beta
    run_step(1, "beta", [&] {
        if (N < 3) throw DataError("panel has N = " + std::to_string(N) + " < 3 stocks; unusable");
        if (L < 10 * N)
            rep.diagnostics.warnings.push_back("L < 10 N: beta estimate may be noisy");
        auto b = estimate_beta(panel.daily_returns);
        rep.beta_hat = b.beta;
        rep.beta_iterations = b.iterations;
        rep.beta_residual = b.residual;
    });

    // Step 2: factor QV
    std::vector<double> f_fine;
    const bool fine_path = opt.factor_source.mode != FactorSource::Mode::proxy_formula && panel.has_fine();
    VolSeries fqv = run_step(2, "factor QV", [&] {
        const auto mode = opt.factor_source.mode;
        VolSeries proxy;
        if (fine_path) {
            f_fine = estimate_factor_series(panel.fine_returns, rep.beta_hat);
            proxy = realized_qv(f_fine, panel.subdivisions, delta);
            proxy.kind = VolKind::proxy;
        } else {
            proxy = factor_qv_proxy(panel.stock_qv, rep.beta_hat, delta);
        }
        if (std::size_t(panel.factor_qv.size()) == L && L > 0) {
            rep.diagnostics.proxy_ratio_median = median_ratio(proxy.values, panel.factor_qv);
            auto formula = factor_qv_proxy(panel.stock_qv, rep.beta_hat, delta);
            rep.diagnostics.formula_ratio_median = median_ratio(formula.values, panel.factor_qv);
        }
        if (mode != FactorSource::Mode::external) return proxy;
        VolSeries ext;
        ext.kind = VolKind::external;
        ext.scale = delta;
        ext.values = opt.factor_source.external;
        ext.floor_count = apply_floor(ext.values, &ext.floor_level);
        rep.diagnostics.omega_reference_corr =
            correlation(prepare_logvol(proxy, false), prepare_logvol(ext, false));
        return ext;
    });
    rep.diagnostics.factor_floor_count = fqv.floor_count;

    // Step 3: factor Hurst
    run_step(3, "factor Hurst", [&] {
        rep.factor_logvol = prepare_logvol(fqv, opt.gaussianize);
        GmmConfig c = opt.gmm;
        c.bootstrap_seed = derive_seed(opt.seed, 0);
        rep.factor_fit = fit_hurst(rep.factor_logvol, c, delta);
    });

    // Steps 4-5: residuals, gamma, idiosyncratic Hurst
    rep.diagnostics.residual_method = fine_path ? "fine_path" : "qv_difference";
    rep.gamma_hat.assign(N, 0.0);
    rep.sigma_hat.assign(N, 0.0);
    rep.idio_fits.assign(N, HurstFit{});
    rep.diagnostics.residual_floor_counts.assign(N, 0);
    std::vector<std::exception_ptr> err4(N), err5(N);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < N; ++i) {
        VolSeries eps;
        try {
            eps = fine_path ? residual_qv_fine(panel, i, rep.beta_hat[i], f_fine)
                            : residual_qv(row_of(panel.stock_qv, long(i)), rep.beta_hat[i], fqv.values, delta);
            rep.diagnostics.residual_floor_counts[i] = eps.floor_count;
            rep.sigma_hat[i] = std::sqrt(mean_of(eps.values) / delta);
        } catch (...) {
            err4[i] = std::current_exception();
            continue;
        }
        try {
            auto w = prepare_logvol(eps, opt.gaussianize);
            auto g = estimate_gamma_and_idio(w, rep.factor_logvol, opt.gamma_method, opt.gamma_max_lag);
            rep.gamma_hat[i] = g.gamma;
            GmmConfig c = opt.gmm;
            c.bootstrap_seed = derive_seed(opt.seed, 1 + i);
            rep.idio_fits[i] = fit_hurst(g.idio, c, delta);
        } catch (...) {
            err5[i] = std::current_exception();
        }
    }
    for (std::size_t i = 0; i < N; ++i) {
        std::string who = i < rep.tickers.size() ? rep.tickers[i] : std::to_string(i);
        if (err4[i])
            run_step(4, ("residual QV, " + who).c_str(), [&] { std::rethrow_exception(err4[i]); });
    }
    for (std::size_t i = 0; i < N; ++i) {
        std::string who = i < rep.tickers.size() ? rep.tickers[i] : std::to_string(i);
        if (err5[i])
            run_step(5, ("gamma / idiosyncratic Hurst, " + who).c_str(),
                     [&] { std::rethrow_exception(err5[i]); });
    }
    for (std::size_t i = 0; i < N; ++i)
        if (rep.diagnostics.residual_floor_counts[i] > 0) {
            std::string who = i < rep.tickers.size() ? rep.tickers[i] : std::to_string(i);
            rep.diagnostics.warnings.push_back(
                who + ": " + std::to_string(rep.diagnostics.residual_floor_counts[i]) +
                " residual QV values floored");
        }

    // regime conditions at the fitted parameters (no parameter validation here)
    run_step(6, "regime check", [&] {
        const double T = double(L) * delta;
        SfbmParams fm;
        fm.hurst = rep.factor_fit.hurst;
        fm.intermittency_sq = rep.factor_fit.lambda_sq;
        fm.horizon = T;
        std::vector<SfbmParams> im(N);
        for (std::size_t i = 0; i < N; ++i) {
            im[i].hurst = rep.idio_fits[i].hurst;
            im[i].intermittency_sq = rep.idio_fits[i].lambda_sq;
            im[i].horizon = T;
        }
        rep.regime = check_regime(rep.beta_hat, rep.sigma_hat, rep.gamma_hat, fm, im,
                                  opt.regime_tau_periods * delta, delta);
    });
    return rep;
}

}  // namespace nsfbm
