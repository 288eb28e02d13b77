#include "nsfbm/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

#include "nsfbm/errors.hpp"
#include "nsfbm/rng.hpp"
#include "nsfbm/sampler.hpp"

namespace nsfbm {

SfbmParams::SfbmParams(double h, double lambda_sq, double T)
    : hurst(h), intermittency_sq(lambda_sq), horizon(T) {
    validate();
}

void SfbmParams::validate() const {
    if (!(hurst >= h_min && hurst <= 0.5 - h_eps))
        throw ConfigError("hurst must lie in [1e-3, 0.499], got " + std::to_string(hurst));
    if (!(intermittency_sq > 0.0) || !std::isfinite(intermittency_sq))
        throw ConfigError("intermittency_sq must be positive");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw ConfigError("horizon must be positive");
}

void NestedModelSpec::validate() const {
    if (n_stocks == 0) throw ConfigError("n_stocks must be positive");
    if (betas.size() != n_stocks || sigmas.size() != n_stocks || gammas.size() != n_stocks ||
        idio_modes.size() != n_stocks)
        throw ConfigError("per-stock vectors must have length n_stocks");
    if (n_periods < 2) throw ConfigError("n_periods must be >= 2");
    if (subdivisions < 1) throw ConfigError("subdivisions must be >= 1");
    if (!(period > 0.0)) throw ConfigError("period must be positive");
    factor_mode.validate();
    for (std::size_t i = 0; i < n_stocks; ++i) {
        if (!(sigmas[i] > 0.0)) throw ConfigError("sigmas must be positive");
        if (!std::isfinite(betas[i]) || !std::isfinite(gammas[i]))
            throw ConfigError("betas and gammas must be finite");
        idio_modes[i].validate();
        if (idio_modes[i].horizon != factor_mode.horizon)
            throw ConfigError("all modes must share the same horizon T");
    }
    if (!allow_long_sample && double(n_periods) * period > factor_mode.horizon * (1.0 + 1e-12))
        throw ConfigError("L*Delta exceeds horizon T; set allow_long_sample to permit it");
}

double sfbm_cov(const SfbmParams& p, double tau) {
    double a = std::fabs(tau);
    if (a >= p.horizon) return 0.0;
    return 0.5 * p.nu_sq() * (-std::expm1(2.0 * p.hurst * std::log(a / p.horizon)));
}

double sfbm_mean(const SfbmParams& p) { return -0.25 * p.nu_sq(); }

namespace {

// expm1(h*a)/h, equal to a at h = 0
double em(double h, double a) {
    if (h == 0.0) return a;
    double x = h * a;
    if (std::fabs(x) < 1e-300) return a;
    return std::expm1(x) / h;
}

// sum_{k>=2} 2 C(p,2k)/(p-2) z^{2k-2}, p = 2H+2. The (p-2) = 2H factor of
// C(p,2k) is divided out so the sum is regular at H = 0.
double even_tail_over_2h(double hurst, double z) {
    const double p = 2.0 * hurst + 2.0;
    const double z2 = z * z;
    // k = 2: C(p,4)/(p-2) = p(p-1)(p-3)/24
    double coef = p * (p - 1.0) * (p - 3.0) / 24.0;
    double zp = z2;
    double sum = 0.0;
    for (int k = 2; k < 400; ++k) {
        double term = 2.0 * coef * zp;
        sum += term;
        if (std::fabs(term) <= 1e-18 * std::fabs(sum) && k > 3) break;
        // C(p,2k+2)/C(p,2k) = (p-2k)(p-2k-1)/((2k+1)(2k+2))
        coef *= (p - 2.0 * k) * (p - 2.0 * k - 1.0) / ((2.0 * k + 1.0) * (2.0 * k + 2.0));
        zp *= z2;
    }
    return sum;
}

double check_h(double hurst) {
    if (!(hurst >= 0.0 && hurst < 0.5)) throw ConfigError("hurst must lie in [0, 0.5)");
    return hurst;
}

}  // namespace

double g_h(double hurst, double z) {
    check_h(hurst);
    if (!(z > 0.0)) throw ConfigError("g_h requires z > 0");
    const double H = hurst;
    const double den = (1.0 - 4.0 * H * H) * (2.0 * H + 2.0);
    if (z <= 0.5) {
        // binomial expansion around z = 0
        double s = (4.0 * H + 6.0) - 4.0 * em(2.0 * H, std::log(z)) +
                   2.0 * even_tail_over_2h(H, z);
        return s / den;
    }
    const double x[3] = {1.0 + z, z, std::fabs(1.0 - z)};
    const double w[3] = {1.0, -2.0, 1.0};
    double s = 0.0;
    for (int j = 0; j < 3; ++j)
        if (x[j] > 0.0) s += w[j] * x[j] * x[j] * em(2.0 * H, std::log(x[j]));
    return 2.0 * s / (z * z * den);
}

double g_tilde_h(double hurst, double z) {
    check_h(hurst);
    if (hurst == 0.0) throw ConfigError("g_tilde_h diverges at H = 0");
    if (!(z > 0.0)) throw ConfigError("g_tilde_h requires z > 0");
    const double H = hurst;
    const double p = 2.0 * H + 2.0;
    const double den = 2.0 * H * (1.0 - 4.0 * H * H) * p;
    if (z <= 0.5) {
        double s = p * (p - 1.0) + 2.0 * H * even_tail_over_2h(H, z);
        return s / den;
    }
    double num = std::pow(1.0 + z, p) + std::pow(std::fabs(1.0 - z), p) - 2.0;
    return num / (z * z * den);
}

double r_ratio(double h_i, double h, double z) { return g_h(h_i, z) / g_h(h, z); }

double r_bound(double hurst, double z) {
    const double H = hurst;
    const double c = H * (1.0 - 2.0 * H) * (1.0 + 2.0 * H) * (1.0 + H) /
                     (2.0 * std::expm1(2.0 * H * std::numbers::ln2));
    return c * (3.0 - 2.0 * std::log(z));
}

namespace {

double si_sum(const std::vector<WeightedMode>& modes, double tau, double delta, int power) {
    if (modes.empty()) throw ConfigError("mode list is empty");
    if (!(tau > 0.0) || !(delta > 0.0)) throw ConfigError("tau and delta must be positive");
    double out = 0.0;
    for (const auto& m : modes) {
        if (tau + delta > m.mode.horizon * (1.0 + 1e-12))
            throw ConfigError("tau + delta must not exceed the horizon");
        double wt = std::pow(m.weight, power);
        out += wt * m.mode.intermittency_sq *
               std::pow(tau / m.mode.horizon, 2.0 * m.mode.hurst) * g_h(m.mode.hurst, delta / tau);
    }
    return out;
}

// second antiderivative of the normalized covariance rho(x) = cov(x)/lambda^2,
// even, Phi(0) = Phi'(0) = 0
double phi2(double H, double T, double x) {
    x = std::fabs(x);
    const double d = (2.0 * H + 1.0) * (2.0 * H + 2.0) * (1.0 - 2.0 * H);
    if (x == 0.0) return 0.0;
    if (x <= T) return x * x * (0.5 * (2.0 * H + 3.0) - em(2.0 * H, std::log(x / T))) / d;
    double phiT = T * T * 0.5 * (2.0 * H + 3.0) / d;
    double dphiT = T / ((2.0 * H + 1.0) * (1.0 - 2.0 * H));
    return phiT + dphiT * (x - T);
}

}  // namespace

double small_intermittency_W(const std::vector<WeightedMode>& modes, double tau, double delta) {
    return si_sum(modes, tau, delta, 1);
}

double small_intermittency_V(const std::vector<WeightedMode>& modes, double tau, double delta) {
    return si_sum(modes, tau, delta, 4);
}

double c_upsilon(double hurst, double horizon, double delta, double tau) {
    check_h(hurst);
    if (!(delta > 0.0) || !(horizon > 0.0)) throw ConfigError("delta and horizon must be positive");
    const double H = hurst, T = horizon;
    tau = std::fabs(tau);
    if (tau - delta >= T) return 0.0;
    if (tau + delta > T) {
        // support boundary inside the window
        return (phi2(H, T, tau + delta) - 2.0 * phi2(H, T, tau) + phi2(H, T, tau - delta)) /
               (delta * delta);
    }
    if (tau >= 2.0 * delta) {
        const double z = delta / tau;
        const double lr = std::log(tau / T);
        const double tail = even_tail_over_2h(H, z) / ((2.0 * H + 1.0) * (2.0 * H + 2.0));
        return (-em(2.0 * H, lr) - std::exp(2.0 * H * lr) * tail) / (1.0 - 2.0 * H);
    }
    const double x[3] = {tau + delta, tau, std::fabs(tau - delta)};
    const double w[3] = {1.0, -2.0, 1.0};
    double s = 0.0;
    for (int j = 0; j < 3; ++j)
        if (x[j] > 0.0) s += w[j] * x[j] * x[j] * em(2.0 * H, std::log(x[j] / T));
    return ((2.0 * H + 3.0) - s / (delta * delta)) /
           ((1.0 - 2.0 * H) * (2.0 * H + 1.0) * (2.0 * H + 2.0));
}

double c_upsilon(const SfbmParams& p, double delta, double tau) {
    return c_upsilon(p.hurst, p.horizon, delta, tau);
}

double interval_cov(double hurst, double horizon, double a, double b, double c, double d) {
    if (!(b > a) || !(d > c)) throw ConfigError("interval_cov requires non-empty intervals");
    const double H = hurst, T = horizon;
    double s = phi2(H, T, b - c) - phi2(H, T, b - d) - phi2(H, T, a - c) + phi2(H, T, a - d);
    return s / ((b - a) * (d - c));
}

RegimeReport check_regime(const std::vector<double>& betas, const std::vector<double>& sigmas,
                          const std::vector<double>& gammas, const SfbmParams& factor,
                          const std::vector<SfbmParams>& idio, double tau, double delta) {
    const std::size_t n = betas.size();
    if (n == 0 || sigmas.size() != n || gammas.size() != n || idio.size() != n)
        throw ConfigError("check_regime: inconsistent per-stock vectors");
    if (!(tau > 0.0) || !(delta > 0.0)) throw ConfigError("tau and delta must be positive");
    RegimeReport r;
    r.tau = tau;
    r.delta = delta;
    const double inf = std::numeric_limits<double>::infinity();
    const double z = delta / tau;
    const double H = factor.hurst, T = factor.horizon;
    const double gH = g_h(H, z);
    double beta_bar = 0.0;
    r.gamma_ok = true;
    r.beta_upper_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
        double g = std::fabs(gammas[i]);
        double b = std::fabs(betas[i]);
        r.gamma_margin.push_back(g > 0.0 ? 1.0 / g : inf);
        r.beta_upper_margin.push_back(b > 0.0 ? sigmas[i] / b : inf);
        if (g > 1.0) r.gamma_ok = false;
        if (b > sigmas[i]) r.beta_upper_ok = false;
        const double Hi = idio[i].hurst;
        double rhs = idio[i].intermittency_sq / factor.intermittency_sq *
                     std::pow(tau / T, 2.0 * (Hi - H)) * g_h(Hi, z) / gH;
        r.gamma_ineq_margin.push_back(g > 0.0 ? rhs / g : inf);
        double s4 = std::pow(sigmas[i], 4);
        r.beta_ineq_margin.push_back(b > 0.0 ? s4 * rhs / std::pow(b, 4) : inf);
        beta_bar += betas[i] / double(n);
    }
    r.subindex_lhs = std::pow(std::fabs(beta_bar), 4.0 / 3.0) * double(n);
    r.subindex_ok = r.subindex_lhs >= kDominanceFactor * r.subindex_threshold;
    return r;
}

RegimeReport check_regime(const NestedModelSpec& spec, double tau, double delta) {
    return check_regime(spec.betas, spec.sigmas, spec.gammas, spec.factor_mode, spec.idio_modes,
                        tau, delta);
}

AppendixCConstants appendix_c_constants(double horizon, double delta) {
    if (!(horizon > delta) || !(delta > 0.0)) throw ConfigError("need 0 < delta < horizon");
    const double L = std::log(horizon / delta);
    const double d2 = delta * delta;
    const double pi2 = std::numbers::pi * std::numbers::pi;
    AppendixCConstants c;
    c.v1 = d2 * (2.0 * L * L + 6.0 * L + 7.0);
    c.v2 = delta * (L + 1.5);
    c.v3 = d2 * (2.0 * L * L + 6.0 * L + 17.0 / 3.0 - pi2 / 9.0);
    // V1 + 2 V2^2 - 2 V3 simplifies exactly
    c.c0 = d2 * (1.0 / 6.0 + 2.0 * pi2 / 9.0);
    c.var_upsilon = delta * c.v2;
    return c;
}

double small_intermittency_error_ratio(double lambda_sq, double horizon, double delta) {
    auto c = appendix_c_constants(horizon, delta);
    return lambda_sq * c.c0 / (4.0 * c.var_upsilon);
}

ErrorRatioEstimate small_intermittency_error_ratio_mc(double hurst, double lambda_sq, double horizon,
                                                      double delta, std::size_t max_lag,
                                                      const ErrorRatioBudget& budget,
                                                      std::uint64_t seed) {
    if (!(hurst >= SfbmParams::h_min))
        throw ConfigError("Monte-Carlo error ratio requires H >= 1e-3 (the H = 0 case is exact)");
    if (budget.n_paths < 2 || budget.n_periods <= max_lag + 2 || budget.substeps < 2)
        throw ConfigError("error ratio budget too small");
    SfbmParams mode(hurst, lambda_sq, horizon);
    const std::size_t m = budget.substeps, np = budget.n_periods;
    const double dt = delta / double(m);
    GridSpec grid{np * m, dt};
    if (double(np) * delta > horizon) throw ConfigError("n_periods * delta exceeds horizon");
    CirculantSampler sampler(mode, grid);
    const double lam = std::sqrt(lambda_sq);
    const double mu = sfbm_mean(mode);
    Eigen::MatrixXd ratios(budget.n_paths, max_lag + 1);
    for (std::size_t pth = 0; pth < budget.n_paths; ++pth) {
        auto w = sampler.draw(derive_seed(seed, pth));
        std::vector<double> ups(np), th(np);
        for (std::size_t t = 0; t < np; ++t) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t k = 0; k < m; ++k) {
                double zz = (w[t * m + k] - mu) / lam;
                s1 += zz * dt;
                s2 += zz * zz * dt;
            }
            ups[t] = s1;
            th[t] = s2 - s1 * s1 / delta;
        }
        auto acov = [&](const std::vector<double>& y, std::size_t lag) {
            double mean = 0.0;
            for (double v : y) mean += v;
            mean /= double(y.size());
            double s = 0.0;
            for (std::size_t t = 0; t + lag < y.size(); ++t) s += (y[t] - mean) * (y[t + lag] - mean);
            return s / double(y.size());
        };
        for (std::size_t k = 0; k <= max_lag; ++k)
            ratios(pth, k) = lambda_sq * acov(th, k) / (4.0 * acov(ups, k));
    }
    ErrorRatioEstimate e;
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double mean = ratios.col(k).mean();
        double var = (ratios.col(k).array() - mean).square().sum() / double(budget.n_paths - 1);
        e.lags.push_back(double(k) * delta);
        e.ratio.push_back(mean);
        e.stderr_.push_back(std::sqrt(var / double(budget.n_paths)));
    }
    return e;
}

}  // namespace nsfbm
