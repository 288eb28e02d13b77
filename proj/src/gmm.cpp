#include "nsfbm/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nsfbm/errors.hpp"
#include "nsfbm/rng.hpp"
#include "nsfbm/sampler.hpp"
#include "nsfbm/theory.hpp"
#include "nsfbm/vol_estimators.hpp"

namespace nsfbm {

void GmmConfig::validate() const {
    if (q < 8) throw ConfigError("GMM lag exponent count Q must be >= 8");
    if (!(h_lo > 0.0 && h_hi < 0.5 && h_lo < h_hi)) throw ConfigError("invalid H search bounds");
    if (grid_points < 3) throw ConfigError("grid_points must be >= 3");
    if (jackknife_blocks == 1 || jackknife_blocks < 0)
        throw ConfigError("jackknife_blocks must be 0 or >= 2");
    if (bootstrap_paths == 1 || bootstrap_paths < 0)
        throw ConfigError("bootstrap_paths must be 0 or >= 2");
}

bool HurstFit::has_flag(const std::string& f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
}

std::vector<std::size_t> lag_set(int q, std::size_t n) {
    std::vector<std::size_t> lags;
    for (int k = 0; k <= q; ++k) {
        auto l = std::size_t(std::floor(std::pow(2.0, double(k) / 4.0)));
        if (4 * l >= n) break;
        if (lags.empty() || lags.back() != l) lags.push_back(l);
    }
    return lags;
}

std::vector<double> empirical_autocov(const std::vector<double>& y,
                                      const std::vector<std::size_t>& lags) {
    const std::size_t n = y.size();
    if (n < 2) throw DataError("autocovariance needs at least 2 values");
    double m = mean_of(y);
    std::vector<double> c;
    c.reserve(lags.size());
    for (auto l : lags) {
        if (2 * l >= n) throw ConfigError("lag must be below n/2");
        double s = 0.0;
        for (std::size_t t = 0; t + l < n; ++t) s += (y[t] - m) * (y[t + l] - m);
        c.push_back(s / double(n));
    }
    return c;
}

std::vector<double> model_moments(double hurst, std::size_t n, double delta,
                                  const std::vector<std::size_t>& lags, bool demean_correction) {
    const double T = double(n) * delta;
    std::vector<double> m;
    m.reserve(lags.size());
    double vbar = demean_correction ? interval_cov(hurst, T, 0.0, T, 0.0, T) : 0.0;
    for (auto l : lags) {
        double c = c_upsilon(hurst, T, delta, double(l) * delta);
        if (demean_correction) {
            double span = double(n - l) * delta;
            double r = interval_cov(hurst, T, 0.0, span, 0.0, T);
            c = double(n - l) / double(n) * (c - 2.0 * r + vbar);
        }
        m.push_back(c);
    }
    return m;
}

double profile_objective(const std::vector<double>& c_hat, const std::vector<double>& m,
                         const std::vector<std::size_t>& lags, bool nugget, double* lambda_sq,
                         double* nugget_value) {
    const std::size_t K = c_hat.size();
    auto sse = [&](double a, double eta) {
        double s = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            double r = c_hat[k] - a * m[k] - (lags[k] <= 2 ? eta : 0.0);
            s += r * r;
        }
        return s;
    };
    double smm = 0.0, scm = 0.0, sme = 0.0, sce = 0.0, see = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        smm += m[k] * m[k];
        scm += c_hat[k] * m[k];
        if (nugget && lags[k] <= 2) {
            sme += m[k];
            sce += c_hat[k];
            see += 1.0;
        }
    }
    double a = 0.0, eta = 0.0;
    if (!nugget) {
        a = smm > 0.0 ? std::max(0.0, scm / smm) : 0.0;
    } else {
        // candidates on the nonnegative orthant
        double best = std::numeric_limits<double>::infinity();
        auto consider = [&](double aa, double ee) {
            if (aa < 0.0 || ee < 0.0) return;
            double j = sse(aa, ee);
            if (j < best) {
                best = j;
                a = aa;
                eta = ee;
            }
        };
        double det = smm * see - sme * sme;
        if (std::fabs(det) > 1e-300)
            consider((scm * see - sce * sme) / det, (smm * sce - sme * scm) / det);
        consider(smm > 0.0 ? scm / smm : 0.0, 0.0);
        consider(0.0, see > 0.0 ? sce / see : 0.0);
        consider(0.0, 0.0);
    }
    if (lambda_sq) *lambda_sq = a;
    if (nugget_value) *nugget_value = eta;
    return sse(a, eta);
}

namespace {

struct Fitted {
    double h, a, eta, j;
    bool non_identifiable;
};

Fitted search(const std::vector<double>& c_hat, const std::vector<std::size_t>& lags,
              std::size_t n, const GmmConfig& cfg, double delta) {
    auto eval = [&](double h, double* a, double* eta) {
        auto m = model_moments(h, n, delta, lags, cfg.demean_correction);
        return profile_objective(c_hat, m, lags, cfg.nugget, a, eta);
    };
    const int G = cfg.grid_points;
    std::vector<double> hs(G), js(G);
    std::size_t best = 0;
    for (int i = 0; i < G; ++i) {
        hs[i] = cfg.h_lo + (cfg.h_hi - cfg.h_lo) * double(i) / double(G - 1);
        js[i] = eval(hs[i], nullptr, nullptr);
        if (js[i] < js[best]) best = std::size_t(i);
    }
    double jmax = *std::max_element(js.begin(), js.end());
    double scale = 0.0;
    for (double c : c_hat) scale += c * c;
    bool flat = (jmax - js[best]) <= 1e-12 * std::max(scale, 1e-300);

    double lo = hs[best > 0 ? best - 1 : 0];
    double hi = hs[std::min<std::size_t>(best + 1, G - 1)];
    const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double f1 = eval(x1, nullptr, nullptr), f2 = eval(x2, nullptr, nullptr);
    while (hi - lo > cfg.tol) {
        if (f1 <= f2) {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - gr * (hi - lo);
            f1 = eval(x1, nullptr, nullptr);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + gr * (hi - lo);
            f2 = eval(x2, nullptr, nullptr);
        }
    }
    double h = 0.5 * (lo + hi);
    Fitted f{};
    f.j = eval(h, &f.a, &f.eta);
    f.h = h;
    // keep the grid point if the bracket refinement did not improve on it
    if (js[best] < f.j) {
        f.h = hs[best];
        f.j = eval(f.h, &f.a, &f.eta);
    }
    f.non_identifiable = flat;
    return f;
}

std::vector<std::size_t> fit_lags(const GmmConfig& cfg, std::size_t n) {
    auto lags = lag_set(cfg.q, n);
    if (cfg.nugget) lags.insert(lags.begin(), 0);
    if (lags.size() < 3) throw DataError("series too short for the GMM lag set");
    return lags;
}

void annotate(HurstFit& fit, const GmmConfig& cfg) {
    if (fit.hurst - cfg.h_lo < 1e-3) fit.flags.push_back("at_lower_bound");
    if (cfg.h_hi - fit.hurst < 1e-3) fit.flags.push_back("at_upper_bound");
    if (fit.lambda_sq == 0.0) fit.flags.push_back("lambda_sq_clamped");
}

}  // namespace

HurstFit fit_hurst_moments(const std::vector<double>& c_hat, const std::vector<std::size_t>& lags,
                           std::size_t n, const GmmConfig& cfg, double delta) {
    cfg.validate();
    if (c_hat.size() != lags.size()) throw ConfigError("moment/lag length mismatch");
    auto f = search(c_hat, lags, n, cfg, delta);
    HurstFit fit;
    fit.hurst = f.h;
    fit.lambda_sq = f.a;
    fit.nugget = f.eta;
    fit.objective = f.j;
    fit.lags = lags;
    fit.n = n;
    if (f.non_identifiable) fit.flags.push_back("non_identifiable");
    annotate(fit, cfg);
    return fit;
}

HurstFit fit_hurst(const std::vector<double>& y, const GmmConfig& cfg, double delta) {
    cfg.validate();
    const std::size_t n = y.size();
    if (n < 256) throw DataError("fit_hurst requires at least 256 values");
    if (!(delta > 0.0)) throw ConfigError("delta must be positive");
    for (double v : y)
        if (!std::isfinite(v)) throw DataError("fit_hurst: non-finite value in series");
    if (variance_of(y) <= 0.0) throw DataError("fit_hurst: degenerate (zero-variance) series");
    auto lags = fit_lags(cfg, n);
    auto c_hat = empirical_autocov(y, lags);
    HurstFit fit = fit_hurst_moments(c_hat, lags, n, cfg, delta);

    const int B = cfg.jackknife_blocks;
    if (B >= 2) {
        std::vector<double> hb(B), ab(B);
        GmmConfig sub = cfg;
        sub.jackknife_blocks = 0;
#pragma omp parallel for schedule(dynamic)
        for (int b = 0; b < B; ++b) {
            std::size_t lo = n * std::size_t(b) / std::size_t(B);
            std::size_t hi = n * std::size_t(b + 1) / std::size_t(B);
            auto kept = [&](std::size_t t) { return t < lo || t >= hi; };
            double m = 0.0;
            std::size_t cnt = 0;
            for (std::size_t t = 0; t < n; ++t)
                if (kept(t)) {
                    m += y[t];
                    ++cnt;
                }
            m /= double(cnt);
            std::vector<double> c(lags.size());
            for (std::size_t k = 0; k < lags.size(); ++k) {
                double s = 0.0;
                for (std::size_t t = 0; t + lags[k] < n; ++t)
                    if (kept(t) && kept(t + lags[k])) s += (y[t] - m) * (y[t + lags[k]] - m);
                c[k] = s / double(cnt);
            }
            auto f = search(c, lags, n, sub, delta);
            hb[b] = f.h;
            ab[b] = f.a;
        }
        auto jk = [B](const std::vector<double>& v) {
            double m = 0.0;
            for (double x : v) m += x;
            m /= double(B);
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            return std::sqrt(double(B - 1) / double(B) * s);
        };
        fit.se_hurst = jk(hb);
        fit.se_hurst_jackknife = fit.se_hurst;
        fit.se_lambda_sq = jk(ab);
    }
    if (cfg.bootstrap_paths >= 2) {
        fit.se_hurst_bootstrap =
            bootstrap_se_hurst(fit, variance_of(y), cfg, delta, cfg.bootstrap_paths, cfg.bootstrap_seed);
        fit.se_hurst = fit.se_hurst_bootstrap;
    }
    return fit;
}

double bootstrap_se_hurst(const HurstFit& fit, double sample_variance, const GmmConfig& cfg,
                          double delta, int n_paths, std::uint64_t seed) {
    if (n_paths < 2) throw ConfigError("bootstrap needs at least 2 paths");
    const std::size_t n = fit.n;
    const double T = double(n) * delta;
    const std::size_t half = CirculantSampler::embedding_size_for(n) / 2;
    std::vector<double> cov(half + 1);
    for (std::size_t k = 0; k <= half; ++k)
        cov[k] = fit.lambda_sq * c_upsilon(fit.hurst, T, delta, double(k) * delta);
    // lag-0 excess is treated as white measurement noise; nugget mode adds it at lags <= 2
    if (cfg.nugget) {
        for (std::size_t k = 0; k <= std::min<std::size_t>(2, half); ++k) cov[k] += fit.nugget;
    }
    cov[0] = std::max(cov[0], sample_variance);
    CirculantSampler cs(cov, GridSpec{n, delta});
    GmmConfig sub = cfg;
    sub.jackknife_blocks = 0;
    sub.bootstrap_paths = 0;
    std::vector<double> h(std::size_t(n_paths), std::numeric_limits<double>::quiet_NaN());
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < n_paths; ++b) {
        std::vector<double> y(n);
        cs.draw_centered(derive_seed(seed, std::uint64_t(b)), y.data());
        try {
            h[std::size_t(b)] = fit_hurst(y, sub, delta).hurst;
        } catch (const std::exception&) {
        }
    }
    std::vector<double> ok;
    for (double x : h)
        if (std::isfinite(x)) ok.push_back(x);
    if (ok.size() < 2) throw NumericalError("bootstrap: fewer than 2 successful refits");
    return std::sqrt(variance_of(ok) * double(ok.size()) / double(ok.size() - 1));
}

MultiLagsetResult fit_hurst_multi_lagset(const std::vector<double>& series, const GmmConfig& base,
                                         double delta, int q_lo, int q_hi, int n_trials,
                                         std::uint64_t seed) {
    if (q_lo < 8 || q_hi < q_lo || n_trials < 1) throw ConfigError("invalid multi-lagset settings");
    auto eng = make_engine(seed, 0);
    std::uniform_int_distribution<int> qd(q_lo, q_hi);
    MultiLagsetResult r;
    for (int i = 0; i < n_trials; ++i) r.qs.push_back(qd(eng));
    std::vector<double> h(std::size_t(n_trials), std::numeric_limits<double>::quiet_NaN());
    std::vector<std::string> errs(static_cast<std::size_t>(n_trials));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_trials; ++i) {
        GmmConfig c = base;
        c.q = r.qs[std::size_t(i)];
        c.jackknife_blocks = 0;
        try {
            h[std::size_t(i)] = fit_hurst(series, c, delta).hurst;
        } catch (const std::exception& e) {
            errs[std::size_t(i)] = e.what();
        }
    }
    for (double x : h)
        if (std::isfinite(x)) r.hursts.push_back(x);
    r.n_success = r.hursts.size();
    if (r.n_success < 5)
        throw NumericalError("multi-lagset fit: fewer than 5 successful trials");
    r.mean = mean_of(r.hursts);
    double var = variance_of(r.hursts) * double(r.n_success) / double(r.n_success - 1);
    r.sd = std::sqrt(var);
    double half = 1.96 * r.sd / std::sqrt(double(r.n_success));
    r.lo = r.mean - half;
    r.hi = r.mean + half;
    return r;
}

}  // namespace nsfbm
