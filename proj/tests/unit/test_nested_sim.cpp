#include <cmath>

#include "doctest.h"
#include "nsfbm/errors.hpp"
#include "nsfbm/nested_sim.hpp"
#include "nsfbm/theory.hpp"
#include "nsfbm/vol_estimators.hpp"
#include "oracles.hpp"

using namespace nsfbm;

namespace {

NestedModelSpec small_spec(double lambda_sq, std::size_t n, std::size_t L, std::size_t s) {
    SfbmParams f(0.11, lambda_sq, double(L)), id(0.01, lambda_sq, double(L));
    return make_homogeneous_spec(n, f, id, 0.2, -1.0, L, s, 1.0, 5);
}

}  // namespace

TEST_CASE("beta and sigma draws follow their beta laws") {
    auto d = sample_beta_sigma(4000, {kBetaA, kBetaB}, {kSigmaA, kSigmaB}, 3);
    auto se = [](const std::vector<double>& v) { return oracle::sd(v) / std::sqrt(double(v.size())); };
    CHECK(std::fabs(oracle::mean(d.betas) - kBetaA / (kBetaA + kBetaB)) < 3 * se(d.betas));
    CHECK(std::fabs(oracle::mean(d.sigmas) - kSigmaA / (kSigmaA + kSigmaB)) < 3 * se(d.sigmas));
    auto e = sample_beta_sigma(4000, {kBetaA, kBetaB}, {kSigmaA, kSigmaB}, 3);
    CHECK(e.betas == d.betas);
    CHECK_THROWS_AS(sample_beta_sigma(3, {0.0, 1.0}, {1.0, 1.0}, 3), ConfigError);
}

TEST_CASE("spec validation") {
    auto s = small_spec(0.0025, 4, 64, 4);
    CHECK_NOTHROW(s.validate());
    s.n_periods = 128;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    s.allow_long_sample = true;
    CHECK_NOTHROW(s.validate());
    s.sigmas[1] = 0.0;
    CHECK_THROWS_AS(s.validate(), ConfigError);
    auto t = small_spec(0.0025, 4, 64, 4);
    t.betas.pop_back();
    CHECK_THROWS_AS(t.validate(), ConfigError);
}

TEST_CASE("index spec validation") {
    CHECK_NOTHROW(IndexSpec::first_n(5).validate(5));
    CHECK_THROWS_AS(IndexSpec::first_n(6).validate(5), ConfigError);
    IndexSpec d{{0, 0}, {0.5, 0.5}};
    CHECK_THROWS_AS(d.validate(3), ConfigError);
    IndexSpec w{{0, 1}, {0.5, 0.6}};
    CHECK_THROWS_AS(w.validate(3), ConfigError);
}

TEST_CASE("residual shift normalizes the residual volatility") {
    double g = 0.3, vf = 0.4, mf = -0.2, vi = 0.1;
    double s = residual_shift(g, vf, mf, vi);
    CHECK(g * mf + s + 0.5 * (g * g * vf + vi) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("panel determinism and shapes") {
    auto spec = small_spec(0.0025, 5, 128, 8);
    auto a = simulate_panel(spec, 11), b = simulate_panel(spec, 11), c = simulate_panel(spec, 12);
    CHECK(a.fine_returns == b.fine_returns);
    CHECK(a.stock_qv == b.stock_qv);
    CHECK(a.fine_returns != c.fine_returns);
    CHECK(a.fine_returns.rows() == 5);
    CHECK(a.fine_returns.cols() == 128 * 8);
    CHECK(a.daily_returns.cols() == 128);
    CHECK(a.factor_qv.size() == 128);
    SimOptions lean;
    lean.keep_fine = false;
    auto d = simulate_panel(spec, 11, lean);
    CHECK_FALSE(d.has_fine());
    CHECK(d.stock_qv == a.stock_qv);
    // period aggregates are sums of the fine grid
    double sum = 0, sq = 0;
    for (int k = 0; k < 8; ++k) {
        double r = a.fine_returns(2, 8 * 7 + k);
        sum += r;
        sq += r * r;
    }
    CHECK(a.daily_returns(2, 7) == doctest::Approx(sum).epsilon(1e-12));
    CHECK(a.stock_qv(2, 7) == doctest::Approx(sq).epsilon(1e-12));
}

TEST_CASE("constant-volatility limit") {
    auto spec = small_spec(1e-6, 6, 512, 32);
    auto p = simulate_panel(spec, 4);
    for (std::size_t i = 0; i < 6; ++i) {
        double m = p.stock_qv.row(long(i)).mean();
        double want = spec.betas[i] * spec.betas[i] + spec.sigmas[i] * spec.sigmas[i];
        CHECK(m == doctest::Approx(want).epsilon(0.03));
    }
}

TEST_CASE("factor and residual noise are uncorrelated; volatilities normalized") {
    auto spec = small_spec(0.01, 4, 1024, 16);
    SimOptions so;
    so.keep_vol_paths = true;
    std::vector<double> corrs, ef, ei;
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        auto p = simulate_panel(spec, seed, so);
        const auto n = p.fine_returns.cols();
        std::vector<double> f(p.factor_returns.data(), p.factor_returns.data() + n);
        std::vector<double> e(static_cast<std::size_t>(n));
        for (long k = 0; k < n; ++k) e[std::size_t(k)] = p.fine_returns(1, k) - spec.betas[1] * f[std::size_t(k)];
        corrs.push_back(oracle::pearson(f, e));
        double sf = 0, si = 0;
        for (long k = 0; k < n; ++k) {
            sf += std::exp(p.factor_logvol[k]);
            si += std::exp(spec.gammas[1] * p.factor_logvol[k] + p.residual_logvol(1, k));
        }
        ef.push_back(sf / double(n));
        ei.push_back(si / double(n));
    }
    double n = double(spec.n_periods * spec.subdivisions);
    for (double c : corrs) CHECK(std::fabs(c) < 3.5 / std::sqrt(n));
    CHECK(std::fabs(oracle::mean(ef) - 1.0) < 3.5 * oracle::sd(ef) / std::sqrt(8.0) + 1e-3);
    CHECK(std::fabs(oracle::mean(ei) - 1.0) < 3.5 * oracle::sd(ei) / std::sqrt(8.0) + 1e-3);
}

TEST_CASE("QV additivity improves with subdivisions") {
    auto gap = [](std::size_t s) {
        auto spec = small_spec(0.0025, 3, 256, s);
        auto p = simulate_panel(spec, 8);
        double num = 0, den = 0;
        for (long t = 0; t < 256; ++t) {
            double b = spec.betas[0];
            double d = p.stock_qv(0, t) - b * b * p.factor_qv[t] - p.residual_qv(0, t);
            num += d * d;
            den += p.stock_qv(0, t) * p.stock_qv(0, t);
        }
        return std::sqrt(num / den);
    };
    double g8 = gap(8), g128 = gap(128);
    CHECK(g128 < g8);
    CHECK(g128 < 0.2);
}

TEST_CASE("index QVs accumulated during simulation match build_index") {
    auto spec = small_spec(0.0025, 6, 128, 8);
    SimOptions so;
    so.indexes = {IndexSpec::first_n(4), IndexSpec{{1, 5}, {0.25, 0.75}}};
    auto p = simulate_panel(spec, 21, so);
    REQUIRE(p.index_qv.size() == 2);
    for (std::size_t j = 0; j < 2; ++j) {
        auto ix = build_index(p, so.indexes[j], &spec.betas);
        auto qv = realized_qv(ix.returns, p.subdivisions, p.period);
        for (long t = 0; t < 128; t += 17) CHECK(p.index_qv[j][t] == doctest::Approx(qv.values[std::size_t(t)]).epsilon(1e-10));
        CHECK(p.index_beta_bar[j] == doctest::Approx(*ix.beta_bar).epsilon(1e-12));
    }
    SimOptions lean;
    lean.keep_fine = false;
    auto q = simulate_panel(spec, 21, lean);
    CHECK_THROWS_AS(build_index(q, IndexSpec::first_n(2)), DataError);
}
