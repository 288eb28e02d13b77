// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance [--only 1,5,9] [--workdir DIR] [--cli PATH]
#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdarg>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "nsfbm/data_io.hpp"
#include "nsfbm/experiments.hpp"
#include "nsfbm/pipeline.hpp"
#include "nsfbm/rng.hpp"
#include "nsfbm/sampler.hpp"
#include "nsfbm/theory.hpp"
#include "oracles.hpp"

using namespace nsfbm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double gtilde_oracle(double H, double z, double T) {
    double tau = 1.0 / z;
    return (1.0 / (2 * H * (1 - 2 * H)) - oracle::c_upsilon(H, T, 1.0, tau)) / std::pow(tau / T, 2 * H);
}

// 1. closed forms against 2-D quadrature
Outcome crit1() {
    auto t0 = std::chrono::steady_clock::now();
    double eg = 0, et = 0, ec = 0;
    const std::vector<double> taus = {0, 0.25, 0.5, 1, 2, 4, 16, 64, 256, 1024};
    for (int i = 0; i < 10; ++i) {
        double H = 0.02 + 0.05 * i;
        for (int k = 0; k < 10; ++k) {
            double z = 0.4 * (k + 1);
            eg = std::max(eg, std::fabs(g_h(H, z) / oracle::g_h(H, z) - 1));
            et = std::max(et, std::fabs(g_tilde_h(H, z) / gtilde_oracle(H, z, 40.0) - 1));
            ec = std::max(ec, std::fabs(c_upsilon(H, 4096, 1.0, taus[k]) / oracle::c_upsilon(H, 4096, 1.0, taus[k]) - 1));
        }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = eg <= 1e-6 && et <= 1e-6 && ec <= 1e-6 && secs < 30;
    return {ok, fmt("max rel err g_H %.1e, g~_H %.1e, C_Ups %.1e over 10x10 grids; %.1f s", eg, et, ec, secs)};
}

// 2. error-ratio constants
Outcome crit2() {
    auto c = appendix_c_constants(5000, 1.0);
    double c0 = 1.0 / 6 + 2 * std::numbers::pi * std::numbers::pi / 9;
    double v2 = std::log(5000.0) + 1.5;
    double r0 = small_intermittency_error_ratio(0.05, 5000, 1.0);
    double r0_ref = 0.05 * c0 / (4 * v2);
    auto six = [](double a, double b) { return std::fabs(a / b - 1) < 5e-7; };
    bool ok = six(c.c0, c0) && six(c.v2, v2) && six(r0, r0_ref) && std::fabs(c.c0 - 2.36) < 0.005 &&
              std::fabs(c.v2 - 10.0) < 0.05 && std::fabs(r0 - 0.003) < 0.0001;
    return {ok, fmt("C(0)/D^2 = %.9f (2.36), V2 = %.9f (10.02), R(0) = %.9f (0.003)", c.c0, c.v2, r0)};
}

// 3. sampler law
Outcome crit3() {
    auto t0 = std::chrono::steady_clock::now();
    SfbmParams p(0.11, 0.0025, 4096);
    GridSpec g{4096, 1.0};
    CirculantSampler s(p, g);
    const double mu = sfbm_mean(p);
    const std::vector<std::size_t> lags = {1, 8, 64, 512};
    std::vector<std::vector<double>> c(lags.size());
    std::vector<double> ev;
    std::vector<double> x(g.n_points);
    for (int r = 0; r < 200; ++r) {
        s.draw_centered(derive_seed(2024, r), x.data());
        double e = 0;
        for (double v : x) e += std::exp(v + mu);
        ev.push_back(e / double(x.size()));
        for (std::size_t j = 0; j < lags.size(); ++j) {
            double a = 0;
            for (std::size_t t = 0; t + lags[j] < x.size(); ++t) a += x[t] * x[t + lags[j]];
            c[j].push_back(a / double(x.size() - lags[j]));
        }
    }
    bool ok = true;
    std::string d;
    for (std::size_t j = 0; j < lags.size(); ++j) {
        double se = oracle::sd(c[j]) / std::sqrt(200.0);
        double z = (oracle::mean(c[j]) - sfbm_cov(p, double(lags[j]))) / se;
        ok = ok && std::fabs(z) <= 3;
        d += fmt("lag %zu z=%+.2f; ", lags[j], z);
    }
    double ze = (oracle::mean(ev) - 1.0) / (oracle::sd(ev) / std::sqrt(200.0));
    ok = ok && std::fabs(ze) <= 3;
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && secs < 120;
    return {ok, d + fmt("E[e^w] z=%+.2f; %.1f s", ze, secs)};
}

// 4. small-intermittency variance of a two-mode volatility sum
Outcome crit4() {
    auto t0 = std::chrono::steady_clock::now();
    const double T = 4096, delta = 1.0;
    const int sub = 32, n_paths = 10000;
    const std::vector<double> taus = {4, 16, 64};
    const std::size_t n = std::size_t((taus.back() + delta) * sub);
    GridSpec g{n, delta / sub};
    SfbmParams m1(0.11, 0.0025, T), m2(0.01, 0.0025, T);
    CirculantSampler s1(m1, g, VolSampling::cell_average), s2(m2, g, VolSampling::cell_average);
    const double mu1 = s1.mean(), mu2 = s2.mean();
    // b = (1,1) as specified, and b = (1,1)/sqrt(2)
    std::vector<std::vector<double>> d_raw(taus.size(), std::vector<double>(n_paths));
#pragma omp parallel
    {
        std::vector<double> a(n), b(n);
#pragma omp for schedule(static)
        for (int r = 0; r < n_paths; ++r) {
            s1.draw_centered(derive_seed(404, 2 * std::uint64_t(r)), a.data());
            s2.draw_centered(derive_seed(404, 2 * std::uint64_t(r) + 1), b.data());
            auto sigma = [&](double t) {
                std::size_t k0 = std::size_t(t * sub);
                double m = 0;
                for (std::size_t k = k0; k < k0 + std::size_t(sub); ++k)
                    m += (std::exp(a[k] + mu1) + std::exp(b[k] + mu2)) * g.dt;
                return m;
            };
            double l0 = std::log(sigma(0.0));
            for (std::size_t j = 0; j < taus.size(); ++j) d_raw[j][std::size_t(r)] = std::log(sigma(taus[j])) - l0;
        }
    }
    bool ok = true;
    std::string d;
    double worst_norm = 0;
    for (std::size_t j = 0; j < taus.size(); ++j) {
        double var = oracle::sd(d_raw[j]);
        var *= var;
        double v = small_intermittency_V({{1.0, m1}, {1.0, m2}}, taus[j], delta);
        // (sum b^2)^2 = 4 for b = (1,1)
        double v_norm = v / 4.0;
        ok = ok && std::fabs(var / v - 1) <= 0.05;
        worst_norm = std::max(worst_norm, std::fabs(var / v_norm - 1));
        d += fmt("tau %g: MC %.3e V %.3e; ", taus[j], var, v);
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ok = ok && secs < 600;
    return {ok, d + fmt("V/(sum b^2)^2 off by at most %.1f%%; %d paths; %.1f s", 100 * worst_norm, n_paths, secs)};
}

// 5. GMM recovery
Outcome crit5() {
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t L = 1 << 15;
    SfbmParams p(0.11, 0.0025, double(L));
    CirculantSampler s(p, GridSpec{L, 1.0}, VolSampling::cell_average);
    std::vector<double> hs;
    int covered = 0, covered20 = 0;
    // seeds 0..19 decide; on failure 20..119 are added for context
    for (std::uint64_t seed = 0; seed < 120; ++seed) {
        auto y = s.draw(derive_seed(500, seed));
        GmmConfig c;
        c.bootstrap_paths = 50;
        c.bootstrap_seed = derive_seed(501, seed);
        auto f = fit_hurst(y, c, 1.0);
        hs.push_back(f.hurst);
        covered += std::fabs(f.hurst - 0.11) <= 1.96 * f.se_hurst;
        if (seed == 19) {
            covered20 = covered;
            if (std::fabs(oracle::mean(hs) - 0.11) <= 0.03 && covered20 >= 18) break;
        }
    }
    std::vector<double> first(hs.begin(), hs.begin() + 20);
    double m = oracle::mean(first);
    bool ok = std::fabs(m - 0.11) <= 0.03 && covered20 >= 18;
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string d = fmt("mean H %.4f (sd %.4f), 95%% CI covers 0.11 in %d/20", m, oracle::sd(first), covered20);
    if (!ok) d += fmt("; context over 120 seeds: mean %.4f, coverage %d/120", oracle::mean(hs), covered);
    return {ok, d + fmt("; %.1f s", secs)};
}

// 6. pipeline recovery at desk scale
Outcome crit6() {
    auto t0 = std::chrono::steady_clock::now();
    ExperimentSpec e;
    e.id = "stocks_vs_index";
    e.seed = 600;
    e.overrides = {{"n_draws", 20}, {"subdivisions", 64}};
    auto b = run_experiment(e);
    const auto& r = b.summary["results"];
    double med = r["median_stock_H"].get<double>();
    double fh = r["factor_H"]["mean"].get<double>();
    double bc_mean = r["beta_corr"]["mean"].get<double>();
    double gm = r["gamma_hat"]["mean"].get<double>();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    double per_draw = secs / 20;
    bool ok = med <= 0.04 && fh >= 0.08 && fh <= 0.14 && bc_mean >= 0.99 && std::fabs(gm - 0.2) <= 0.05 &&
              per_draw < 1200;
    return {ok, fmt("20 panels N=100 L=2^13 s=2^6: median H_i %.4f, mean factor H %.4f (sd %.4f), "
                    "corr(beta) mean %.4f, mean gamma %.4f; %.1f s per panel",
                    med, fh, r["factor_H"]["sd"].get<double>(), bc_mean, gm, per_draw)};
}

// 7. index Hurst estimate as the basket grows
Outcome crit7() {
    auto t0 = std::chrono::steady_clock::now();
    ExperimentSpec e;
    e.id = "convergence_in_N";
    e.seed = 700;
    e.overrides = {{"hursts", {0.11}}, {"n_reps", 20}};
    auto b = run_experiment(e);
    const auto& row = b.summary["results"]["by_H"][0];
    int mono = row["monotone_reps"].get<int>();
    const auto& last = row["by_N"].back();
    int covered = 0;
    for (std::size_t k = 0; k < last["index_H_draws"].size(); ++k) {
        double h = last["index_H_draws"][k].get<double>(), se = last["index_jackknife_se_draws"][k].get<double>();
        covered += std::fabs(h - 0.11) <= 1.96 * se;
    }
    std::string means;
    for (const auto& n : row["by_N"])
        means += fmt("%d:%.3f ", n["N"].get<int>(), n["index_H"]["mean"].get<double>());
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool ok = mono >= 17 && covered >= 18;
    return {ok, fmt("monotone in %d/20 replications; N=128 jackknife CI covers 0.11 in %d/20; mean index H %s; %.0f s",
                    mono, covered, means.c_str(), secs)};
}

// 8. factor QV proxy convergence in N
Outcome crit8() {
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t L = 1 << 13, s = 64;
    SfbmParams f(0.11, 0.0025, double(L)), id(0.01, 0.0025, double(L));
    auto spec = make_homogeneous_spec(200, f, id, 0.2, -1.0, L, s, 1.0, 801);
    auto panel = simulate_panel(spec, 802);
    std::vector<double> med;
    std::string d;
    for (std::size_t n : {25u, 50u, 100u, 200u}) {
        ReturnsPanel q;
        q.n_stocks = n;
        q.n_periods = L;
        q.subdivisions = s;
        q.fine_returns = panel.fine_returns.topRows(long(n));
        Eigen::MatrixXd daily = panel.daily_returns.topRows(long(n));
        auto beta = estimate_beta(daily).beta;
        auto fq = factor_qv_ols(q, beta);
        std::vector<double> err;
        for (std::size_t t = 0; t < L; ++t) err.push_back(std::fabs(fq.values[t] / panel.factor_qv[long(t)] - 1));
        med.push_back(oracle::median(err));
        d += fmt("N=%zu %.4f; ", n, med.back());
    }
    bool mono = true;
    for (std::size_t k = 1; k < med.size(); ++k) mono = mono && med[k] <= med[k - 1];
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {mono && med.back() <= 0.05, "median |<f^>/<f> - 1|: " + d + fmt("%.0f s", secs)};
}

// 9. property suites
Outcome crit9() {
    std::mt19937_64 eng(9);
    std::uniform_real_distribution<double> u(0.9, 1.1), sc(0.01, 100);
    // Garman-Klass scale invariance
    bool gk_pow2 = true;
    double gk_rel = 0;
    for (int k = 0; k < 10000; ++k) {
        double o = 50 * u(eng), c = 50 * u(eng);
        double h = std::max(o, c) * (1 + 0.05 * u(eng)), l = std::min(o, c) * (1 - 0.05 * u(eng));
        double base = garman_klass_bar({"d", o, h, l, c});
        double p2 = std::ldexp(1.0, int(sc(eng)) % 40 - 20);
        gk_pow2 = gk_pow2 && garman_klass_bar({"d", p2 * o, p2 * h, p2 * l, p2 * c}) == base;
        double a = sc(eng);
        gk_rel = std::max(gk_rel, std::fabs(garman_klass_bar({"d", a * o, a * h, a * l, a * c}) - base) / base);
    }
    // gaussianize at n = 10^4
    const std::size_t n = 10000;
    auto z = normal_vector(90, 0, n), e = normal_vector(90, 1, n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = z[i] - 0.7 * std::exp(e[i]);
    auto g = gaussianize(x);
    bool ranks = true;
    std::vector<std::size_t> ix(n), ig(n);
    std::iota(ix.begin(), ix.end(), 0);
    ig = ix;
    std::sort(ix.begin(), ix.end(), [&](auto a, auto b) { return x[a] < x[b]; });
    std::sort(ig.begin(), ig.end(), [&](auto a, auto b) { return g.values[a] < g.values[b]; });
    ranks = ix == ig;
    auto sv = g.values;
    std::sort(sv.begin(), sv.end());
    double ks = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double F = oracle::phi(sv[i]);
        ks = std::max({ks, std::fabs(F - double(i) / n), std::fabs(F - double(i + 1) / n)});
    }
    double ks_bound = 2 * 1.36 / std::sqrt(double(n));
    // rank-one beta recovery
    double beta_err = 0;
    for (std::size_t N : {5u, 50u, 300u}) {
        auto b = normal_vector(91, N, N);
        for (double& v : b) v = 0.7 + 0.2 * v;
        Eigen::MatrixXd c(static_cast<long>(N), static_cast<long>(N));
        for (std::size_t i = 0; i < N; ++i)
            for (std::size_t j = 0; j < N; ++j) c(long(i), long(j)) = b[i] * b[j] + (i == j ? 0.5 + 0.01 * double(i % 7) : 0.0);
        auto est = estimate_beta_from_cov(c);
        for (std::size_t i = 0; i < N; ++i) beta_err = std::max(beta_err, std::fabs(est.beta[i] - b[i]));
    }
    // fit_hurst mean shift
    double shift_err = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        auto y = sample_sfbm_path(SfbmParams(0.11, 0.0025, 8192), GridSpec{8192, 1.0}, 950 + seed,
                                  VolSampling::cell_average).values;
        GmmConfig c;
        c.jackknife_blocks = 0;
        double h0 = fit_hurst(y, c, 1.0).hurst;
        for (double s : {-5.0, 1.0, 40.0}) {
            auto w = y;
            for (double& v : w) v += s;
            shift_err = std::max(shift_err, std::fabs(fit_hurst(w, c, 1.0).hurst - h0));
        }
    }
    bool ok = gk_pow2 && gk_rel <= 1e-12 && ranks && ks <= ks_bound && beta_err <= 1e-8 && shift_err <= 1e-8;
    return {ok, fmt("GK: power-of-two scaling bit-exact %s, max rel change %.1e; gaussianize ranks %s, KS %.4f <= %.4f; "
                    "beta max err %.1e; fit_hurst shift max |dH| %.1e",
                    gk_pow2 ? "yes" : "no", gk_rel, ranks ? "preserved" : "BROKEN", ks, ks_bound, beta_err, shift_err)};
}

// 10. calibrate on an exported OHLC directory
Outcome crit10(const fs::path& work, const std::string& cli) {
    auto t0 = std::chrono::steady_clock::now();
    const std::size_t N = 50, L = 1024;
    SfbmParams f(0.11, 0.0025, double(L)), id(0.01, 0.0025, double(L));
    auto spec = make_homogeneous_spec(N, f, id, 0.2, -1.0, L, 32, 1.0, 1001);
    auto panel = simulate_panel(spec, 1002);
    fs::path ohlc = work / "ohlc", out = work / "report";
    fs::remove_all(ohlc);
    fs::remove_all(out);
    export_panel_ohlc(panel, ohlc.string());
    json rep;
    if (!cli.empty()) {
        std::string cmd = "\"" + cli + "\" calibrate --ohlc-dir \"" + ohlc.string() + "\" --seed 3 --out \"" +
                          out.string() + "\" > \"" + (work / "calibrate.log").string() + "\" 2>&1";
        int rc = std::system(cmd.c_str());
        if (rc != 0) return {false, fmt("calibrate exited with status %d", rc)};
        rep = read_json_file((out / "report.json").string());
    } else {
        auto data = load_ohlc_dir(ohlc.string());
        rep = to_json(run_calibration(data.panel));
    }
    std::vector<std::string> missing;
    auto need = [&](bool ok, const std::string& what) {
        if (!ok) missing.push_back(what);
    };
    for (const char* k : {"schema", "version", "tickers", "n_periods", "period", "beta_hat", "beta_iterations",
                          "beta_residual", "factor_source", "factor_fit", "gamma_method", "gamma_hat", "sigma_hat",
                          "idio_fits", "regime", "diagnostics"})
        need(rep.contains(k) && !rep[k].is_null(), k);
    if (missing.empty()) {
        need(rep["tickers"].size() == N, "tickers");
        need(rep["n_periods"].get<std::size_t>() == L, "n_periods");
        for (const char* k : {"beta_hat", "gamma_hat", "sigma_hat", "idio_fits"}) need(rep[k].size() == N, k);
        for (const auto& v : rep["beta_hat"]) need(v.is_number() && std::isfinite(v.get<double>()), "beta_hat value");
        for (const auto& v : rep["gamma_hat"]) need(v.is_number() && std::isfinite(v.get<double>()), "gamma_hat value");
        for (const auto& v : rep["sigma_hat"]) need(v.is_number() && v.get<double>() > 0, "sigma_hat value");
        auto fit_ok = [](const json& fj) {
            // boundary fits are reported through flags, not omitted
            return fj["hurst"].is_number() && fj["hurst"].get<double>() > 0 && fj["hurst"].get<double>() < 0.5 &&
                   fj["se_hurst"].is_number() && fj["se_hurst"].get<double>() >= 0 && !fj["lags"].empty() &&
                   fj["flags"].is_array();
        };
        need(fit_ok(rep["factor_fit"]), "factor_fit");
        for (const auto& fj : rep["idio_fits"]) need(fit_ok(fj), "idio_fits entry");
        need(rep["regime"]["gamma_margin"].size() == N, "regime.gamma_margin");
        need(rep["diagnostics"]["residual_floor_counts"].size() == N, "diagnostics.residual_floor_counts");
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::set<std::string> uniq(missing.begin(), missing.end());
    std::string miss;
    for (const auto& m : uniq) miss += m + " ";
    if (!uniq.empty()) return {false, "incomplete report: " + miss};
    // files load in lexicographic ticker order; S<k> is stock k-1
    std::vector<double> truth;
    for (const auto& t : rep["tickers"]) truth.push_back(spec.betas[std::stoul(t.get<std::string>().substr(1)) - 1]);
    return {true, fmt("%zu tickers x %zu days exported, report complete (factor H %.3f, corr(beta) %.4f); %.1f s",
                      N, L + 1, rep["factor_fit"]["hurst"].get<double>(),
                      oracle::pearson(rep["beta_hat"].get<std::vector<double>>(), truth), secs)};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::string only, workdir = (fs::temp_directory_path() / "nsfbm_acceptance").string(), cli;
    app.add_option("--only", only, "comma-separated criterion numbers");
    app.add_option("--workdir", workdir, "scratch directory");
    app.add_option("--cli", cli, "nsfbm executable for criterion 10");
    CLI11_PARSE(app, argc, argv);
    std::set<int> pick;
    {
        std::stringstream ss(only);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty()) pick.insert(std::stoi(item));
    }
    fs::create_directories(workdir);
    const std::vector<std::function<Outcome()>> crits = {crit1, crit2, crit3, crit4, crit5, crit6, crit7, crit8, crit9,
                                                         [&] { return crit10(workdir, cli); }};
    int failed = 0;
    for (std::size_t k = 0; k < crits.size(); ++k) {
        int id = int(k) + 1;
        if (!pick.empty() && !pick.count(id)) continue;
        Outcome o;
        try {
            o = crits[k]();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %2d: %s  %s\n", id, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
