#include "nsfbm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "nsfbm/errors.hpp"
#include "nsfbm/rng.hpp"

namespace nsfbm {

namespace fs = std::filesystem;

void PlotTable::add(double xv, double yv, double lo, double hi) {
    x.push_back(xv);
    y.push_back(yv);
    y_lo.push_back(lo);
    y_hi.push_back(hi);
}

const std::vector<std::string>& experiment_ids() {
    static const std::vector<std::string> ids = {"stocks_vs_index", "index_vs_factor_H",
                                                 "convergence_in_N", "idio_recovery",
                                                 "empirical_factor_vs_Ns", "empirical_idio"};
    return ids;
}

json experiment_defaults(const std::string& id, bool paper) {
    const double L = paper ? 32768 : 8192;
    const int s = paper ? 256 : 64;
    if (id == "stocks_vs_index")
        return {{"n_stocks", 100},
                {"n_periods", paper ? 16384 : 8192},
                {"horizon", paper ? 4096.0 : 8192.0},
                {"subdivisions", s},
                {"hurst", 0.11},
                {"lambda_sq", 0.0025},
                {"idio_hurst", 0.01},
                {"idio_lambda_sq", 0.0025},
                {"gamma", 0.2},
                {"sigma", -1.0},
                {"n_draws", paper ? 50 : 10},
                {"keep_fine", !paper},
                {"q", 32},
                {"bins", 30}};
    if (id == "index_vs_factor_H")
        return {{"n_stocks", paper ? 200 : 100},
                {"n_periods", L},
                {"horizon", L},
                {"subdivisions", s},
                {"hursts", {0.05, 0.08, 0.11, 0.15, 0.2}},
                {"lambda_sq", 0.001},
                {"idio_hurst", 0.01},
                {"idio_lambda_sq", 0.001},
                {"gamma", 0.01},
                {"sigma", 1.0},
                {"n_reps", paper ? 20 : 5},
                {"q", 32}};
    if (id == "convergence_in_N")
        return {{"n_values", paper ? json{8, 16, 32, 64, 128, 200} : json{8, 32, 128}},
                {"n_periods", L},
                {"horizon", L},
                {"subdivisions", s},
                {"hursts", {0.08, 0.11}},
                {"lambda_sq", 0.001},
                {"idio_hurst", 0.01},
                {"idio_lambda_sq", 0.001},
                {"gamma", 0.01},
                {"sigma", 1.0},
                {"n_reps", 20},
                {"keep_fine", !paper},
                {"q", 32}};
    if (id == "idio_recovery")
        return {{"n_stocks", paper ? 300 : 64},
                {"n_periods", L},
                {"horizon", L},
                {"subdivisions", s},
                {"hurst", 0.1},
                {"idio_hursts", {0.03, 0.07}},
                {"lambda_sq", 0.01},
                {"idio_lambda_sq", 0.01},
                {"gamma", 0.1},
                {"sigma", 1.0},
                {"keep_fine", !paper},
                {"q", 32},
                {"bins", 30}};
    if (id == "empirical_factor_vs_Ns")
        return {{"data_dir", ""},
                {"index_file", ""},
                {"date_from", ""},
                {"date_to", ""},
                {"ns", {10, 25, 50, 100, 200, 300}},
                {"n_combinations", paper ? 20 : 5},
                {"n_lagsets", paper ? 20 : 5},
                {"q_lo", 28},
                {"q_hi", 40}};
    if (id == "empirical_idio")
        return {{"data_dir", ""},
                {"index_file", ""},
                {"date_from", ""},
                {"date_to", ""},
                {"q", 32},
                {"bins", 30}};
    throw ConfigError("unknown experiment id '" + id + "'");
}

namespace {

bool same_kind(const json& a, const json& b) {
    if (a.is_number_integer()) return b.is_number_integer();
    if (a.is_number()) return b.is_number();
    if (a.is_boolean()) return b.is_boolean();
    if (a.is_string()) return b.is_string();
    if (a.is_array()) {
        if (!b.is_array() || b.empty()) return false;
        for (const auto& x : b)
            if (!x.is_number()) return false;
        return true;
    }
    return false;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("infeasible experiment parameter: " + what);
}

void check_synthetic(const json& p) {
    auto num = [&](const char* k) { return p.at(k).get<double>(); };
    if (p.contains("n_stocks")) require(num("n_stocks") >= 3, "n_stocks >= 3");
    require(num("subdivisions") >= 2, "subdivisions >= 2");
    require(num("n_periods") >= 256, "n_periods >= 256");
    require(num("horizon") > 0, "horizon > 0");
    auto hcheck = [&](double h, const std::string& k) {
        require(h >= SfbmParams::h_min && h <= 0.5 - SfbmParams::h_eps, k + " in [1e-3, 0.499]");
    };
    for (const char* k : {"hurst", "idio_hurst"})
        if (p.contains(k)) hcheck(num(k), k);
    for (const char* k : {"hursts", "idio_hursts"})
        if (p.contains(k))
            for (const auto& h : p.at(k)) hcheck(h.get<double>(), k);
    for (const char* k : {"lambda_sq", "idio_lambda_sq"}) require(num(k) > 0, std::string(k) + " > 0");
    for (const char* k : {"n_draws", "n_reps"})
        if (p.contains(k)) require(num(k) >= 1, std::string(k) + " >= 1");
    if (p.contains("n_values"))
        for (const auto& n : p.at("n_values"))
            require(n.get<double>() >= 3 && n.get<double>() == std::floor(n.get<double>()),
                    "n_values entries are integers >= 3");
    require(num("q") >= 8, "q >= 8");
    if (p.value("keep_fine", false)) {
        double n = p.contains("n_stocks") ? num("n_stocks") : 0.0;
        if (p.contains("n_values"))
            for (const auto& v : p.at("n_values")) n = std::max(n, v.get<double>());
        double gb = n * num("n_periods") * num("subdivisions") * 8.0 / 1e9;
        require(gb <= 3.0, "fine-grid panel needs " + std::to_string(gb) +
                               " GB (limit 3 GB); set keep_fine to false or shrink the grid");
    }
}

}  // namespace

json resolve_parameters(const ExperimentSpec& spec) {
    json p = experiment_defaults(spec.id, spec.paper_scale);
    if (!spec.overrides.is_object()) throw ConfigError("overrides must be an object");
    for (auto it = spec.overrides.begin(); it != spec.overrides.end(); ++it) {
        if (!p.contains(it.key()))
            throw ConfigError("experiment " + spec.id + ": unknown override '" + it.key() + "'");
        if (!same_kind(p.at(it.key()), it.value()))
            throw ConfigError("experiment " + spec.id + ": override '" + it.key() + "' should be " +
                              std::string(p.at(it.key()).type_name()) + " like the default " +
                              p.at(it.key()).dump());
        p[it.key()] = it.value();
    }
    if (p.contains("subdivisions")) check_synthetic(p);
    if (p.contains("data_dir")) {
        require(!p.at("data_dir").get<std::string>().empty(),
                "data_dir must name an OHLC directory for " + spec.id);
        if (p.contains("q_lo")) {
            require(p.at("q_lo").get<int>() >= 8 && p.at("q_hi").get<int>() >= p.at("q_lo").get<int>(),
                    "8 <= q_lo <= q_hi");
            require(p.at("n_combinations").get<int>() >= 1 && p.at("n_lagsets").get<int>() >= 5,
                    "n_combinations >= 1 and n_lagsets >= 5");
        }
    }
    return p;
}

ExperimentSpec experiment_spec_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("experiment config must be an object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const std::vector<std::string> keys = {"schema", "id", "seed", "paper_scale", "out",
                                                      "overrides"};
        if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
            throw ConfigError("experiment config: unknown key '" + it.key() + "'");
    }
    if (j.value("schema", "") != "nsfbm.experiment/1")
        throw ConfigError("experiment config: schema must be 'nsfbm.experiment/1'");
    ExperimentSpec s;
    try {
        s.id = j.at("id").get<std::string>();
        s.seed = j.value("seed", std::uint64_t(0));
        s.paper_scale = j.value("paper_scale", false);
        s.out_dir = j.value("out", std::string());
        if (j.contains("overrides")) s.overrides = j.at("overrides");
    } catch (const json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    if (std::find(experiment_ids().begin(), experiment_ids().end(), s.id) == experiment_ids().end())
        throw ConfigError("unknown experiment id '" + s.id + "'");
    return s;
}

PlotTable histogram(const std::vector<double>& v, double lo, double hi, int bins) {
    if (bins < 1 || !(hi > lo)) throw ConfigError("histogram needs bins >= 1 and hi > lo");
    std::vector<double> c(std::size_t(bins), 0.0);
    const double w = (hi - lo) / bins;
    for (double x : v) {
        int k = int(std::floor((x - lo) / w));
        c[std::size_t(std::clamp(k, 0, bins - 1))] += 1.0;
    }
    PlotTable t;
    for (int k = 0; k < bins; ++k)
        t.add(lo + (k + 0.5) * w, v.empty() ? 0.0 : c[std::size_t(k)] / (double(v.size()) * w));
    return t;
}

namespace {

struct Stats {
    double mean = 0.0, sd = 0.0, lo = 0.0, hi = 0.0;
};

Stats stats(const std::vector<double>& v) {
    Stats s;
    if (v.empty()) return s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = v.size() > 1 ? std::sqrt(ss / double(v.size() - 1)) : 0.0;
    double half = 1.96 * s.sd / std::sqrt(double(v.size()));
    s.lo = s.mean - half;
    s.hi = s.mean + half;
    return s;
}

json stats_json(const std::vector<double>& v) {
    auto s = stats(v);
    return {{"mean", s.mean}, {"sd", s.sd}, {"ci_lo", s.lo}, {"ci_hi", s.hi}, {"n", v.size()}};
}

NestedModelSpec synth_spec(const json& p, std::size_t n, double hurst, double idio_hurst,
                           std::uint64_t beta_seed) {
    const std::size_t L = p.at("n_periods").get<std::size_t>();
    const double T = p.at("horizon").get<double>();
    SfbmParams f(hurst, p.at("lambda_sq").get<double>(), T);
    SfbmParams id(idio_hurst, p.at("idio_lambda_sq").get<double>(), T);
    auto spec = make_homogeneous_spec(n, f, id, p.at("gamma").get<double>(), p.at("sigma").get<double>(),
                                      L, p.at("subdivisions").get<std::size_t>(), 1.0, beta_seed);
    spec.allow_long_sample = T < double(L);
    return spec;
}

GmmConfig gmm_from(const json& p) {
    GmmConfig c;
    if (p.contains("q")) c.q = p.at("q").get<int>();
    return c;
}

double fit_index(const Eigen::VectorXd& qv, const GmmConfig& c, HurstFit* out = nullptr) {
    VolSeries s;
    s.values.assign(qv.data(), qv.data() + qv.size());
    s.floor_count = apply_floor(s.values, &s.floor_level);
    auto f = fit_hurst(prepare_logvol(s, true), c, 1.0);
    if (out) *out = f;
    return f.hurst;
}

ReturnsPanel first_stocks(const ReturnsPanel& p, std::size_t n) {
    ReturnsPanel q;
    q.n_stocks = n;
    q.n_periods = p.n_periods;
    q.subdivisions = p.subdivisions;
    q.period = p.period;
    q.provenance = p.provenance;
    q.tickers.assign(p.tickers.begin(), p.tickers.begin() + long(n));
    if (p.has_fine()) q.fine_returns = p.fine_returns.topRows(long(n));
    q.daily_returns = p.daily_returns.topRows(long(n));
    q.stock_qv = p.stock_qv.topRows(long(n));
    q.residual_qv = p.residual_qv.topRows(long(n));
    q.factor_qv = p.factor_qv;
    q.factor_daily = p.factor_daily;
    return q;
}

std::string key_of(double h) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", h);
    return buf;
}

ResultBundle stocks_vs_index(const json& p, std::uint64_t seed) {
    const auto N = p.at("n_stocks").get<std::size_t>();
    const int draws = p.at("n_draws").get<int>();
    const GmmConfig gmm = gmm_from(p);
    std::vector<double> stock_h, index_h, factor_h, gammas, beta_corr;
    PlotTable per_draw;
    for (int d = 0; d < draws; ++d) {
        auto spec = synth_spec(p, N, p.at("hurst").get<double>(), p.at("idio_hurst").get<double>(),
                               derive_seed(seed, 2 * std::uint64_t(d)));
        SimOptions so;
        so.keep_fine = p.at("keep_fine").get<bool>();
        so.indexes = {IndexSpec::first_n(N)};
        auto panel = simulate_panel(spec, derive_seed(seed, 2 * std::uint64_t(d) + 1), so);
        CalibrationOptions co;
        co.gmm = gmm;
        co.gmm.jackknife_blocks = 0;
        auto rep = run_calibration(panel, co);
        for (const auto& f : rep.idio_fits) stock_h.push_back(f.hurst);
        for (double g : rep.gamma_hat) gammas.push_back(g);
        HurstFit ix;
        index_h.push_back(fit_index(panel.index_qv[0], gmm, &ix));
        factor_h.push_back(rep.factor_fit.hurst);
        beta_corr.push_back(correlation(rep.beta_hat, spec.betas));
        per_draw.add(d, ix.hurst, ix.hurst - 1.96 * ix.se_hurst, ix.hurst + 1.96 * ix.se_hurst);
    }
    const int bins = p.at("bins").get<int>();
    ResultBundle b;
    b.tables["stocks_hist"] = histogram(stock_h, 0.0, 0.3, bins);
    b.tables["index_hist"] = histogram(index_h, 0.0, 0.3, bins);
    b.tables["index_by_draw"] = per_draw;
    b.summary = {{"median_stock_H", median_of(stock_h)},
                 {"index_H", stats_json(index_h)},
                 {"factor_H", stats_json(factor_h)},
                 {"gamma_hat", stats_json(gammas)},
                 {"beta_corr", stats_json(beta_corr)},
                 {"index_H_draws", index_h},
                 {"factor_H_draws", factor_h}};
    return b;
}

ResultBundle index_vs_factor_H(const json& p, std::uint64_t seed) {
    const auto N = p.at("n_stocks").get<std::size_t>();
    const int reps = p.at("n_reps").get<int>();
    const GmmConfig gmm = gmm_from(p);
    ResultBundle b;
    PlotTable t, diag;
    json rows = json::array();
    std::uint64_t k = 0;
    for (const auto& hj : p.at("hursts")) {
        const double H = hj.get<double>();
        std::vector<double> hs;
        for (int r = 0; r < reps; ++r, ++k) {
            auto spec = synth_spec(p, N, H, p.at("idio_hurst").get<double>(), derive_seed(seed, 2 * k));
            SimOptions so;
            so.keep_fine = false;
            so.indexes = {IndexSpec::first_n(N)};
            auto panel = simulate_panel(spec, derive_seed(seed, 2 * k + 1), so);
            GmmConfig c = gmm;
            c.jackknife_blocks = 0;
            hs.push_back(fit_index(panel.index_qv[0], c));
        }
        auto s = stats(hs);
        t.add(H, s.mean, s.lo, s.hi);
        diag.add(H, H);
        rows.push_back({{"H", H}, {"index_H", stats_json(hs)}, {"draws", hs}});
    }
    b.tables["index_H"] = t;
    b.tables["bisector"] = diag;
    b.summary = {{"by_H", rows}};
    return b;
}

ResultBundle convergence_in_N(const json& p, std::uint64_t seed) {
    std::vector<std::size_t> ns;
    for (const auto& v : p.at("n_values")) ns.push_back(v.get<std::size_t>());
    std::sort(ns.begin(), ns.end());
    const std::size_t nmax = ns.back();
    const int reps = p.at("n_reps").get<int>();
    const GmmConfig gmm = gmm_from(p);
    const bool fine = p.at("keep_fine").get<bool>();
    ResultBundle b;
    json rows = json::array();
    std::uint64_t k = 0;
    for (const auto& hj : p.at("hursts")) {
        const double H = hj.get<double>();
        std::vector<std::vector<double>> ih(ns.size()), fh(ns.size()), ise(ns.size());
        int monotone = 0;
        for (int r = 0; r < reps; ++r, ++k) {
            auto spec = synth_spec(p, nmax, H, p.at("idio_hurst").get<double>(), derive_seed(seed, 2 * k));
            SimOptions so;
            so.keep_fine = fine;
            for (auto n : ns) so.indexes.push_back(IndexSpec::first_n(n));
            auto panel = simulate_panel(spec, derive_seed(seed, 2 * k + 1), so);
            bool mono = true;
            for (std::size_t j = 0; j < ns.size(); ++j) {
                HurstFit f;
                fit_index(panel.index_qv[j], gmm, &f);
                ih[j].push_back(f.hurst);
                ise[j].push_back(f.se_hurst);
                if (j > 0 && ih[j].back() < ih[j - 1].back()) mono = false;
                CalibrationOptions co;
                co.gmm = gmm;
                co.gmm.jackknife_blocks = 0;
                auto rep = ns[j] == nmax ? run_calibration(panel, co)
                                         : run_calibration(first_stocks(panel, ns[j]), co);
                fh[j].push_back(rep.factor_fit.hurst);
            }
            monotone += mono;
        }
        PlotTable ti, tf;
        json per_n = json::array();
        for (std::size_t j = 0; j < ns.size(); ++j) {
            auto si = stats(ih[j]), sf = stats(fh[j]);
            ti.add(double(ns[j]), si.mean, si.lo, si.hi);
            tf.add(double(ns[j]), sf.mean, sf.lo, sf.hi);
            per_n.push_back({{"N", ns[j]},
                             {"index_H", stats_json(ih[j])},
                             {"factor_H", stats_json(fh[j])},
                             {"index_jackknife_se_mean", stats(ise[j]).mean},
                             {"index_jackknife_se_draws", ise[j]},
                             {"index_H_draws", ih[j]},
                             {"factor_H_draws", fh[j]}});
        }
        b.tables["index_H_" + key_of(H)] = ti;
        b.tables["factor_H_" + key_of(H)] = tf;
        rows.push_back({{"H", H}, {"monotone_reps", monotone}, {"n_reps", reps}, {"by_N", per_n}});
    }
    b.summary = {{"by_H", rows}};
    return b;
}

ResultBundle idio_recovery(const json& p, std::uint64_t seed) {
    const auto N = p.at("n_stocks").get<std::size_t>();
    const GmmConfig gmm = gmm_from(p);
    const int bins = p.at("bins").get<int>();
    ResultBundle b;
    json rows = json::array();
    std::uint64_t k = 0;
    for (const auto& hj : p.at("idio_hursts")) {
        const double Hi = hj.get<double>();
        auto spec = synth_spec(p, N, p.at("hurst").get<double>(), Hi, derive_seed(seed, 2 * k));
        SimOptions so;
        so.keep_fine = p.at("keep_fine").get<bool>();
        auto panel = simulate_panel(spec, derive_seed(seed, 2 * k + 1), so);
        ++k;
        CalibrationOptions co;
        co.gmm = gmm;
        co.gmm.jackknife_blocks = 0;
        auto rep = run_calibration(panel, co);
        std::vector<double> hs;
        for (const auto& f : rep.idio_fits) hs.push_back(f.hurst);
        b.tables["idio_hist_" + key_of(Hi)] = histogram(hs, 0.0, 0.3, bins);
        rows.push_back({{"idio_hurst", Hi},
                        {"median_H_i", median_of(hs)},
                        {"H_i", stats_json(hs)},
                        {"factor_H", rep.factor_fit.hurst},
                        {"gamma_mean", stats(rep.gamma_hat).mean}});
    }
    b.summary = {{"by_idio_hurst", rows}};
    return b;
}

OhlcPanel load_empirical(const json& p, std::vector<std::string>& warnings) {
    DateRange range{p.at("date_from").get<std::string>(), p.at("date_to").get<std::string>()};
    auto data = load_ohlc_dir(p.at("data_dir").get<std::string>(), range);
    for (const auto& e : data.excluded) warnings.push_back("excluded " + e);
    return data;
}

// Index GK variances aligned to the panel dates (dates[1..]).
std::vector<double> index_series(const json& p, const OhlcPanel& data) {
    const auto file = p.at("index_file").get<std::string>();
    if (file.empty()) return {};
    auto f = read_ohlc_csv(file, "index");
    std::map<std::string, double> gk;
    for (const auto& bar : f.bars) gk[bar.date] = garman_klass_bar(bar);
    std::vector<double> out;
    for (std::size_t t = 1; t < data.dates.size(); ++t) {
        auto it = gk.find(data.dates[t]);
        if (it == gk.end()) throw DataError("index file lacks date " + data.dates[t]);
        out.push_back(it->second);
    }
    return out;
}

ResultBundle empirical_factor_vs_Ns(const json& p, std::uint64_t seed) {
    std::vector<std::string> warnings;
    auto data = load_empirical(p, warnings);
    const std::size_t avail = data.panel.n_stocks;
    const int combos = p.at("n_combinations").get<int>();
    const int lagsets = p.at("n_lagsets").get<int>();
    ResultBundle b;
    PlotTable t;
    json rows = json::array();
    auto eng = make_engine(seed, 0);
    for (const auto& nj : p.at("ns")) {
        std::size_t ns = nj.get<std::size_t>();
        if (ns > avail) {
            warnings.push_back("N_s = " + std::to_string(ns) + " exceeds the " + std::to_string(avail) +
                               " available tickers; using " + std::to_string(avail));
            ns = avail;
        }
        if (ns < 3) continue;
        std::vector<double> means;
        for (int c = 0; c < combos; ++c) {
            std::vector<std::size_t> idx(avail);
            std::iota(idx.begin(), idx.end(), 0);
            std::shuffle(idx.begin(), idx.end(), eng);
            idx.resize(ns);
            std::sort(idx.begin(), idx.end());
            Eigen::MatrixXd x(long(ns), long(data.panel.n_periods)), q(long(ns), long(data.panel.n_periods));
            for (std::size_t i = 0; i < ns; ++i) {
                x.row(long(i)) = data.panel.daily_returns.row(long(idx[i]));
                q.row(long(i)) = data.panel.stock_qv.row(long(idx[i]));
            }
            auto beta = estimate_beta(x);
            auto fqv = factor_qv_proxy(q, beta.beta);
            auto r = fit_hurst_multi_lagset(prepare_logvol(fqv, true), GmmConfig{}, 1.0,
                                            p.at("q_lo").get<int>(), p.at("q_hi").get<int>(), lagsets,
                                            derive_seed(seed, std::uint64_t(ns) * 1000 + std::uint64_t(c)));
            means.push_back(r.mean);
        }
        auto s = stats(means);
        t.add(double(ns), s.mean, s.lo, s.hi);
        rows.push_back({{"N_s", ns}, {"factor_H", stats_json(means)}});
    }
    b.tables["factor_H_vs_Ns"] = t;
    json index = nullptr;
    auto ix = index_series(p, data);
    if (!ix.empty()) {
        VolSeries s;
        s.values = ix;
        s.floor_count = apply_floor(s.values, &s.floor_level);
        index = to_json(fit_hurst(prepare_logvol(s, true), GmmConfig{}, 1.0));
        PlotTable ref;
        ref.add(0.0, index.at("hurst").get<double>());
        b.tables["index_H"] = ref;
    }
    b.summary = {{"by_Ns", rows},
                 {"index_fit", index},
                 {"n_tickers", avail},
                 {"n_periods", data.panel.n_periods},
                 {"dropped_periods", data.dropped_periods},
                 {"inner_loop", "n_lagsets = " + std::to_string(lagsets) +
                                    " lag sets per combination, Q ~ U[q_lo, q_hi]"},
                 {"warnings", warnings}};
    return b;
}

ResultBundle empirical_idio(const json& p, std::uint64_t seed) {
    std::vector<std::string> warnings;
    auto data = load_empirical(p, warnings);
    const int bins = p.at("bins").get<int>();
    CalibrationOptions co;
    co.gmm = gmm_from(p);
    co.seed = seed;
    ResultBundle b;
    json modes = json::object();
    auto record = [&](const std::string& name, const CalibrationReport& rep) {
        std::vector<double> hs;
        for (const auto& f : rep.idio_fits) hs.push_back(f.hurst);
        std::size_t low = std::count_if(hs.begin(), hs.end(), [](double h) { return h < 0.05; });
        b.tables["idio_hist_" + name] = histogram(hs, 0.0, 0.5, bins);
        auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
        modes[name] = {{"median_H_i", median_of(hs)},
                       {"fraction_below_0.05", double(low) / double(hs.size())},
                       {"factor_H", rep.factor_fit.hurst},
                       {"omega_reference_corr", opt(rep.diagnostics.omega_reference_corr)}};
    };
    auto rep = run_calibration(data.panel, co);
    record("proxy", rep);
    auto ix = index_series(p, data);
    if (!ix.empty()) {
        co.factor_source.mode = FactorSource::Mode::external;
        co.factor_source.external = ix;
        co.factor_source.label = "index_file";
        record("external", run_calibration(data.panel, co));
    }
    b.summary = {{"modes", modes},
                 {"n_tickers", data.panel.n_stocks},
                 {"n_periods", data.panel.n_periods},
                 {"dropped_periods", data.dropped_periods},
                 {"warnings", warnings}};
    return b;
}

}  // namespace

ResultBundle run_experiment(const ExperimentSpec& spec) {
    json p = resolve_parameters(spec);
    ResultBundle b;
    if (spec.id == "stocks_vs_index")
        b = stocks_vs_index(p, spec.seed);
    else if (spec.id == "index_vs_factor_H")
        b = index_vs_factor_H(p, spec.seed);
    else if (spec.id == "convergence_in_N")
        b = convergence_in_N(p, spec.seed);
    else if (spec.id == "idio_recovery")
        b = idio_recovery(p, spec.seed);
    else if (spec.id == "empirical_factor_vs_Ns")
        b = empirical_factor_vs_Ns(p, spec.seed);
    else
        b = empirical_idio(p, spec.seed);
    json results = std::move(b.summary);
    b.summary = {{"schema", "nsfbm.bundle/1"},
                 {"experiment", spec.id},
                 {"seed", spec.seed},
                 {"paper_scale", spec.paper_scale},
                 {"version", kVersion},
                 {"parameters", p},
                 {"results", results}};
    for (const auto& [name, _] : b.tables) b.summary["tables"].push_back(name + ".csv");
    return b;
}

void write_bundle(const ResultBundle& b, const std::string& dir) {
    fs::create_directories(dir);
    write_json_file(b.summary, (fs::path(dir) / "summary.json").string());
    for (const auto& [name, t] : b.tables) {
        std::ofstream f(fs::path(dir) / (name + ".csv"));
        if (!f) throw DataError("cannot write table " + name);
        f << "x,y,y_lo,y_hi\n";
        for (std::size_t k = 0; k < t.x.size(); ++k)
            f << format_double(t.x[k]) << ',' << format_double(t.y[k]) << ','
              << format_double(t.y_lo[k]) << ',' << format_double(t.y_hi[k]) << '\n';
    }
}

}  // namespace nsfbm
