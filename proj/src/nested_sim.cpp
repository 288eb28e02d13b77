#include "nsfbm/nested_sim.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <random>
#include <set>

#include "nsfbm/errors.hpp"
#include "nsfbm/rng.hpp"
#include "nsfbm/sampler.hpp"
#include "nsfbm/theory.hpp"

namespace nsfbm {

IndexSpec IndexSpec::equal_weight(std::vector<std::size_t> members) {
    IndexSpec s;
    s.members = std::move(members);
    s.weights.assign(s.members.size(), 1.0 / double(s.members.size()));
    return s;
}

IndexSpec IndexSpec::first_n(std::size_t n) {
    std::vector<std::size_t> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = i;
    return equal_weight(std::move(m));
}

void IndexSpec::validate(std::size_t n_stocks) const {
    if (members.empty() || members.size() != weights.size())
        throw ConfigError("index needs matching non-empty members and weights");
    std::set<std::size_t> seen;
    double sum = 0.0;
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (members[k] >= n_stocks)
            throw ConfigError("index member " + std::to_string(members[k]) + " out of range");
        if (!seen.insert(members[k]).second) throw ConfigError("index members must be distinct");
        if (!(weights[k] > 0.0)) throw ConfigError("index weights must be positive");
        sum += weights[k];
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw ConfigError("index weights must sum to 1");
}

double residual_shift(double gamma, double factor_var, double factor_mean, double idio_var) {
    return -gamma * factor_mean - 0.5 * (gamma * gamma * factor_var + idio_var);
}

ReturnsPanel simulate_panel(const NestedModelSpec& spec, std::uint64_t seed, const SimOptions& opt) {
    spec.validate();
    for (const auto& ix : opt.indexes) ix.validate(spec.n_stocks);
    const std::size_t N = spec.n_stocks, L = spec.n_periods, s = spec.subdivisions;
    const std::size_t n = L * s;
    const double dt = spec.period / double(s);
    const double sdt = std::sqrt(dt);
    const GridSpec grid{n, dt};

    ReturnsPanel p;
    p.n_stocks = N;
    p.n_periods = L;
    p.subdivisions = s;
    p.period = spec.period;
    p.provenance = Provenance::synthetic;
    for (std::size_t i = 0; i < N; ++i) p.tickers.push_back("S" + std::to_string(i + 1));

    CirculantSampler fs(spec.factor_mode, grid, spec.vol_sampling);
    std::vector<double> omega = fs.draw(derive_seed(seed, 0));
    std::vector<double> fret = normal_vector(seed, 1, n);
    for (std::size_t k = 0; k < n; ++k) fret[k] *= std::exp(0.5 * omega[k]) * sdt;

    p.factor_qv = Eigen::VectorXd::Zero(long(L));
    p.factor_daily = Eigen::VectorXd::Zero(long(L));
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t k = t * s; k < (t + 1) * s; ++k) {
            p.factor_qv[long(t)] += fret[k] * fret[k];
            p.factor_daily[long(t)] += fret[k];
        }
    if (opt.keep_fine) p.factor_returns = Eigen::Map<Eigen::VectorXd>(fret.data(), long(n));
    if (opt.keep_vol_paths) {
        p.factor_logvol = Eigen::Map<Eigen::VectorXd>(omega.data(), long(n));
        p.residual_logvol.resize(long(N), long(n));
    }
    if (opt.keep_fine) p.fine_returns.resize(long(N), long(n));
    p.daily_returns.resize(long(N), long(L));
    p.stock_qv.resize(long(N), long(L));
    p.residual_qv.resize(long(N), long(L));

    // one sampler per distinct idiosyncratic mode
    std::map<std::pair<double, double>, std::shared_ptr<CirculantSampler>> samplers;
    std::vector<const CirculantSampler*> idio(N);
    for (std::size_t i = 0; i < N; ++i) {
        auto key = std::make_pair(spec.idio_modes[i].hurst, spec.idio_modes[i].intermittency_sq);
        auto it = samplers.find(key);
        if (it == samplers.end())
            it = samplers
                     .emplace(key, std::make_shared<CirculantSampler>(spec.idio_modes[i], grid,
                                                                      spec.vol_sampling))
                     .first;
        idio[i] = it->second.get();
    }

    const std::size_t nix = opt.indexes.size();
    std::vector<std::vector<double>> ix_fine(nix, std::vector<double>(n, 0.0));
    std::vector<std::vector<double>> ix_w(nix, std::vector<double>(N, 0.0));
    for (std::size_t j = 0; j < nix; ++j) {
        double bb = 0.0;
        for (std::size_t k = 0; k < opt.indexes[j].members.size(); ++k) {
            ix_w[j][opt.indexes[j].members[k]] = opt.indexes[j].weights[k];
            bb += opt.indexes[j].weights[k] * spec.betas[opt.indexes[j].members[k]];
        }
        p.index_beta_bar.push_back(bb);
    }

    const std::size_t batch = std::max<std::size_t>(1, opt.batch);
    std::vector<std::vector<double>> xbuf(batch, std::vector<double>(n));
    std::vector<std::vector<double>> wbuf(batch, std::vector<double>(n));
    for (std::size_t b0 = 0; b0 < N; b0 += batch) {
        const std::size_t b1 = std::min(N, b0 + batch);
#pragma omp parallel for schedule(dynamic)
        for (std::size_t i = b0; i < b1; ++i) {
            auto& x = xbuf[i - b0];
            auto& w = wbuf[i - b0];
            idio[i]->draw_centered(derive_seed(seed, 2 + 2 * i), w.data());
            const double g = spec.gammas[i];
            const double shift =
                residual_shift(g, fs.variance(), fs.mean(), idio[i]->variance());
            auto eng = make_engine(seed, 3 + 2 * i);
            std::normal_distribution<double> nd(0.0, 1.0);
            const double beta = spec.betas[i], sig = spec.sigmas[i] * sdt;
            for (std::size_t t = 0; t < L; ++t) {
                double day = 0.0, qv = 0.0, eqv = 0.0;
                for (std::size_t k = t * s; k < (t + 1) * s; ++k) {
                    double wt = g * omega[k] + w[k] + shift;
                    w[k] = wt;
                    double de = sig * std::exp(0.5 * wt) * nd(eng);
                    double dx = beta * fret[k] + de;
                    x[k] = dx;
                    day += dx;
                    qv += dx * dx;
                    eqv += de * de;
                }
                p.daily_returns(long(i), long(t)) = day;
                p.stock_qv(long(i), long(t)) = qv;
                p.residual_qv(long(i), long(t)) = eqv;
            }
            if (opt.keep_fine)
                p.fine_returns.row(long(i)) = Eigen::Map<const Eigen::RowVectorXd>(x.data(), long(n));
            if (opt.keep_vol_paths)
                p.residual_logvol.row(long(i)) =
                    Eigen::Map<const Eigen::RowVectorXd>(w.data(), long(n));
        }
        // serial accumulation in stock order keeps results schedule-independent
        for (std::size_t j = 0; j < nix; ++j)
            for (std::size_t i = b0; i < b1; ++i) {
                double wi = ix_w[j][i];
                if (wi == 0.0) continue;
                const auto& x = xbuf[i - b0];
                auto& acc = ix_fine[j];
                for (std::size_t k = 0; k < n; ++k) acc[k] += wi * x[k];
            }
    }
    for (std::size_t j = 0; j < nix; ++j) {
        Eigen::VectorXd qv = Eigen::VectorXd::Zero(long(L)), day = Eigen::VectorXd::Zero(long(L));
        for (std::size_t t = 0; t < L; ++t)
            for (std::size_t k = t * s; k < (t + 1) * s; ++k) {
                qv[long(t)] += ix_fine[j][k] * ix_fine[j][k];
                day[long(t)] += ix_fine[j][k];
            }
        p.index_qv.push_back(qv);
        p.index_daily.push_back(day);
    }
    return p;
}

IndexSeries build_index(const ReturnsPanel& panel, const IndexSpec& index,
                        const std::vector<double>* betas) {
    index.validate(panel.n_stocks);
    if (!panel.has_fine()) throw DataError("build_index requires fine-grid returns");
    IndexSeries out;
    out.returns.assign(std::size_t(panel.fine_returns.cols()), 0.0);
    for (std::size_t k = 0; k < index.members.size(); ++k) {
        const auto row = panel.fine_returns.row(long(index.members[k]));
        for (std::size_t j = 0; j < out.returns.size(); ++j)
            out.returns[j] += index.weights[k] * row[long(j)];
    }
    if (betas) {
        if (betas->size() != panel.n_stocks) throw ConfigError("betas length mismatch");
        double bb = 0.0;
        for (std::size_t k = 0; k < index.members.size(); ++k)
            bb += index.weights[k] * (*betas)[index.members[k]];
        out.beta_bar = bb;
    }
    return out;
}

BetaSigmaDraw sample_beta_sigma(std::size_t n, std::pair<double, double> beta_params,
                                std::pair<double, double> sigma_params, std::uint64_t seed) {
    auto check = [](std::pair<double, double> ab) {
        if (!(ab.first > 0.0) || !(ab.second > 0.0))
            throw ConfigError("beta-distribution shape parameters must be positive");
    };
    check(beta_params);
    check(sigma_params);
    auto draw = [n, seed](std::pair<double, double> ab, std::uint64_t stream) {
        auto eng = make_engine(seed, stream);
        std::gamma_distribution<double> ga(ab.first, 1.0), gb(ab.second, 1.0);
        std::vector<double> v(n);
        for (auto& x : v) {
            double a = ga(eng), b = gb(eng);
            x = a / (a + b);
        }
        return v;
    };
    return {draw(beta_params, 0), draw(sigma_params, 1)};
}

NestedModelSpec make_homogeneous_spec(std::size_t n_stocks, const SfbmParams& factor,
                                      const SfbmParams& idio, double gamma, double sigma,
                                      std::size_t n_periods, std::size_t subdivisions,
                                      double period, std::uint64_t beta_seed) {
    NestedModelSpec s;
    s.n_stocks = n_stocks;
    auto bs = sample_beta_sigma(n_stocks, {kBetaA, kBetaB}, {kSigmaA, kSigmaB}, beta_seed);
    s.betas = bs.betas;
    s.sigmas = sigma > 0.0 ? std::vector<double>(n_stocks, sigma) : bs.sigmas;
    s.gammas.assign(n_stocks, gamma);
    s.factor_mode = factor;
    s.idio_modes.assign(n_stocks, idio);
    s.n_periods = n_periods;
    s.subdivisions = subdivisions;
    s.period = period;
    return s;
}

void write_panel_csv(const ReturnsPanel& panel, const std::string& file, bool daily) {
    std::ofstream f(file);
    if (!f) throw DataError("cannot write " + file);
    f.precision(17);
    f << "time,f";
    for (std::size_t i = 0; i < panel.n_stocks; ++i) f << ",x_" << (i + 1);
    f << '\n';
    if (daily) {
        for (std::size_t t = 0; t < panel.n_periods; ++t) {
            f << double(t + 1) * panel.period << ',';
            if (panel.factor_daily.size()) f << panel.factor_daily[long(t)];
            for (std::size_t i = 0; i < panel.n_stocks; ++i)
                f << ',' << panel.daily_returns(long(i), long(t));
            f << '\n';
        }
        return;
    }
    if (!panel.has_fine()) throw DataError("panel has no fine-grid returns");
    const double dt = panel.period / double(panel.subdivisions);
    for (long k = 0; k < panel.fine_returns.cols(); ++k) {
        f << double(k + 1) * dt << ',';
        if (panel.factor_returns.size()) f << panel.factor_returns[k];
        for (long i = 0; i < panel.fine_returns.rows(); ++i) f << ',' << panel.fine_returns(i, k);
        f << '\n';
    }
}

}  // namespace nsfbm
