#include "nsfbm/vol_estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "nsfbm/errors.hpp"

namespace nsfbm {

double mean_of(const std::vector<double>& v) {
    if (v.empty()) throw DataError("empty series");
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double variance_of(const std::vector<double>& v) {
    double m = mean_of(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / double(v.size());
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) throw DataError("correlation: length mismatch");
    double ma = mean_of(a), mb = mean_of(b), sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

double median_of(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty series");
    std::size_t h = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + long(h), v.end());
    double hi = v[h];
    if (v.size() % 2) return hi;
    double lo = *std::max_element(v.begin(), v.begin() + long(h));
    return 0.5 * (lo + hi);
}

std::size_t apply_floor(std::vector<double>& v, double* level) {
    std::vector<double> pos;
    for (double x : v)
        if (x > 0.0) pos.push_back(x);
    double eps = pos.empty() ? std::numeric_limits<double>::min() : 1e-12 * median_of(pos);
    std::size_t count = 0;
    for (double& x : v)
        if (!(x >= eps)) {
            x = eps;
            ++count;
        }
    if (level) *level = eps;
    return count;
}

VolSeries realized_qv(const std::vector<double>& fine, std::size_t subdivisions, double period) {
    if (subdivisions < 2) throw ConfigError("realized_qv requires s >= 2");
    if (fine.size() < subdivisions) throw DataError("realized_qv: empty selection");
    VolSeries s;
    s.scale = period;
    s.kind = VolKind::realized_qv;
    const std::size_t L = fine.size() / subdivisions;
    s.values.assign(L, 0.0);
    for (std::size_t t = 0; t < L; ++t)
        for (std::size_t k = t * subdivisions; k < (t + 1) * subdivisions; ++k)
            s.values[t] += fine[k] * fine[k];
    s.floor_count = apply_floor(s.values, &s.floor_level);
    return s;
}

VolSeries realized_qv(const ReturnsPanel& panel, std::size_t stock) {
    if (stock >= panel.n_stocks) throw ConfigError("realized_qv: stock index out of range");
    if (panel.has_fine()) {
        auto row = panel.fine_returns.row(long(stock));
        std::vector<double> v(row.data(), row.data() + row.size());
        return realized_qv(v, panel.subdivisions, panel.period);
    }
    if (panel.subdivisions < 2 && panel.provenance == Provenance::synthetic)
        throw ConfigError("realized_qv requires s >= 2");
    VolSeries s;
    s.scale = panel.period;
    s.kind = panel.provenance == Provenance::empirical ? VolKind::garman_klass : VolKind::realized_qv;
    auto row = panel.stock_qv.row(long(stock));
    for (long t = 0; t < row.size(); ++t) s.values.push_back(row[t]);
    s.floor_count = apply_floor(s.values, &s.floor_level);
    return s;
}

VolSeries realized_qv(const ReturnsPanel& panel, const IndexSpec& index) {
    auto ix = build_index(panel, index);
    return realized_qv(ix.returns, panel.subdivisions, panel.period);
}

void validate_bar(const OhlcBar& b) {
    bool ok = b.open > 0 && b.high > 0 && b.low > 0 && b.close > 0 &&
              std::isfinite(b.open) && std::isfinite(b.high) && std::isfinite(b.low) &&
              std::isfinite(b.close) && b.low <= std::min(b.open, b.close) &&
              std::max(b.open, b.close) <= b.high;
    if (!ok) throw DataError("invalid OHLC bar on " + b.date);
}

double garman_klass_bar(const OhlcBar& b) {
    validate_bar(b);
    double hl = std::log(b.high / b.low);
    double co = std::log(b.close / b.open);
    return 0.5 * hl * hl - (2.0 * std::log(2.0) - 1.0) * co * co;
}

VolSeries garman_klass(const std::vector<OhlcBar>& bars) {
    VolSeries s;
    s.kind = VolKind::garman_klass;
    s.scale = 1.0;
    s.values.reserve(bars.size());
    for (const auto& b : bars) s.values.push_back(garman_klass_bar(b));
    if (!s.values.empty()) s.floor_count = apply_floor(s.values, &s.floor_level);
    return s;
}

std::vector<double> log_values(const VolSeries& s) {
    std::vector<double> out(s.values.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(s.values[i] > 0.0)) throw NumericalError("log of non-positive volatility value");
        out[i] = std::log(s.values[i]);
    }
    return out;
}

GaussianizedSeries gaussianize(const std::vector<double>& values) {
    const std::size_t n = values.size();
    if (n < 30) throw DataError("gaussianize requires at least 30 values");
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    if (values[idx.front()] == values[idx.back()]) throw DataError("gaussianize: constant input");
    GaussianizedSeries g;
    g.ranks.assign(n, 0.0);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
        double r = 0.5 * double(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) g.ranks[idx[k]] = r;
        i = j + 1;
    }
    boost::math::normal_distribution<double> nd;
    g.values.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        g.values[i] = boost::math::quantile(nd, g.ranks[i] / double(n + 1));
    double m = mean_of(g.values), sd = std::sqrt(variance_of(g.values));
    for (double& x : g.values) x = (x - m) / sd;
    return g;
}

MomentScalingResult hurst_by_moment_scaling(const std::vector<double>& series,
                                            std::vector<double> q_list,
                                            std::vector<std::size_t> lag_list) {
    const std::size_t n = series.size();
    if (q_list.empty()) q_list = {0.5, 1.0, 1.5, 2.0};
    if (lag_list.empty())
        for (std::size_t l = 1; l <= n / 8; l *= 2) lag_list.push_back(l);
    std::vector<std::size_t> lags;
    for (auto l : lag_list)
        if (l >= 1 && l < n) lags.push_back(l);
    if (lags.size() < 3) throw DataError("moment scaling needs at least 3 lags");
    MomentScalingResult r;
    r.q = q_list;
    double acc = 0.0;
    for (double q : q_list) {
        std::vector<double> lx, ly;
        for (auto l : lags) {
            double m = 0.0;
            for (std::size_t t = 0; t + l < n; ++t) m += std::pow(std::fabs(series[t + l] - series[t]), q);
            m /= double(n - l);
            lx.push_back(std::log(double(l)));
            ly.push_back(std::log(m));
        }
        double mx = mean_of(lx), my = mean_of(ly), sxy = 0.0, sxx = 0.0;
        for (std::size_t k = 0; k < lx.size(); ++k) {
            sxy += (lx[k] - mx) * (ly[k] - my);
            sxx += (lx[k] - mx) * (lx[k] - mx);
        }
        r.slope_over_q.push_back(sxy / sxx / q);
        acc += sxy / sxx / q;
    }
    r.hurst = acc / double(q_list.size());
    if (r.hurst < SfbmParams::h_min) {
        r.hurst = SfbmParams::h_min;
        r.clamped = true;
    }
    return r;
}

}  // namespace nsfbm
