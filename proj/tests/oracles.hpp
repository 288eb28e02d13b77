#pragma once
// Independent reference computations for the tests. Nothing here calls the
// library's closed forms.
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

namespace oracle {

inline boost::math::quadrature::tanh_sinh<double>& ts() {
    static thread_local boost::math::quadrature::tanh_sinh<double> q(10);
    return q;
}

// Integral of f over [a, b] after mapping to [0, 1].
template <class F>
double integrate(F f, double a, double b, double tol = 1e-13) {
    if (!(b - a > 1e-9 * (1.0 + std::fabs(a)))) return f(0.5 * (a + b)) * (b - a);
    const double w = b - a;
    return w * ts().integrate([&](double s) { return f(a + w * s); }, 0.0, 1.0, tol);
}

// Integral over [a, b] split at the kinks inside it.
template <class F>
double integrate_split(F f, double a, double b, std::vector<double> kinks, double tol = 1e-13) {
    kinks.push_back(a);
    kinks.push_back(b);
    std::sort(kinks.begin(), kinks.end());
    double s = 0.0;
    for (std::size_t k = 0; k + 1 < kinks.size(); ++k) {
        double lo = std::max(a, kinks[k]), hi = std::min(b, kinks[k + 1]);
        if (hi > lo) s += integrate(f, lo, hi, tol);
    }
    return s;
}

// g_H(z) = 1/(H(1-2H)) * int_0^1 int_0^1 |z(u-v)+1|^{2H} - |z(u-v)|^{2H} dv du
inline double g_h(double H, double z) {
    auto outer = [=](double u) {
        auto inner = [=](double v) {
            double x = z * (u - v);
            return std::pow(std::fabs(x + 1.0), 2 * H) - std::pow(std::fabs(x), 2 * H);
        };
        return integrate_split(inner, 0.0, 1.0, {u, u + 1.0 / z});
    };
    // the outer integrand kinks where the inner split point u + 1/z leaves [0, 1]
    return integrate_split(outer, 0.0, 1.0, {1.0 - 1.0 / z}, 1e-11) / (H * (1.0 - 2.0 * H));
}

// Covariance of the Delta-averages of an S-fBM log-volatility at lag tau, in units of
// lambda^2: (1/Delta^2) int int rho(tau + v - u) du dv with rho(x) = (1 - (|x|/T)^{2H})/(2H(1-2H)).
inline double c_upsilon(double H, double T, double delta, double tau) {
    auto outer = [=](double u) {
        auto inner = [=](double v) {
            double x = std::fabs(tau + delta * (v - u));
            return x >= T ? 0.0 : (1.0 - std::pow(x / T, 2 * H)) / (2 * H * (1 - 2 * H));
        };
        return integrate_split(inner, 0.0, 1.0, {u - tau / delta});
    };
    return integrate_split(outer, 0.0, 1.0, {tau / delta}, 1e-11);
}

inline double mean(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

inline double sd(const std::vector<double>& v) {
    double m = mean(v), s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Standard normal CDF.
inline double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    double ma = mean(a), mb = mean(b), sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return sab / std::sqrt(saa * sbb);
}

}  // namespace oracle
