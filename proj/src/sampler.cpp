#include "nsfbm/sampler.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>

#include <Eigen/Dense>

#include "nsfbm/errors.hpp"
#include "nsfbm/rng.hpp"
#include "nsfbm/theory.hpp"

namespace nsfbm {

namespace {

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

struct PlanCache {
    std::map<std::size_t, fftw_plan> r2c, c2r;
};

PlanCache& plans() {
    static PlanCache c;
    return c;
}

template <class T>
struct FftwDeleter {
    void operator()(T* p) const { fftw_free(p); }
};
template <class T>
using fftw_buf = std::unique_ptr<T, FftwDeleter<T>>;

template <class T>
fftw_buf<T> fftw_alloc(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (!p) throw std::bad_alloc();
    return fftw_buf<T>(p);
}

fftw_plan get_plan(std::size_t m, bool forward) {
    std::lock_guard<std::mutex> lock(plan_mutex());
    auto& map = forward ? plans().r2c : plans().c2r;
    auto it = map.find(m);
    if (it != map.end()) return it->second;
    auto re = fftw_alloc<double>(m);
    auto cx = fftw_alloc<fftw_complex>(m / 2 + 1);
    fftw_plan p = forward ? fftw_plan_dft_r2c_1d(int(m), re.get(), cx.get(),
                                                 FFTW_ESTIMATE | FFTW_UNALIGNED)
                          : fftw_plan_dft_c2r_1d(int(m), cx.get(), re.get(),
                                                 FFTW_ESTIMATE | FFTW_UNALIGNED);
    map.emplace(m, p);
    return p;
}

// smallest even 2^a 3^b 5^c 7^d >= n
std::size_t smooth_size(std::size_t n) {
    for (std::size_t m = n + (n & 1);; m += 2) {
        std::size_t r = m;
        for (std::size_t f : {2, 3, 5, 7})
            while (r % f == 0) r /= f;
        if (r == 1) return m;
    }
}

}  // namespace

std::size_t CirculantSampler::embedding_size_for(std::size_t n_points) {
    return smooth_size(2 * (n_points - 1));
}

double path_variance(const SfbmParams& mode, double dt, VolSampling sampling) {
    if (sampling == VolSampling::left_point) return sfbm_cov(mode, 0.0);
    return mode.intermittency_sq * c_upsilon(mode, dt, 0.0);
}

std::vector<double> path_covariance(const SfbmParams& mode, const GridSpec& grid,
                                    VolSampling sampling) {
    std::vector<double> c(grid.n_points);
    for (std::size_t k = 0; k < grid.n_points; ++k) {
        double tau = double(k) * grid.dt;
        c[k] = sampling == VolSampling::left_point
                   ? sfbm_cov(mode, tau)
                   : mode.intermittency_sq * c_upsilon(mode, grid.dt, tau);
    }
    return c;
}

CirculantSampler::CirculantSampler(const SfbmParams& mode, const GridSpec& grid,
                                   VolSampling sampling)
    : mode_(mode), grid_(grid) {
    mode.validate();
    if (grid.n_points < 2 || !(grid.dt > 0.0)) throw ConfigError("grid needs n_points >= 2, dt > 0");
    m_ = smooth_size(2 * (grid.n_points - 1));
    // covariance function on 0..m/2, mirrored
    init(path_covariance(mode, GridSpec{m_ / 2 + 1, grid.dt}, sampling));
}

CirculantSampler::CirculantSampler(const std::vector<double>& cov, const GridSpec& grid)
    : grid_(grid) {
    if (grid.n_points < 2 || !(grid.dt > 0.0)) throw ConfigError("grid needs n_points >= 2, dt > 0");
    m_ = smooth_size(2 * (grid.n_points - 1));
    if (cov.size() < m_ / 2 + 1)
        throw ConfigError("covariance sequence shorter than the embedding half-size " +
                          std::to_string(m_ / 2 + 1));
    init(cov);
}

void CirculantSampler::init(const std::vector<double>& c) {
    const std::size_t half = m_ / 2;
    auto row = fftw_alloc<double>(m_);
    for (std::size_t k = 0; k <= half; ++k) row.get()[k] = c[k];
    for (std::size_t k = half + 1; k < m_; ++k) row.get()[k] = c[m_ - k];
    auto spec = fftw_alloc<fftw_complex>(half + 1);
    fftw_execute_dft_r2c(get_plan(m_, true), row.get(), spec.get());
    sqrt_eig_.resize(half + 1);
    double max_eig = 0.0;
    min_eig_ = spec.get()[0][0];
    for (std::size_t k = 0; k <= half; ++k) {
        double e = spec.get()[k][0];
        max_eig = std::max(max_eig, e);
        min_eig_ = std::min(min_eig_, e);
    }
    for (std::size_t k = 0; k <= half; ++k) {
        double e = spec.get()[k][0];
        if (e < 0.0) {
            if (-e > 1e-8 * max_eig)
                throw NumericalError("circulant embedding not nonnegative definite: eigenvalue " +
                                     std::to_string(min_eig_));
            e = 0.0;
            ++clipped_;
        }
        sqrt_eig_[k] = std::sqrt(e / double(m_));
    }
    var_ = c[0];
    mean_ = -0.5 * var_;
}

void CirculantSampler::draw_centered(std::uint64_t seed, double* out) const {
    const std::size_t half = m_ / 2;
    auto in = fftw_alloc<fftw_complex>(half + 1);
    auto re = fftw_alloc<double>(m_);
    auto eng = make_engine(seed, 0);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double r2 = std::sqrt(0.5);
    in.get()[0][0] = sqrt_eig_[0] * nd(eng);
    in.get()[0][1] = 0.0;
    for (std::size_t k = 1; k < half; ++k) {
        double a = sqrt_eig_[k] * r2;
        in.get()[k][0] = a * nd(eng);
        in.get()[k][1] = a * nd(eng);
    }
    in.get()[half][0] = sqrt_eig_[half] * nd(eng);
    in.get()[half][1] = 0.0;
    fftw_execute_dft_c2r(get_plan(m_, false), in.get(), re.get());
    std::copy(re.get(), re.get() + grid_.n_points, out);
}

std::vector<double> CirculantSampler::draw(std::uint64_t seed) const {
    std::vector<double> v(grid_.n_points);
    draw_centered(seed, v.data());
    for (double& x : v) x += mean_;
    return v;
}

GaussianPath sample_sfbm_path(const SfbmParams& mode, const GridSpec& grid, std::uint64_t seed,
                              VolSampling sampling) {
    CirculantSampler s(mode, grid, sampling);
    return GaussianPath{s.draw(seed), grid, mode, seed, sampling};
}

std::vector<GaussianPath> sample_many(const std::vector<SfbmParams>& modes, const GridSpec& grid,
                                      std::uint64_t seed, VolSampling sampling) {
    std::vector<GaussianPath> out(modes.size());
    std::vector<std::string> errs(modes.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < modes.size(); ++i) {
        try {
            out[i] = sample_sfbm_path(modes[i], grid, derive_seed(seed, i), sampling);
        } catch (const std::exception& e) {
            errs[i] = e.what();
        }
    }
    for (std::size_t i = 0; i < errs.size(); ++i)
        if (!errs[i].empty())
            throw NumericalError("sample_many: path " + std::to_string(i) + ": " + errs[i]);
    return out;
}

GaussianPath sample_sfbm_path_dense(const SfbmParams& mode, const GridSpec& grid,
                                    std::uint64_t seed, VolSampling sampling) {
    mode.validate();
    if (grid.n_points < 2 || grid.n_points > 2048)
        throw ConfigError("dense sampler supports 2 <= n_points <= 2048");
    const std::size_t n = grid.n_points;
    auto c = path_covariance(mode, grid, sampling);
    Eigen::MatrixXd cov(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) cov(i, j) = c[i > j ? i - j : j - i];
    cov.diagonal().array() += 1e-12 * c[0];
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("dense factorization failed");
    auto z = normal_vector(seed, 0, n);
    Eigen::VectorXd x = llt.matrixL() * Eigen::Map<Eigen::VectorXd>(z.data(), long(n));
    GaussianPath p{std::vector<double>(n), grid, mode, seed, sampling};
    for (std::size_t i = 0; i < n; ++i) p.values[i] = x[long(i)] - 0.5 * c[0];
    return p;
}

void write_path_csv(const GaussianPath& path, const std::string& file) {
    std::ofstream f(file);
    if (!f) throw DataError("cannot write " + file);
    f << "time,omega\n" << std::setprecision(17);
    for (std::size_t k = 0; k < path.values.size(); ++k)
        f << double(k) * path.grid.dt << ',' << path.values[k] << '\n';
}

}  // namespace nsfbm
