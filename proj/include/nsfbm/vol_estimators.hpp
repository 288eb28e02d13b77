#pragma once
#include <string>
#include <vector>

#include "nsfbm/nested_sim.hpp"

namespace nsfbm {

struct OhlcBar {
    std::string date;  // ISO-8601
    double open, high, low, close;
};

enum class VolKind { realized_qv, garman_klass, proxy, external };

struct VolSeries {
    std::vector<double> values;
    double scale = 1.0;  // Delta
    VolKind kind = VolKind::realized_qv;
    std::size_t floor_count = 0;
    double floor_level = 0.0;
};

struct GaussianizedSeries {
    std::vector<double> values;
    std::vector<double> ranks;  // average ranks, 1-based
};

// Raise values below 1e-12 * median(positive values) to that level.
std::size_t apply_floor(std::vector<double>& v, double* level = nullptr);

VolSeries realized_qv(const ReturnsPanel& panel, std::size_t stock);
VolSeries realized_qv(const ReturnsPanel& panel, const IndexSpec& index);
VolSeries realized_qv(const std::vector<double>& fine, std::size_t subdivisions, double period);

void validate_bar(const OhlcBar& b);
double garman_klass_bar(const OhlcBar& b);
VolSeries garman_klass(const std::vector<OhlcBar>& bars);

std::vector<double> log_values(const VolSeries& s);

GaussianizedSeries gaussianize(const std::vector<double>& values);

struct MomentScalingResult {
    double hurst = 0.0;
    std::vector<double> q;
    std::vector<double> slope_over_q;
    bool clamped = false;
};

MomentScalingResult hurst_by_moment_scaling(const std::vector<double>& series,
                                            std::vector<double> q_list = {},
                                            std::vector<std::size_t> lag_list = {});

// small helpers shared by several modules
double mean_of(const std::vector<double>& v);
double variance_of(const std::vector<double>& v);  // population
double correlation(const std::vector<double>& a, const std::vector<double>& b);
double median_of(std::vector<double> v);

}  // namespace nsfbm
