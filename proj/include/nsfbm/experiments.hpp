#pragma once
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nsfbm/data_io.hpp"

namespace nsfbm {

struct ExperimentSpec {
    std::string id;
    json overrides = json::object();
    std::uint64_t seed = 0;
    std::string out_dir;
    bool paper_scale = false;
};

// Plot-ready series; y_lo = y_hi = y where no interval applies.
struct PlotTable {
    std::vector<double> x, y, y_lo, y_hi;
    void add(double xv, double yv, double lo, double hi);
    void add(double xv, double yv) { add(xv, yv, yv, yv); }
};

struct ResultBundle {
    json summary;
    std::map<std::string, PlotTable> tables;
};

const std::vector<std::string>& experiment_ids();

// Default parameters for an id (desk scale unless paper_scale).
json experiment_defaults(const std::string& id, bool paper_scale);

// Defaults merged with overrides; unknown keys, wrong types and infeasible
// values are rejected with ConfigError.
json resolve_parameters(const ExperimentSpec& spec);

// Reads {"schema": "nsfbm.experiment/1", "id", "seed", "paper_scale", "out", "overrides"}.
ExperimentSpec experiment_spec_from_json(const json& j);

ResultBundle run_experiment(const ExperimentSpec& spec);

// summary.json plus <table>.csv with header x,y,y_lo,y_hi.
void write_bundle(const ResultBundle& b, const std::string& dir);

// Density histogram on [lo, hi] with equal bins (x = bin centre).
PlotTable histogram(const std::vector<double>& v, double lo, double hi, int bins);

}  // namespace nsfbm
