#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "nsfbm/errors.hpp"
#include "nsfbm/experiments.hpp"

using namespace nsfbm;
namespace fs = std::filesystem;

TEST_CASE("experiment ids and defaults") {
    const auto& ids = experiment_ids();
    CHECK(ids.size() == 6);
    for (const auto& id : ids) CHECK_NOTHROW(experiment_defaults(id, false));
    CHECK(experiment_defaults("stocks_vs_index", true)["n_periods"] == 16384);
    CHECK(experiment_defaults("stocks_vs_index", false)["n_periods"] == 8192);
    CHECK_THROWS_AS(experiment_defaults("fig9", false), ConfigError);
}

TEST_CASE("overrides are type-checked and bounded") {
    ExperimentSpec s;
    s.id = "stocks_vs_index";
    s.overrides = {{"n_stocks", 20}};
    CHECK(resolve_parameters(s)["n_stocks"] == 20);
    s.overrides = {{"n_stockz", 20}};
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.overrides = {{"n_stocks", "many"}};
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.overrides = {{"n_stocks", 2.5}};
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.overrides = {{"hurst", 0.7}};
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.overrides = {{"n_stocks", 2}};
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.overrides = {{"n_stocks", 2000}};  // fine grid would exceed the memory limit
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.overrides = {{"n_stocks", 2000}, {"keep_fine", false}};
    CHECK_NOTHROW(resolve_parameters(s));
    s.id = "empirical_idio";
    s.overrides = json::object();
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
    s.id = "convergence_in_N";
    s.overrides = {{"n_values", {8, 2.5}}};
    CHECK_THROWS_AS(resolve_parameters(s), ConfigError);
}

TEST_CASE("experiment config parsing") {
    json j = {{"schema", "nsfbm.experiment/1"}, {"id", "idio_recovery"}, {"seed", 7}, {"overrides", {{"n_stocks", 8}}}};
    auto s = experiment_spec_from_json(j);
    CHECK(s.id == "idio_recovery");
    CHECK(s.seed == 7);
    CHECK(s.overrides["n_stocks"] == 8);
    j["extra"] = 1;
    CHECK_THROWS_AS(experiment_spec_from_json(j), ConfigError);
    CHECK_THROWS_AS(experiment_spec_from_json({{"schema", "nsfbm.experiment/1"}, {"id", "nope"}}), ConfigError);
    CHECK_THROWS_AS(experiment_spec_from_json({{"id", "idio_recovery"}}), ConfigError);
    CHECK_THROWS_AS(experiment_spec_from_json({{"schema", "nsfbm.experiment/1"}, {"id", 4}}), ConfigError);
}

TEST_CASE("histogram is a density") {
    auto t = histogram({0.1, 0.2, 0.2, 0.9, 5.0}, 0.0, 1.0, 10);
    double area = 0;
    for (double y : t.y) area += y * 0.1;
    CHECK(area == doctest::Approx(1.0));
    CHECK(t.x[0] == doctest::Approx(0.05));
    CHECK(t.y[2] == doctest::Approx(2.0 / 5 / 0.1));
}

TEST_CASE("runs are reproducible and bundles are complete") {
    ExperimentSpec s;
    s.id = "idio_recovery";
    s.seed = 7;
    s.overrides = {{"n_stocks", 6}, {"n_periods", 512}, {"horizon", 512.0}, {"subdivisions", 8}};
    auto a = run_experiment(s), b = run_experiment(s);
    CHECK(a.summary.dump() == b.summary.dump());
    CHECK(a.summary["seed"] == 7);
    CHECK(a.summary["version"] == kVersion);
    CHECK(a.summary["parameters"]["n_stocks"] == 6);
    auto dir = fs::temp_directory_path() / "nsfbm_test_bundle";
    fs::remove_all(dir);
    write_bundle(a, dir.string());
    CHECK(fs::exists(dir / "summary.json"));
    for (const auto& [name, table] : a.tables) {
        std::ifstream f(dir / (name + ".csv"));
        std::string head;
        std::getline(f, head);
        CHECK(head == "x,y,y_lo,y_hi");
    }
    fs::remove_all(dir);
}

TEST_CASE("empirical experiment degrades with few tickers") {
    auto dir = fs::temp_directory_path() / "nsfbm_test_empirical";
    fs::remove_all(dir);
    SfbmParams f(0.11, 0.0025, 600), id(0.01, 0.0025, 600);
    auto spec = make_homogeneous_spec(12, f, id, 0.2, -1.0, 600, 8, 1.0, 3);
    auto panel = simulate_panel(spec, 4);
    for (std::size_t i = 0; i < 12; ++i) panel.tickers.push_back("T" + std::to_string(i));
    export_panel_ohlc(panel, dir.string());
    ExperimentSpec s;
    s.id = "empirical_factor_vs_Ns";
    s.overrides = {{"data_dir", dir.string()}, {"ns", {5, 10, 40}}, {"n_combinations", 2}};
    auto b = run_experiment(s);
    auto w = b.summary["results"]["warnings"];
    CHECK(w.size() >= 1);
    CHECK(b.summary["results"]["n_tickers"] == 12);
    fs::remove_all(dir);
}
