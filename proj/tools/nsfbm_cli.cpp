#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "nsfbm/data_io.hpp"
#include "nsfbm/errors.hpp"
#include "nsfbm/experiments.hpp"
#include "nsfbm/pipeline.hpp"
#include "nsfbm/rng.hpp"
#include "nsfbm/theory.hpp"

namespace fs = std::filesystem;
using namespace nsfbm;

namespace {

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(item));
    return out;
}

// "b:H:lambda_sq:T;..." mode list for W and V
std::vector<WeightedMode> parse_modes(const std::string& s) {
    std::vector<WeightedMode> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ';')) {
        std::vector<double> v;
        std::stringstream is(item);
        std::string x;
        while (std::getline(is, x, ':')) v.push_back(parse_double(x));
        if (v.size() != 4) throw ConfigError("mode '" + item + "' must be weight:hurst:lambda_sq:horizon");
        out.push_back({v[0], SfbmParams(v[1], v[2], v[3])});
    }
    if (out.empty()) throw ConfigError("--modes is empty");
    return out;
}

void print_value(const std::string& name, double v) {
    std::cout << name << " = " << format_double(v) << '\n';
}

struct Common {
    int threads = 0;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nested log S-fBM factor model toolkit"};
    app.require_subcommand(1);
    Common common;
    if (const char* env = std::getenv("NESTED_SFBM_THREADS")) common.threads = std::atoi(env);
    app.add_option("--threads", common.threads, "worker threads (default $NESTED_SFBM_THREADS)");

    // simulate
    auto* sim = app.add_subcommand("simulate", "simulate a nested factor panel");
    std::string sim_config, sim_out;
    std::uint64_t sim_seed = 0;
    bool sim_fine = false, sim_ohlc = false;
    std::string sim_format = "csv";
    sim->add_option("--config", sim_config, "model config (JSON, schema nsfbm.model/1)")->required();
    sim->add_option("--seed", sim_seed, "random seed");
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_flag("--fine", sim_fine, "also write fine-grid returns");
    sim->add_flag("--ohlc", sim_ohlc, "also export per-stock OHLC files to <out>/ohlc");
    sim->add_option("--format", sim_format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "run the five-step calibration");
    std::string cal_config, cal_ohlc, cal_panel, cal_out, cal_source, cal_format = "json";
    std::string cal_from, cal_to;
    std::uint64_t cal_seed = 0;
    int cal_q = 0;
    cal->add_option("--config", cal_config, "calibration config (JSON, schema nsfbm.calibration/1)");
    cal->add_option("--ohlc-dir", cal_ohlc, "directory of per-ticker OHLC CSV files");
    cal->add_option("--panel", cal_panel, "panel directory written by simulate");
    cal->add_option("--seed", cal_seed, "seed (simulated inputs and bootstrap)");
    cal->add_option("--out", cal_out, "output directory (stdout when omitted)");
    cal->add_option("--factor-source", cal_source, "proxy | proxy_formula | external:<csv>");
    cal->add_option("--lags-Q", cal_q, "GMM lag exponent count Q");
    cal->add_option("--format", cal_format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    cal->add_option("--date-from", cal_from, "first date (ISO)");
    cal->add_option("--date-to", cal_to, "last date (ISO)");

    // theory
    auto* th = app.add_subcommand("theory", "evaluate closed-form quantities");
    std::vector<double> gh, gt, cu, er, wv;
    std::string modes, regime_config;
    double r_tau = 10.0, r_delta = 1.0;
    th->add_option("--gh", gh, "g_H: H z")->expected(2);
    th->add_option("--gtilde", gt, "g-tilde_H: H z")->expected(2);
    th->add_option("--cups", cu, "C_Upsilon / lambda^2: H T delta tau")->expected(4);
    th->add_option("--error-ratio", er, "small-intermittency error ratio R(0): lambda_sq T delta")
        ->expected(3);
    th->add_option("--modes", modes, "modes for --W/--V as b:H:lambda_sq:T;...");
    auto* wopt = th->add_option("--W", wv, "W at: tau delta")->expected(2);
    std::vector<double> vv;
    auto* vopt = th->add_option("--V", vv, "V at: tau delta")->expected(2);
    th->add_option("--regime", regime_config, "regime check for a model config");
    th->add_option("--tau", r_tau, "regime lag tau");
    th->add_option("--delta", r_delta, "regime period delta");

    // experiment
    auto* ex = app.add_subcommand("experiment", "run a figure experiment");
    std::string ex_config, ex_id, ex_out;
    std::uint64_t ex_seed = 0;
    bool ex_paper = false;
    auto* ex_seed_opt = ex->add_option("--seed", ex_seed, "random seed");
    ex->add_option("--config", ex_config, "experiment config (JSON, schema nsfbm.experiment/1)");
    ex->add_option("--id", ex_id, "experiment id (defaults only)");
    ex->add_option("--out", ex_out, "bundle directory");
    ex->add_flag("--paper-scale", ex_paper, "use caption-scale grids");

    // gk
    auto* gk = app.add_subcommand("gk", "Garman-Klass variances of an OHLC directory");
    std::string gk_dir, gk_out, gk_from, gk_to;
    gk->add_option("--ohlc-dir", gk_dir, "OHLC directory")->required();
    gk->add_option("--out", gk_out, "output CSV")->required();
    gk->add_option("--date-from", gk_from, "first date (ISO)");
    gk->add_option("--date-to", gk_to, "last date (ISO)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (common.threads < 0) throw ConfigError("--threads must be >= 0");
        if (common.threads > 0) omp_set_num_threads(common.threads);

        if (*sim) {
            auto spec = model_spec_from_json(read_json_file(sim_config));
            SimOptions so;
            so.keep_fine = sim_fine || sim_ohlc;
            auto panel = simulate_panel(spec, sim_seed, so);
            write_panel_dir(panel, sim_out, sim_fine);
            auto model = model_spec_to_json(spec);
            model["seed"] = sim_seed;
            write_json_file(model, (fs::path(sim_out) / "model.json").string());
            if (sim_ohlc) export_panel_ohlc(panel, (fs::path(sim_out) / "ohlc").string());
            if (sim_format == "json")
                std::cout << json{{"out", sim_out}, {"n_stocks", panel.n_stocks},
                                  {"n_periods", panel.n_periods}}.dump(2)
                          << '\n';
            else
                std::cout << "wrote " << sim_out << '\n';
            return 0;
        }

        if (*cal) {
            CalibrationJob job;
            if (!cal_config.empty()) job = calibration_job_from_json(read_json_file(cal_config));
            if (!cal_ohlc.empty()) {
                job.ohlc_dir = cal_ohlc;
                job.panel_dir.clear();
                job.model.reset();
            }
            if (!cal_panel.empty()) {
                job.panel_dir = cal_panel;
                job.ohlc_dir.clear();
                job.model.reset();
            }
            if (job.ohlc_dir.empty() && job.panel_dir.empty() && !job.model)
                throw ConfigError("calibrate needs --config, --ohlc-dir or --panel");
            if (cal->count("--seed")) job.seed = job.options.seed = cal_seed;
            if (!cal_source.empty()) job.factor_source = cal_source;
            if (cal_q > 0) job.options.gmm.q = cal_q;
            if (!cal_from.empty()) job.range.from = cal_from;
            if (!cal_to.empty()) job.range.to = cal_to;
            job.options.factor_source = parse_factor_source(job.factor_source);

            ReturnsPanel panel;
            std::vector<std::string> notes;
            std::size_t dropped = 0;
            if (!job.ohlc_dir.empty()) {
                auto data = load_ohlc_dir(job.ohlc_dir, job.range, job.max_missing);
                for (const auto& e : data.excluded) notes.push_back("excluded " + e);
                for (const auto& f : data.files)
                    if (!f.errors.empty())
                        notes.push_back(f.ticker + ": " + std::to_string(f.errors.size()) +
                                        " rows skipped (" + f.errors.front() + ")");
                dropped = data.dropped_periods;
                panel = std::move(data.panel);
            } else if (!job.panel_dir.empty()) {
                panel = read_panel_dir(job.panel_dir);
            } else {
                panel = simulate_panel(*job.model, job.seed);
            }
            CalibrationReport partial;
            CalibrationReport rep;
            try {
                rep = run_calibration(panel, job.options, &partial);
            } catch (...) {
                if (!cal_out.empty()) {
                    fs::create_directories(cal_out);
                    auto j = to_json(partial);
                    j["status"] = "failed";
                    write_json_file(j, (fs::path(cal_out) / "partial_report.json").string());
                }
                throw;
            }
            rep.diagnostics.dropped_periods = dropped;
            rep.diagnostics.warnings.insert(rep.diagnostics.warnings.begin(), notes.begin(), notes.end());
            if (cal_out.empty()) {
                if (cal_format == "json")
                    std::cout << to_json(rep).dump(2) << '\n';
                else
                    write_stock_table_csv(rep, std::cout);
            } else {
                fs::create_directories(cal_out);
                if (cal_format == "json")
                    write_json_file(to_json(rep), (fs::path(cal_out) / "report.json").string());
                write_stock_table_csv(rep, (fs::path(cal_out) / "stocks.csv").string());
                std::cout << "wrote " << cal_out << '\n';
            }
            return 0;
        }

        if (*th) {
            bool any = false;
            if (!gh.empty()) print_value("g_H", g_h(gh[0], gh[1])), any = true;
            if (!gt.empty()) print_value("g_tilde_H", g_tilde_h(gt[0], gt[1])), any = true;
            if (!cu.empty()) print_value("C_Upsilon", c_upsilon(cu[0], cu[1], cu[2], cu[3])), any = true;
            if (!er.empty())
                print_value("R0", small_intermittency_error_ratio(er[0], er[1], er[2])), any = true;
            if (wopt->count() || vopt->count()) {
                auto m = parse_modes(modes);
                if (wopt->count()) print_value("W", small_intermittency_W(m, wv[0], wv[1]));
                if (vopt->count()) print_value("V", small_intermittency_V(m, vv[0], vv[1]));
                any = true;
            }
            if (!regime_config.empty()) {
                auto spec = model_spec_from_json(read_json_file(regime_config));
                std::cout << to_json(check_regime(spec, r_tau, r_delta)).dump(2) << '\n';
                any = true;
            }
            if (!any) throw ConfigError("theory: nothing to evaluate (see --help)");
            return 0;
        }

        if (*ex) {
            ExperimentSpec spec;
            if (!ex_config.empty())
                spec = experiment_spec_from_json(read_json_file(ex_config));
            else if (!ex_id.empty())
                spec.id = ex_id;
            else
                throw ConfigError("experiment needs --config or --id");
            if (ex_seed_opt->count()) spec.seed = ex_seed;
            if (ex_paper) spec.paper_scale = true;
            if (!ex_out.empty()) spec.out_dir = ex_out;
            if (spec.out_dir.empty()) throw ConfigError("experiment needs an output directory (--out)");
            auto bundle = run_experiment(spec);
            write_bundle(bundle, spec.out_dir);
            std::cout << "wrote " << spec.out_dir << '\n';
            return 0;
        }

        if (*gk) {
            auto data = load_ohlc_dir(gk_dir, DateRange{gk_from, gk_to});
            write_gk_csv(data, gk_out);
            for (const auto& e : data.excluded) std::cerr << "excluded " << e << '\n';
            std::cout << "wrote " << gk_out << " (" << data.panel.n_stocks << " tickers, "
                      << data.panel.n_periods << " days)\n";
            return 0;
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical error";
        if (e.step()) std::cerr << " (step " << e.step() << ")";
        std::cerr << ": " << e.what() << '\n';
        return 4;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 4;
    }
    return 0;
}
