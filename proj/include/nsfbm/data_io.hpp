#pragma once
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "nsfbm/gmm.hpp"
#include "nsfbm/model.hpp"
#include "nsfbm/nested_sim.hpp"
#include "nsfbm/pipeline.hpp"
#include "nsfbm/theory.hpp"
#include "nsfbm/vol_estimators.hpp"

namespace nsfbm {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

// Shortest round-trip text for a double (dot decimal, locale independent).
std::string format_double(double x);
double parse_double(std::string_view s);

struct OhlcFile {
    std::string ticker;
    std::string path;
    std::vector<OhlcBar> bars;
    std::vector<std::string> errors;  // "line N: reason"
};

// Header must contain date,open,high,low,close (any order, case-insensitive);
// other columns are ignored. Bad rows are logged and skipped; rows whose date
// does not increase are logged and dropped.
OhlcFile read_ohlc_csv(const std::string& path, const std::string& ticker);
void write_ohlc_csv(const std::string& path, const std::vector<OhlcBar>& bars);

struct DateRange {
    std::string from;  // inclusive ISO dates; empty = open
    std::string to;
};

struct OhlcPanel {
    std::vector<OhlcFile> files;          // kept tickers, in panel order
    std::vector<std::string> excluded;    // "ticker: reason"
    std::vector<std::string> dates;       // aligned bar dates
    std::size_t dropped_periods = 0;      // dates missing for some kept ticker
    // Panel over dates[1..]: close-to-close log returns and GK variances.
    ReturnsPanel panel;
};

// Loads every *.csv in dir (filename stem = ticker), excludes tickers missing
// more than max_missing of the in-range dates, and inner-joins the rest.
OhlcPanel load_ohlc_dir(const std::string& dir, const DateRange& range = {},
                        double max_missing = 0.05);

// Aligned panel from already-parsed files (same rules as load_ohlc_dir).
OhlcPanel align_ohlc(std::vector<OhlcFile> files, const DateRange& range = {},
                     double max_missing = 0.05);

// n consecutive Monday-Friday dates starting at start.
std::vector<std::string> business_days(std::size_t n, const std::string& start = "2000-01-03");

// Bars built from a synthetic panel: open = previous close, close from the
// cumulative fine returns, high/low spanning the intraday path (open and close
// only when the panel has no fine returns). One bar per period.
std::vector<std::vector<OhlcBar>> panel_to_ohlc(const ReturnsPanel& panel, double start_price = 100.0,
                                                const std::string& start_date = "2000-01-03");
// Writes <dir>/<ticker>.csv for every stock; returns the file paths.
std::vector<std::string> export_panel_ohlc(const ReturnsPanel& panel, const std::string& dir,
                                           double start_price = 100.0);

// Wide CSV: date,<ticker>... of GK variances.
void write_gk_csv(const OhlcPanel& p, const std::string& path);

// Single-column series CSV (first numeric column after an optional header or date column).
std::vector<double> read_series_csv(const std::string& path);

// Panel directory written by `simulate`: meta.json, daily_returns.csv, stock_qv.csv,
// panel_daily.csv (time,f,x_1..x_N) and, optionally, fine_returns.csv.
void write_panel_dir(const ReturnsPanel& panel, const std::string& dir, bool fine);
ReturnsPanel read_panel_dir(const std::string& dir);

// JSON helpers; config readers reject unknown keys and wrong types.
json read_json_file(const std::string& path);
void write_json_file(const json& j, const std::string& path);

NestedModelSpec model_spec_from_json(const json& j);
json model_spec_to_json(const NestedModelSpec& s);
GmmConfig gmm_config_from_json(const json& j, GmmConfig base = {});
json gmm_config_to_json(const GmmConfig& c);
FactorSource parse_factor_source(const std::string& text);  // proxy | proxy_formula | external:<csv>

// Everything `calibrate` needs: one data source plus pipeline options.
struct CalibrationJob {
    std::string ohlc_dir;
    std::string panel_dir;
    std::optional<NestedModelSpec> model;  // simulate, then calibrate
    std::uint64_t seed = 0;
    DateRange range;
    double max_missing = 0.05;
    std::string factor_source = "proxy";
    CalibrationOptions options;
};

CalibrationJob calibration_job_from_json(const json& j);

json to_json(const HurstFit& f);
json to_json(const RegimeReport& r);
json to_json(const CalibrationReport& r);
void write_stock_table_csv(const CalibrationReport& r, const std::string& path);
void write_stock_table_csv(const CalibrationReport& r, std::ostream& out);

}  // namespace nsfbm
