#include "nsfbm/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "nsfbm/errors.hpp"

namespace nsfbm {

namespace fs = std::filesystem;

std::string format_double(double x) {
    char buf[64];
    auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

double parse_double(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double x = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), x);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw DataError("not a number: '" + std::string(s) + "'");
    return x;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char c : line) {
        if (c == '"') {
            quoted = !quoted;
        } else if (c == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        auto a = f.find_first_not_of(" \t");
        auto b = f.find_last_not_of(" \t");
        f = a == std::string::npos ? "" : f.substr(a, b - a + 1);
    }
    return out;
}

std::string lower(std::string s) {
    for (auto& c : s) c = char(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::chrono::sys_days parse_date(const std::string& s) {
    int y = 0;
    unsigned m = 0, d = 0;
    char tail = 0;
    if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3)
        throw DataError("bad ISO date '" + s + "'");
    std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw DataError("invalid calendar date '" + s + "'");
    return std::chrono::sys_days{ymd};
}

std::string format_date(std::chrono::sys_days d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", int(ymd.year()), unsigned(ymd.month()),
                  unsigned(ymd.day()));
    return buf;
}

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m,
                      const std::vector<std::string>& names) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "period";
    for (const auto& n : names) f << ',' << n;
    f << '\n';
    for (long t = 0; t < m.cols(); ++t) {
        f << (t + 1);
        for (long i = 0; i < m.rows(); ++i) f << ',' << format_double(m(i, t));
        f << '\n';
    }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path, std::vector<std::string>* names) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read " + path);
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty file");
    auto head = split_csv(line);
    if (head.size() < 2) throw DataError(path + ": need a period column and at least one series");
    if (names) names->assign(head.begin() + 1, head.end());
    std::vector<std::vector<double>> rows;
    std::size_t ln = 1;
    while (std::getline(f, line)) {
        ++ln;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv(line);
        if (fields.size() != head.size())
            throw DataError(path + ": line " + std::to_string(ln) + " has " +
                            std::to_string(fields.size()) + " fields, expected " +
                            std::to_string(head.size()));
        std::vector<double> r;
        for (std::size_t k = 1; k < fields.size(); ++k) r.push_back(parse_double(fields[k]));
        rows.push_back(std::move(r));
    }
    Eigen::MatrixXd m(long(head.size() - 1), long(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t i = 0; i < rows[t].size(); ++i) m(long(i), long(t)) = rows[t][i];
    return m;
}

}  // namespace

OhlcFile read_ohlc_csv(const std::string& path, const std::string& ticker) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read " + path);
    OhlcFile out;
    out.ticker = ticker;
    out.path = path;
    std::string line;
    if (!std::getline(f, line)) throw DataError(path + ": empty file");
    auto head = split_csv(line);
    std::map<std::string, std::size_t> col;
    for (std::size_t k = 0; k < head.size(); ++k) col.emplace(lower(head[k]), k);
    for (const char* need : {"date", "open", "high", "low", "close"})
        if (!col.count(need)) throw DataError(path + ": header lacks column '" + need + "'");
    const std::size_t cd = col["date"], co = col["open"], ch = col["high"], cl = col["low"],
                      cc = col["close"];
    const std::size_t need = std::max({cd, co, ch, cl, cc}) + 1;
    std::vector<std::pair<std::chrono::sys_days, OhlcBar>> rows;
    std::size_t ln = 1;
    while (std::getline(f, line)) {
        ++ln;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv(line);
        try {
            if (fields.size() < need) throw DataError("too few fields");
            OhlcBar b{fields[cd], parse_double(fields[co]), parse_double(fields[ch]),
                      parse_double(fields[cl]), parse_double(fields[cc])};
            auto d = parse_date(b.date);
            validate_bar(b);
            rows.emplace_back(d, b);
        } catch (const std::exception& e) {
            out.errors.push_back("line " + std::to_string(ln) + ": " + e.what());
        }
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (k > 0 && rows[k].first == rows[k - 1].first) {
            out.errors.push_back("duplicate date " + rows[k].second.date + " dropped");
            continue;
        }
        out.bars.push_back(rows[k].second);
    }
    return out;
}

void write_ohlc_csv(const std::string& path, const std::vector<OhlcBar>& bars) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "date,open,high,low,close\n";
    for (const auto& b : bars)
        f << b.date << ',' << format_double(b.open) << ',' << format_double(b.high) << ','
          << format_double(b.low) << ',' << format_double(b.close) << '\n';
}

OhlcPanel align_ohlc(std::vector<OhlcFile> files, const DateRange& range, double max_missing) {
    if (!(max_missing >= 0.0 && max_missing < 1.0)) throw ConfigError("max_missing must be in [0, 1)");
    if (!range.from.empty()) parse_date(range.from);
    if (!range.to.empty()) parse_date(range.to);
    auto in_range = [&](const std::string& d) {
        return (range.from.empty() || d >= range.from) && (range.to.empty() || d <= range.to);
    };
    OhlcPanel out;
    std::vector<OhlcFile> usable;
    for (auto& f : files) {
        std::vector<OhlcBar> kept;
        for (auto& b : f.bars)
            if (in_range(b.date)) kept.push_back(b);
        f.bars = std::move(kept);
        if (f.bars.empty())
            out.excluded.push_back(f.ticker + ": no parsable rows in range");
        else
            usable.push_back(std::move(f));
    }
    if (usable.size() < 3)
        throw DataError("need at least 3 parsable OHLC files, found " + std::to_string(usable.size()));
    std::set<std::string> all;
    for (const auto& f : usable)
        for (const auto& b : f.bars) all.insert(b.date);
    for (auto& f : usable) {
        double missing = double(all.size() - f.bars.size()) / double(all.size());
        if (missing > max_missing) {
            std::ostringstream msg;
            msg << f.ticker << ": " << (all.size() - f.bars.size()) << " of " << all.size()
                << " dates missing";
            out.excluded.push_back(msg.str());
        } else {
            out.files.push_back(std::move(f));
        }
    }
    if (out.files.size() < 3)
        throw DataError("fewer than 3 tickers left after the missing-data rule");
    std::set<std::string> uni, common;
    for (const auto& b : out.files[0].bars) common.insert(b.date);
    for (const auto& f : out.files) {
        std::set<std::string> mine, next;
        for (const auto& b : f.bars) {
            mine.insert(b.date);
            uni.insert(b.date);
        }
        std::set_intersection(common.begin(), common.end(), mine.begin(), mine.end(),
                              std::inserter(next, next.end()));
        common = std::move(next);
    }
    if (common.size() < 2) throw DataError("empty date intersection across tickers");
    out.dropped_periods = uni.size() - common.size();
    out.dates.assign(common.begin(), common.end());
    for (auto& f : out.files) {
        std::vector<OhlcBar> kept;
        for (auto& b : f.bars)
            if (common.count(b.date)) kept.push_back(b);
        f.bars = std::move(kept);
    }

    const std::size_t N = out.files.size(), L = out.dates.size() - 1;
    ReturnsPanel& p = out.panel;
    p.n_stocks = N;
    p.n_periods = L;
    p.subdivisions = 1;
    p.period = 1.0;
    p.provenance = Provenance::empirical;
    p.daily_returns.resize(long(N), long(L));
    p.stock_qv.resize(long(N), long(L));
    for (std::size_t i = 0; i < N; ++i) {
        const auto& bars = out.files[i].bars;
        p.tickers.push_back(out.files[i].ticker);
        std::vector<double> gk;
        for (std::size_t t = 1; t <= L; ++t) {
            p.daily_returns(long(i), long(t - 1)) = std::log(bars[t].close / bars[t - 1].close);
            gk.push_back(garman_klass_bar(bars[t]));
        }
        apply_floor(gk);
        for (std::size_t t = 0; t < L; ++t) p.stock_qv(long(i), long(t)) = gk[t];
    }
    return out;
}

OhlcPanel load_ohlc_dir(const std::string& dir, const DateRange& range, double max_missing) {
    if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
    std::vector<fs::path> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && lower(e.path().extension().string()) == ".csv")
            paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
    std::vector<OhlcFile> files;
    std::vector<std::string> unreadable;
    for (const auto& p : paths) {
        try {
            files.push_back(read_ohlc_csv(p.string(), p.stem().string()));
        } catch (const DataError& e) {
            unreadable.push_back(p.stem().string() + ": " + e.what());
        }
    }
    auto out = align_ohlc(std::move(files), range, max_missing);
    out.excluded.insert(out.excluded.begin(), unreadable.begin(), unreadable.end());
    return out;
}

std::vector<std::string> business_days(std::size_t n, const std::string& start) {
    using namespace std::chrono;
    sys_days d = parse_date(start);
    std::vector<std::string> out;
    out.reserve(n);
    while (out.size() < n) {
        unsigned wd = weekday{d}.c_encoding();
        if (wd != 0 && wd != 6) out.push_back(format_date(d));
        d += days{1};
    }
    return out;
}

std::vector<std::vector<OhlcBar>> panel_to_ohlc(const ReturnsPanel& panel, double p0,
                                                const std::string& start_date) {
    if (!(p0 > 0.0)) throw ConfigError("start price must be positive");
    const std::size_t N = panel.n_stocks, L = panel.n_periods, s = panel.subdivisions;
    auto dates = business_days(L + 1, start_date);
    std::vector<std::vector<OhlcBar>> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        auto& bars = out[i];
        bars.reserve(L + 1);
        bars.push_back({dates[0], p0, p0, p0, p0});
        double price = p0;
        for (std::size_t t = 0; t < L; ++t) {
            double open = price, hi = price, lo = price;
            if (panel.has_fine()) {
                for (std::size_t k = t * s; k < (t + 1) * s; ++k) {
                    price *= std::exp(panel.fine_returns(long(i), long(k)));
                    hi = std::max(hi, price);
                    lo = std::min(lo, price);
                }
            } else {
                price *= std::exp(panel.daily_returns(long(i), long(t)));
                hi = std::max(hi, price);
                lo = std::min(lo, price);
            }
            bars.push_back({dates[t + 1], open, hi, lo, price});
        }
    }
    return out;
}

std::vector<std::string> export_panel_ohlc(const ReturnsPanel& panel, const std::string& dir,
                                           double start_price) {
    fs::create_directories(dir);
    auto bars = panel_to_ohlc(panel, start_price);
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < bars.size(); ++i) {
        std::string t = i < panel.tickers.size() ? panel.tickers[i] : "S" + std::to_string(i + 1);
        auto p = (fs::path(dir) / (t + ".csv")).string();
        write_ohlc_csv(p, bars[i]);
        paths.push_back(p);
    }
    return paths;
}

void write_gk_csv(const OhlcPanel& p, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << "date";
    for (const auto& t : p.panel.tickers) f << ',' << t;
    f << '\n';
    for (std::size_t t = 0; t < p.panel.n_periods; ++t) {
        f << p.dates[t + 1];
        for (std::size_t i = 0; i < p.panel.n_stocks; ++i)
            f << ',' << format_double(p.panel.stock_qv(long(i), long(t)));
        f << '\n';
    }
}

std::vector<double> read_series_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw DataError("cannot read " + path);
    std::vector<double> out;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(f, line)) {
        ++ln;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv(line);
        bool got = false;
        for (const auto& x : fields) {
            try {
                out.push_back(parse_double(x));
                got = true;
                break;
            } catch (const DataError&) {
            }
        }
        if (!got && ln > 1) throw DataError(path + ": line " + std::to_string(ln) + " has no number");
    }
    if (out.empty()) throw DataError(path + ": no values");
    return out;
}

void write_panel_dir(const ReturnsPanel& p, const std::string& dir, bool fine) {
    fs::create_directories(dir);
    json meta = {{"schema", "nsfbm.panel/1"},
                 {"n_stocks", p.n_stocks},
                 {"n_periods", p.n_periods},
                 {"subdivisions", p.subdivisions},
                 {"period", p.period},
                 {"provenance", p.provenance == Provenance::synthetic ? "synthetic" : "empirical"},
                 {"tickers", p.tickers},
                 {"version", kVersion}};
    write_json_file(meta, (fs::path(dir) / "meta.json").string());
    write_matrix_csv((fs::path(dir) / "daily_returns.csv").string(), p.daily_returns, p.tickers);
    write_panel_csv(p, (fs::path(dir) / "panel_daily.csv").string(), true);
    write_matrix_csv((fs::path(dir) / "stock_qv.csv").string(), p.stock_qv, p.tickers);
    if (p.residual_qv.size())
        write_matrix_csv((fs::path(dir) / "residual_qv.csv").string(), p.residual_qv, p.tickers);
    if (p.factor_qv.size()) {
        Eigen::MatrixXd m(2, p.factor_qv.size());
        m.row(0) = p.factor_qv.transpose();
        m.row(1) = p.factor_daily.transpose();
        write_matrix_csv((fs::path(dir) / "factor.csv").string(), m, {"factor_qv", "factor_return"});
    }
    if (fine) {
        if (!p.has_fine()) throw DataError("panel has no fine-grid returns");
        write_matrix_csv((fs::path(dir) / "fine_returns.csv").string(), p.fine_returns, p.tickers);
    }
}

ReturnsPanel read_panel_dir(const std::string& dir) {
    if (!fs::is_directory(dir)) throw DataError(dir + ": no such panel directory");
    auto meta = read_json_file((fs::path(dir) / "meta.json").string());
    if (meta.value("schema", "") != "nsfbm.panel/1") throw DataError(dir + ": not a panel directory");
    ReturnsPanel p;
    try {
        p.n_stocks = meta.at("n_stocks").get<std::size_t>();
        p.n_periods = meta.at("n_periods").get<std::size_t>();
        p.subdivisions = meta.at("subdivisions").get<std::size_t>();
        p.period = meta.at("period").get<double>();
        p.provenance = meta.at("provenance").get<std::string>() == "synthetic" ? Provenance::synthetic
                                                                                : Provenance::empirical;
        p.tickers = meta.at("tickers").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw DataError(dir + "/meta.json: " + e.what());
    }
    p.daily_returns = read_matrix_csv((fs::path(dir) / "daily_returns.csv").string(), nullptr);
    p.stock_qv = read_matrix_csv((fs::path(dir) / "stock_qv.csv").string(), nullptr);
    if (std::size_t(p.daily_returns.rows()) != p.n_stocks ||
        std::size_t(p.daily_returns.cols()) != p.n_periods || p.stock_qv.rows() != p.daily_returns.rows() ||
        p.stock_qv.cols() != p.daily_returns.cols())
        throw DataError(dir + ": array shapes disagree with meta.json");
    auto fpath = fs::path(dir) / "factor.csv";
    if (fs::exists(fpath)) {
        auto m = read_matrix_csv(fpath.string(), nullptr);
        p.factor_qv = m.row(0).transpose();
        p.factor_daily = m.row(1).transpose();
    }
    auto rpath = fs::path(dir) / "residual_qv.csv";
    if (fs::exists(rpath)) p.residual_qv = read_matrix_csv(rpath.string(), nullptr);
    auto fine = fs::path(dir) / "fine_returns.csv";
    if (fs::exists(fine)) {
        p.fine_returns = read_matrix_csv(fine.string(), nullptr);
        if (std::size_t(p.fine_returns.rows()) != p.n_stocks ||
            std::size_t(p.fine_returns.cols()) != p.n_periods * p.subdivisions)
            throw DataError(fine.string() + ": shape disagrees with meta.json");
    }
    return p;
}

json read_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path);
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

void write_json_file(const json& j, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    f << j.dump(2) << '\n';
}

namespace {

// typed access with config errors naming the key
struct Reader {
    const json& j;
    std::string where;

    void only(std::initializer_list<const char*> keys) const {
        if (!j.is_object()) throw ConfigError(where + ": expected an object");
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool ok = false;
            for (const char* k : keys) ok = ok || it.key() == k;
            if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
        }
    }
    bool has(const char* k) const { return j.contains(k); }
    const json& at(const char* k) const {
        if (!j.contains(k)) throw ConfigError(where + ": missing key '" + std::string(k) + "'");
        return j.at(k);
    }
    double num(const char* k) const {
        const auto& v = at(k);
        if (!v.is_number()) throw ConfigError(where + "." + k + ": expected a number");
        return v.get<double>();
    }
    double num(const char* k, double d) const { return has(k) ? num(k) : d; }
    std::size_t count(const char* k) const {
        const auto& v = at(k);
        if (!v.is_number_integer() || v.get<long long>() < 0)
            throw ConfigError(where + "." + k + ": expected a non-negative integer");
        return v.get<std::size_t>();
    }
    std::size_t count(const char* k, std::size_t d) const { return has(k) ? count(k) : d; }
    int integer(const char* k, int d) const {
        if (!has(k)) return d;
        const auto& v = at(k);
        if (!v.is_number_integer()) throw ConfigError(where + "." + k + ": expected an integer");
        return v.get<int>();
    }
    bool flag(const char* k, bool d) const {
        if (!has(k)) return d;
        const auto& v = at(k);
        if (!v.is_boolean()) throw ConfigError(where + "." + k + ": expected true or false");
        return v.get<bool>();
    }
    std::string str(const char* k, const std::string& d) const {
        if (!has(k)) return d;
        const auto& v = at(k);
        if (!v.is_string()) throw ConfigError(where + "." + k + ": expected a string");
        return v.get<std::string>();
    }
    std::vector<double> numbers(const char* k, std::size_t n) const {
        const auto& v = at(k);
        if (v.is_number()) return std::vector<double>(n, v.get<double>());
        if (!v.is_array() || v.size() != n)
            throw ConfigError(where + "." + k + ": expected a number or an array of " +
                              std::to_string(n) + " numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(where + "." + k + ": non-numeric entry");
            out.push_back(x.get<double>());
        }
        return out;
    }
};

void check_schema(const Reader& r, const std::string& want) {
    auto got = r.str("schema", "");
    if (got != want)
        throw ConfigError(r.where + ": schema must be '" + want + "'" +
                          (got.empty() ? "" : ", got '" + got + "'"));
}

SfbmParams mode_from(const json& j, const std::string& where, double horizon) {
    Reader r{j, where};
    r.only({"hurst", "intermittency_sq", "horizon"});
    return SfbmParams(r.num("hurst"), r.num("intermittency_sq"), r.num("horizon", horizon));
}

}  // namespace

NestedModelSpec model_spec_from_json(const json& j) {
    Reader r{j, "model"};
    r.only({"schema", "n_stocks", "n_periods", "subdivisions", "period", "factor", "idio", "gamma",
            "sigma", "beta", "beta_seed", "vol_sampling", "allow_long_sample"});
    check_schema(r, "nsfbm.model/1");
    NestedModelSpec s;
    s.n_stocks = r.count("n_stocks");
    s.n_periods = r.count("n_periods");
    s.subdivisions = r.count("subdivisions");
    s.period = r.num("period", 1.0);
    const double horizon = double(s.n_periods) * s.period;
    s.factor_mode = mode_from(r.at("factor"), "model.factor", horizon);
    const auto& idio = r.at("idio");
    if (idio.is_array()) {
        if (idio.size() != s.n_stocks) throw ConfigError("model.idio: need one entry per stock");
        for (std::size_t i = 0; i < idio.size(); ++i)
            s.idio_modes.push_back(mode_from(idio[i], "model.idio[" + std::to_string(i) + "]", horizon));
    } else {
        s.idio_modes.assign(s.n_stocks, mode_from(idio, "model.idio", horizon));
    }
    s.gammas = r.numbers("gamma", s.n_stocks);
    const std::uint64_t bseed = r.count("beta_seed", 0);
    auto draw = sample_beta_sigma(s.n_stocks, {kBetaA, kBetaB}, {kSigmaA, kSigmaB}, bseed);
    auto dist_or = [&](const char* k, const std::vector<double>& drawn) {
        if (!r.has(k) || (r.at(k).is_string() && r.at(k).get<std::string>() == "beta_dist"))
            return drawn;
        if (r.at(k).is_string()) throw ConfigError(std::string("model.") + k + ": unknown value");
        return r.numbers(k, s.n_stocks);
    };
    s.betas = dist_or("beta", draw.betas);
    s.sigmas = dist_or("sigma", draw.sigmas);
    auto vs = r.str("vol_sampling", "left_point");
    if (vs == "left_point")
        s.vol_sampling = VolSampling::left_point;
    else if (vs == "cell_average")
        s.vol_sampling = VolSampling::cell_average;
    else
        throw ConfigError("model.vol_sampling: expected left_point or cell_average");
    s.allow_long_sample = r.flag("allow_long_sample", false);
    s.validate();
    return s;
}

json model_spec_to_json(const NestedModelSpec& s) {
    auto mode = [](const SfbmParams& m) {
        return json{{"hurst", m.hurst}, {"intermittency_sq", m.intermittency_sq}, {"horizon", m.horizon}};
    };
    json idio = json::array();
    for (const auto& m : s.idio_modes) idio.push_back(mode(m));
    return {{"schema", "nsfbm.model/1"},
            {"n_stocks", s.n_stocks},
            {"n_periods", s.n_periods},
            {"subdivisions", s.subdivisions},
            {"period", s.period},
            {"factor", mode(s.factor_mode)},
            {"idio", idio},
            {"gamma", s.gammas},
            {"sigma", s.sigmas},
            {"beta", s.betas},
            {"vol_sampling", s.vol_sampling == VolSampling::left_point ? "left_point" : "cell_average"},
            {"allow_long_sample", s.allow_long_sample}};
}

GmmConfig gmm_config_from_json(const json& j, GmmConfig c) {
    Reader r{j, "gmm"};
    r.only({"q", "nugget", "h_lo", "h_hi", "grid_points", "jackknife_blocks", "demean_correction",
            "tol", "bootstrap_paths", "bootstrap_seed"});
    c.q = r.integer("q", c.q);
    c.nugget = r.flag("nugget", c.nugget);
    c.h_lo = r.num("h_lo", c.h_lo);
    c.h_hi = r.num("h_hi", c.h_hi);
    c.grid_points = r.integer("grid_points", c.grid_points);
    c.jackknife_blocks = r.integer("jackknife_blocks", c.jackknife_blocks);
    c.demean_correction = r.flag("demean_correction", c.demean_correction);
    c.tol = r.num("tol", c.tol);
    c.bootstrap_paths = r.integer("bootstrap_paths", c.bootstrap_paths);
    c.bootstrap_seed = r.count("bootstrap_seed", c.bootstrap_seed);
    c.validate();
    return c;
}

json gmm_config_to_json(const GmmConfig& c) {
    return {{"q", c.q},
            {"nugget", c.nugget},
            {"h_lo", c.h_lo},
            {"h_hi", c.h_hi},
            {"grid_points", c.grid_points},
            {"jackknife_blocks", c.jackknife_blocks},
            {"demean_correction", c.demean_correction},
            {"tol", c.tol},
            {"bootstrap_paths", c.bootstrap_paths}};
}

FactorSource parse_factor_source(const std::string& text) {
    FactorSource f;
    if (text == "proxy") {
        f.mode = FactorSource::Mode::proxy;
    } else if (text == "proxy_formula") {
        f.mode = FactorSource::Mode::proxy_formula;
    } else if (text.rfind("external:", 0) == 0) {
        f.mode = FactorSource::Mode::external;
        f.label = text.substr(9);
        if (f.label.empty()) throw ConfigError("external factor source needs a CSV path");
        f.external = read_series_csv(f.label);
    } else {
        throw ConfigError("factor source must be proxy, proxy_formula or external:<csv>, got '" + text + "'");
    }
    return f;
}

CalibrationJob calibration_job_from_json(const json& j) {
    Reader r{j, "calibration"};
    r.only({"schema", "ohlc_dir", "panel_dir", "model", "seed", "date_from", "date_to", "max_missing",
            "factor_source", "gmm", "gamma_method", "gamma_max_lag", "gaussianize",
            "regime_tau_periods"});
    check_schema(r, "nsfbm.calibration/1");
    CalibrationJob job;
    job.ohlc_dir = r.str("ohlc_dir", "");
    job.panel_dir = r.str("panel_dir", "");
    if (r.has("model")) job.model = model_spec_from_json(r.at("model"));
    int sources = int(!job.ohlc_dir.empty()) + int(!job.panel_dir.empty()) + int(job.model.has_value());
    if (sources != 1) throw ConfigError("calibration: give exactly one of ohlc_dir, panel_dir, model");
    job.seed = r.count("seed", 0);
    job.range.from = r.str("date_from", "");
    job.range.to = r.str("date_to", "");
    job.max_missing = r.num("max_missing", 0.05);
    job.factor_source = r.str("factor_source", "proxy");
    if (r.has("gmm")) job.options.gmm = gmm_config_from_json(r.at("gmm"));
    auto gm = r.str("gamma_method", "lagged");
    if (gm == "lagged")
        job.options.gamma_method = GammaMethod::lagged;
    else if (gm == "ols")
        job.options.gamma_method = GammaMethod::ols;
    else
        throw ConfigError("calibration.gamma_method: expected lagged or ols");
    job.options.gamma_max_lag = r.integer("gamma_max_lag", 5);
    job.options.gaussianize = r.flag("gaussianize", true);
    job.options.regime_tau_periods = r.num("regime_tau_periods", 10.0);
    job.options.seed = job.seed;
    return job;
}

json to_json(const HurstFit& f) {
    return {{"hurst", f.hurst},
            {"lambda_sq", f.lambda_sq},
            {"nugget", f.nugget},
            {"objective", f.objective},
            {"lags", f.lags},
            {"se_hurst", f.se_hurst},
            {"se_lambda_sq", f.se_lambda_sq},
            {"se_hurst_jackknife", f.se_hurst_jackknife},
            {"se_hurst_bootstrap", f.se_hurst_bootstrap},
            {"n", f.n},
            {"flags", f.flags}};
}

namespace {

// JSON has no infinity; unbounded margins become null
json finite_or_null(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? json(x) : json(nullptr));
    return a;
}

}  // namespace

json to_json(const RegimeReport& r) {
    return {{"tau", r.tau},
            {"delta", r.delta},
            {"gamma_ok", r.gamma_ok},
            {"beta_upper_ok", r.beta_upper_ok},
            {"subindex_ok", r.subindex_ok},
            {"subindex_lhs", r.subindex_lhs},
            {"subindex_threshold", r.subindex_threshold},
            {"dominance_factor", kDominanceFactor},
            {"gamma_margin", finite_or_null(r.gamma_margin)},
            {"beta_upper_margin", finite_or_null(r.beta_upper_margin)},
            {"gamma_ineq_margin", finite_or_null(r.gamma_ineq_margin)},
            {"beta_ineq_margin", finite_or_null(r.beta_ineq_margin)},
            {"note", r.note}};
}

json to_json(const CalibrationReport& r) {
    json idio = json::array();
    for (const auto& f : r.idio_fits) idio.push_back(to_json(f));
    const auto& d = r.diagnostics;
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    return {{"schema", "nsfbm.report/1"},
            {"version", kVersion},
            {"tickers", r.tickers},
            {"n_periods", r.n_periods},
            {"period", r.period},
            {"beta_hat", r.beta_hat},
            {"beta_iterations", r.beta_iterations},
            {"beta_residual", r.beta_residual},
            {"factor_source", r.factor_source},
            {"factor_fit", to_json(r.factor_fit)},
            {"gamma_method", r.gamma_method},
            {"gamma_hat", r.gamma_hat},
            {"sigma_hat", r.sigma_hat},
            {"idio_fits", idio},
            {"regime", to_json(r.regime)},
            {"diagnostics",
             {{"factor_floor_count", d.factor_floor_count},
              {"residual_floor_counts", d.residual_floor_counts},
              {"residual_method", d.residual_method},
              {"omega_reference_corr", opt(d.omega_reference_corr)},
              {"proxy_ratio_median", opt(d.proxy_ratio_median)},
              {"formula_ratio_median", opt(d.formula_ratio_median)},
              {"dropped_periods", d.dropped_periods},
              {"warnings", d.warnings}}}};
}

void write_stock_table_csv(const CalibrationReport& r, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    write_stock_table_csv(r, f);
}

void write_stock_table_csv(const CalibrationReport& r, std::ostream& f) {
    f << "ticker,beta,sigma,gamma,H_i,lambda_i_sq,se,flags\n";
    for (std::size_t i = 0; i < r.beta_hat.size(); ++i) {
        const auto& h = r.idio_fits[i];
        std::string flags;
        for (const auto& x : h.flags) flags += (flags.empty() ? "" : ";") + x;
        f << (i < r.tickers.size() ? r.tickers[i] : std::to_string(i)) << ','
          << format_double(r.beta_hat[i]) << ',' << format_double(r.sigma_hat[i]) << ','
          << format_double(r.gamma_hat[i]) << ',' << format_double(h.hurst) << ','
          << format_double(h.lambda_sq) << ',' << format_double(h.se_hurst) << ',' << flags << '\n';
    }
}

}  // namespace nsfbm
