#include "spim/report.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "spim/genspace.hpp"

namespace spim {

using nlohmann::json;

Stats compute_stats(std::vector<double> values) {
    Stats s;
    s.n = static_cast<uint32_t>(values.size());
    if (values.empty())
        return s;
    std::sort(values.begin(), values.end());
    s.min = values.front();
    s.max = values.back();
    size_t mid = values.size() / 2;
    s.median = values.size() % 2 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
    double sum = 0;
    for (double v : values)
        sum += v;
    s.mean = sum / double(values.size());
    double sq = 0;
    for (double v : values)
        sq += (v - s.mean) * (v - s.mean);
    s.stdev = values.size() > 1 ? std::sqrt(sq / double(values.size() - 1)) : 0.0;
    return s;
}

StatsTable aggregate(const std::vector<RunRecord>& records) {
    std::map<StatsKey, std::vector<double>> buckets;
    for (const auto& r : records) {
        for (const auto& s : r.samples) {
            auto put = [&](Metric m, double v) {
                buckets[{r.setup_name, s.vm, s.bench, m}].push_back(v);
            };
            if (s.time_ms) put(Metric::time_ms, *s.time_ms);
            if (s.llc_miss) put(Metric::llc_miss, double(*s.llc_miss));
            if (s.bus_cycles) put(Metric::bus_cycles, double(*s.bus_cycles));
            if (s.mem_access) put(Metric::mem_access, double(*s.mem_access));
            if (s.retired_ops) put(Metric::retired_ops, double(*s.retired_ops));
        }
    }
    StatsTable table;
    for (auto& [key, values] : buckets)
        table[key] = compute_stats(std::move(values));
    return table;
}

std::vector<RunRecord> load_records(const std::filesystem::path& results_dir) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (!fs::is_directory(results_dir))
        throw std::runtime_error("results directory '" + results_dir.string() + "' does not exist");
    for (const auto& entry : fs::directory_iterator(results_dir)) {
        std::string name = entry.path().filename().string();
        if (name.rfind("run_", 0) == 0 && entry.path().extension() == ".json")
            files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<RunRecord> records;
    for (const auto& f : files) {
        std::ifstream in(f);
        std::ostringstream buf;
        buf << in.rdbuf();
        records.push_back(run_record_from_json(buf.str()));
    }
    return records;
}

std::map<std::string, std::string> baseline_match(const std::vector<std::string>& setup_names) {
    std::set<std::string> names(setup_names.begin(), setup_names.end());
    std::map<std::string, std::string> match;
    std::vector<std::string> unmatched;
    for (const auto& name : setup_names) {
        SetupNameParts parts = parse_setup_name(name);
        std::string baseline;
        if (parts.solo) {
            // coloring-overhead solos compare against the plain baseline
            baseline = "solo";
        } else if (parts.colors) {
            std::string colored = "solo_cc_" + std::to_string(*parts.colors);
            baseline = names.count(colored) ? colored : "solo";
        } else {
            baseline = "solo";
        }
        if (!names.count(baseline)) {
            unmatched.push_back(name);
            continue;
        }
        match[name] = baseline;
    }
    if (!unmatched.empty()) {
        std::string list;
        for (const auto& n : unmatched)
            list += (list.empty() ? "" : ", ") + n;
        throw std::runtime_error("missing baseline for: " + list);
    }
    return match;
}

SlowdownRow slowdown(const std::string& setup, const std::string& vm, const std::string& bench,
                     const std::string& baseline, const StatsTable& stats) {
    auto stat = [&](const std::string& s, Metric m) -> const Stats* {
        auto it = stats.find({s, vm, bench, m});
        return it == stats.end() ? nullptr : &it->second;
    };
    const Stats* t = stat(setup, Metric::time_ms);
    const Stats* bt = stat(baseline, Metric::time_ms);
    if (!t || t->n < 1 || !bt || bt->n < 1)
        throw std::runtime_error("no time_ms stats for " + setup + " vs " + baseline);
    if (bt->mean == 0)
        throw std::runtime_error("zero baseline mean for " + baseline + "/" + bench);

    SlowdownRow row;
    row.setup = setup;
    row.bench = bench;
    row.baseline = baseline;
    row.slowdown = t->mean / bt->mean;
    row.n = t->n;
    auto ratio = [&](Metric m) -> std::optional<double> {
        const Stats* a = stat(setup, m);
        const Stats* b = stat(baseline, m);
        if (!a || !b || b->mean == 0)
            return std::nullopt;
        return a->mean / b->mean;
    };
    row.llc_miss_ratio = ratio(Metric::llc_miss);
    row.bus_cycles_ratio = ratio(Metric::bus_cycles);
    row.mem_access_ratio = ratio(Metric::mem_access);
    return row;
}

std::vector<SlowdownRow> build_rows(const StatsTable& stats) {
    std::set<std::string> setup_names;
    std::set<std::tuple<std::string, std::string, std::string>> triples;
    for (const auto& [key, st] : stats) {
        setup_names.insert(std::get<0>(key));
        triples.insert({std::get<0>(key), std::get<1>(key), std::get<2>(key)});
    }
    auto match = baseline_match({setup_names.begin(), setup_names.end()});
    std::vector<SlowdownRow> rows;
    for (const auto& [setup, vm, bench] : triples)
        rows.push_back(slowdown(setup, vm, bench, match.at(setup), stats));
    return rows;
}

uint32_t diminishing_returns(const std::vector<std::pair<uint32_t, double>>& series,
                             double epsilon) {
    if (series.size() < 2)
        throw std::invalid_argument("need at least two points");
    for (size_t i = 1; i < series.size(); ++i)
        if (series[i].first <= series[i - 1].first)
            throw std::invalid_argument("series must be sorted by color count ascending");

    for (size_t k = 0; k < series.size(); ++k) {
        bool flat = true;
        for (size_t j = k; j + 1 < series.size(); ++j) {
            if (series[j].second - series[j + 1].second >= epsilon) {
                flat = false;
                break;
            }
        }
        if (flat)
            return series[k].first;
    }
    return series.back().first;
}

// --- exports ---

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"')
            out += "\"\"";
        else
            out += c;
    }
    return out + "\"";
}

std::string two_dec(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

json row_to_json(const SlowdownRow& r) {
    json j;
    j["setup"] = r.setup;
    j["bench"] = r.bench;
    j["baseline"] = r.baseline;
    j["slowdown"] = r.slowdown;
    j["llc_miss_ratio"] = r.llc_miss_ratio ? json(*r.llc_miss_ratio) : json(nullptr);
    j["bus_cycles_ratio"] = r.bus_cycles_ratio ? json(*r.bus_cycles_ratio) : json(nullptr);
    j["mem_access_ratio"] = r.mem_access_ratio ? json(*r.mem_access_ratio) : json(nullptr);
    j["n"] = r.n;
    return j;
}

} // namespace

std::string render_report_csv(const std::vector<SlowdownRow>& rows) {
    std::ostringstream out;
    out << "setup,bench,baseline,slowdown,llc_miss_ratio,bus_cycles_ratio,mem_access_ratio,n\n";
    for (const auto& r : rows) {
        out << csv_quote(r.setup) << "," << csv_quote(r.bench) << "," << csv_quote(r.baseline)
            << "," << two_dec(r.slowdown) << ",";
        if (r.llc_miss_ratio)
            out << two_dec(*r.llc_miss_ratio);
        out << ",";
        if (r.bus_cycles_ratio)
            out << two_dec(*r.bus_cycles_ratio);
        out << ",";
        if (r.mem_access_ratio)
            out << two_dec(*r.mem_access_ratio);
        out << "," << r.n << "\n";
    }
    return out.str();
}

std::vector<SlowdownRow> parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<SlowdownRow> rows;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        if (header) {
            header = false;
            continue;
        }
        auto f = csv_split(line);
        if (f.size() != 8)
            throw std::runtime_error("malformed report row: " + line);
        SlowdownRow r;
        r.setup = f[0];
        r.bench = f[1];
        r.baseline = f[2];
        r.slowdown = std::stod(f[3]);
        if (!f[4].empty()) r.llc_miss_ratio = std::stod(f[4]);
        if (!f[5].empty()) r.bus_cycles_ratio = std::stod(f[5]);
        if (!f[6].empty()) r.mem_access_ratio = std::stod(f[6]);
        r.n = static_cast<uint32_t>(std::stoul(f[7]));
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string render_report_json(const std::vector<SlowdownRow>& rows, const StatsTable& stats) {
    json doc;
    json jrows = json::array();
    for (const auto& r : rows)
        jrows.push_back(row_to_json(r));
    doc["rows"] = jrows;
    json jstats = json::array();
    for (const auto& [key, st] : stats) {
        json j;
        j["setup"] = std::get<0>(key);
        j["vm"] = std::get<1>(key);
        j["bench"] = std::get<2>(key);
        j["metric"] = to_string(std::get<3>(key));
        j["mean"] = st.mean;
        j["median"] = st.median;
        j["min"] = st.min;
        j["max"] = st.max;
        j["stdev"] = st.stdev;
        j["n"] = st.n;
        jstats.push_back(j);
    }
    doc["stats"] = jstats;
    return doc.dump(2) + "\n";
}

namespace {

// Plot series derived from the rows: buffer-size growth for uncolored
// interference, color ladders for solo overhead and for each interference
// scenario, and per-event ratio bars.
void write_plotdata(const std::vector<SlowdownRow>& rows, const StatsTable& stats,
                    const std::filesystem::path& dir) {
    namespace fs = std::filesystem;

    auto series_file = [&](const std::string& figure, const std::string& name) {
        fs::create_directories(dir / figure);
        return std::ofstream(dir / figure / (name + ".csv"));
    };

    // slowdown vs buffer size (uncolored, unregulated interference)
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<uint64_t, double>>> growth;
    // per (bench, access+size): colors ladder, 0 = uncolored; vs plain solo
    std::map<std::pair<std::string, std::string>, std::map<uint32_t, double>> mitigation;
    // solo overhead ladder per bench
    std::map<std::string, std::map<uint32_t, double>> overhead;

    // plain-solo mean per (vm, bench) for the mitigation ladder
    std::map<std::pair<std::string, std::string>, double> solo_mean;
    for (const auto& [key, st] : stats)
        if (std::get<0>(key) == "solo" && std::get<3>(key) == Metric::time_ms)
            solo_mean[{std::get<1>(key), std::get<2>(key)}] = st.mean;

    for (const auto& r : rows) {
        SetupNameParts parts = parse_setup_name(r.setup);
        if (parts.solo) {
            if (parts.colors)
                overhead[r.bench][*parts.colors] = r.slowdown;
            continue;
        }
        if (!parts.access || !parts.buffer_bytes)
            continue;
        std::string access = to_string(*parts.access);
        if (!parts.colors && parts.mbr.empty())
            growth[{r.bench, access}].push_back({*parts.buffer_bytes, r.slowdown});
        if (parts.mbr.empty()) {
            // ladder entries are normalized to the plain solo baseline
            for (const auto& [key, st] : stats) {
                if (std::get<0>(key) != r.setup || std::get<2>(key) != r.bench ||
                    std::get<3>(key) != Metric::time_ms)
                    continue;
                auto solo_it = solo_mean.find({std::get<1>(key), std::get<2>(key)});
                if (solo_it == solo_mean.end() || solo_it->second == 0)
                    continue;
                std::string scenario = access + "_" + format_size(*parts.buffer_bytes);
                mitigation[{r.bench, scenario}][parts.colors.value_or(0)] =
                    st.mean / solo_it->second;
            }
        }
    }

    for (auto& [key, points] : growth) {
        std::sort(points.begin(), points.end());
        auto out = series_file("slowdown_vs_buffer", key.first + "_" + key.second);
        out << "x,slowdown\n";
        for (const auto& [x, y] : points)
            out << x << "," << two_dec(y) << "\n";
    }
    for (auto& [bench, ladder] : overhead) {
        auto out = series_file("coloring_solo", bench);
        out << "x,slowdown\n";
        for (const auto& [k, y] : ladder)
            out << k << "," << two_dec(y) << "\n";
    }
    for (auto& [key, ladder] : mitigation) {
        auto out = series_file("coloring_mitigation", key.first + "_" + key.second);
        out << "x,slowdown\n";
        for (const auto& [k, y] : ladder)
            out << k << "," << two_dec(y) << "\n";
    }

    // PMU-event ratio bars, one series per (bench, metric)
    std::map<std::pair<std::string, std::string>, std::vector<std::pair<std::string, double>>> bars;
    for (const auto& r : rows) {
        if (r.llc_miss_ratio)
            bars[{r.bench, "llc_miss"}].push_back({r.setup, *r.llc_miss_ratio});
        if (r.bus_cycles_ratio)
            bars[{r.bench, "bus_cycles"}].push_back({r.setup, *r.bus_cycles_ratio});
        if (r.mem_access_ratio)
            bars[{r.bench, "mem_access"}].push_back({r.setup, *r.mem_access_ratio});
    }
    for (auto& [key, points] : bars) {
        auto out = series_file("events", key.first + "_" + key.second);
        out << "x,value\n";
        for (const auto& [x, y] : points)
            out << csv_quote(x) << "," << two_dec(y) << "\n";
    }
}

} // namespace

void export_report(const std::vector<SlowdownRow>& rows, const StatsTable& stats,
                   ReportFormat format, const std::filesystem::path& out) {
    if (rows.empty())
        throw std::runtime_error("nothing to export: no rows");
    namespace fs = std::filesystem;
    switch (format) {
    case ReportFormat::csv: {
        if (out.has_parent_path())
            fs::create_directories(out.parent_path());
        std::ofstream f(out);
        if (!f)
            throw std::runtime_error("cannot write " + out.string());
        f << render_report_csv(rows);
        break;
    }
    case ReportFormat::json: {
        if (out.has_parent_path())
            fs::create_directories(out.parent_path());
        std::ofstream f(out);
        if (!f)
            throw std::runtime_error("cannot write " + out.string());
        f << render_report_json(rows, stats);
        break;
    }
    case ReportFormat::plotdata:
        fs::create_directories(out);
        write_plotdata(rows, stats, out);
        break;
    }
}

} // namespace spim
