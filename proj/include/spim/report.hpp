#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "spim/logmon.hpp"
#include "spim/orchestrator.hpp"

namespace spim {

struct Stats {
    double mean = 0, median = 0, min = 0, max = 0, stdev = 0;
    uint32_t n = 0;
};

// (setup, vm, bench, metric) -> stats over repetitions
using StatsKey = std::tuple<std::string, std::string, std::string, Metric>;
using StatsTable = std::map<StatsKey, Stats>;

StatsTable aggregate(const std::vector<RunRecord>& records);
Stats compute_stats(std::vector<double> values);

struct SlowdownRow {
    std::string setup;
    std::string bench;
    std::string baseline;
    double slowdown = 0;
    std::optional<double> llc_miss_ratio;
    std::optional<double> bus_cycles_ratio;
    std::optional<double> mem_access_ratio;
    uint32_t n = 0;

    bool operator==(const SlowdownRow&) const = default;
};

std::vector<RunRecord> load_records(const std::filesystem::path& results_dir);

/// Baseline for every setup name: plain `solo` for uncolored interference,
/// `solo_cc_<k>` (when present) for colored interference, `solo` for the
/// coloring-overhead solos, itself for `solo`. Throws listing setups whose
/// baseline is missing.
std::map<std::string, std::string> baseline_match(const std::vector<std::string>& setup_names);

SlowdownRow slowdown(const std::string& setup, const std::string& vm, const std::string& bench,
                     const std::string& baseline, const StatsTable& stats);

/// All rows for the records in a stats table, one per (setup, vm, bench).
std::vector<SlowdownRow> build_rows(const StatsTable& stats);

/// Smallest k such that every consecutive improvement at or beyond k stays
/// below epsilon; the last k when improvements never level off.
uint32_t diminishing_returns(const std::vector<std::pair<uint32_t, double>>& series, double epsilon);

enum class ReportFormat { csv, json, plotdata };

std::string render_report_csv(const std::vector<SlowdownRow>& rows);
std::vector<SlowdownRow> parse_report_csv(const std::string& text);
std::string render_report_json(const std::vector<SlowdownRow>& rows, const StatsTable& stats);

/// csv/json write a single file at `out`; plotdata writes per-figure series
/// under the directory `out`.
void export_report(const std::vector<SlowdownRow>& rows, const StatsTable& stats,
                   ReportFormat format, const std::filesystem::path& out);

} // namespace spim
