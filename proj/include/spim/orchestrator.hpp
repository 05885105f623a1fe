#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "spim/backend.hpp"
#include "spim/genspace.hpp"
#include "spim/logmon.hpp"

namespace spim {

enum class RunStatus { complete, timeout, parse_error };

const char* to_string(RunStatus s);

struct RunRecord {
    uint64_t setup_id = 0;
    std::string setup_name;
    std::string backend;
    std::string started_at; // ISO 8601 UTC
    std::string ended_at;
    RunStatus status = RunStatus::timeout;
    std::vector<MetricsSample> samples;
    std::map<std::string, std::string> raw_log_paths; // vm -> path
    std::vector<std::string> parse_errors;
    std::vector<std::string> warnings;
};

std::string run_record_to_json(const RunRecord& r);
RunRecord run_record_from_json(const std::string& text);

/// Runs one setup: starts the backend, collects every channel until all
/// victim benchmarks END or the timeout elapses, tees raw lines to
/// <raw_dir>/<setup_name>/<vm>.log, and derives the record status.
RunRecord run_setup(const Setup& setup, Backend& backend, uint32_t repetitions, double timeout_s,
                    const std::filesystem::path& raw_dir);

struct SweepOptions {
    unsigned jobs = 1;
    bool force = false; // rerun setups with an existing complete record
};

struct SweepSummary {
    uint64_t total = 0;
    uint64_t complete = 0;
    uint64_t timeout = 0;
    uint64_t parse_error = 0;
    uint64_t failed = 0;   // backend/start errors, no record written
    uint64_t skipped = 0;  // resumed from an existing complete record
    uint64_t executed = 0;
    std::vector<std::string> errors;

    bool all_complete() const { return complete + skipped == total; }
};

std::string sweep_summary_to_json(const SweepSummary& s);

using BackendFactory = std::function<std::unique_ptr<Backend>()>;

/// Runs every setup in manifest order (or with `jobs` workers for
/// deterministic backends), writing run_<id>.json per setup plus
/// sweep_summary.json. Setups with an existing complete record are skipped
/// unless forced; per-setup failures never abort the sweep.
SweepSummary run_sweep(const Manifest& manifest, const BackendFactory& factory,
                       const std::filesystem::path& results_dir, const SweepOptions& opts = {});

} // namespace spim
