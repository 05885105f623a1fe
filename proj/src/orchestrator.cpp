#include "spim/orchestrator.hpp"

#include <atomic>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace spim {

using nlohmann::json;

const char* to_string(RunStatus s) {
    switch (s) {
    case RunStatus::complete: return "complete";
    case RunStatus::timeout: return "timeout";
    default: return "parse_error";
    }
}

namespace {

std::string iso_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json sample_to_json(const MetricsSample& s) {
    json j;
    j["vm"] = s.vm;
    j["bench"] = s.bench;
    j["iteration"] = s.iteration;
    if (s.time_ms) j["time_ms"] = *s.time_ms;
    if (s.llc_miss) j["llc_miss"] = *s.llc_miss;
    if (s.bus_cycles) j["bus_cycles"] = *s.bus_cycles;
    if (s.mem_access) j["mem_access"] = *s.mem_access;
    if (s.retired_ops) j["retired_ops"] = *s.retired_ops;
    return j;
}

MetricsSample sample_from_json(const json& j) {
    MetricsSample s;
    s.vm = j.at("vm").get<std::string>();
    s.bench = j.at("bench").get<std::string>();
    s.iteration = j.at("iteration").get<uint32_t>();
    if (j.contains("time_ms")) s.time_ms = j.at("time_ms").get<double>();
    if (j.contains("llc_miss")) s.llc_miss = j.at("llc_miss").get<uint64_t>();
    if (j.contains("bus_cycles")) s.bus_cycles = j.at("bus_cycles").get<uint64_t>();
    if (j.contains("mem_access")) s.mem_access = j.at("mem_access").get<uint64_t>();
    if (j.contains("retired_ops")) s.retired_ops = j.at("retired_ops").get<uint64_t>();
    return s;
}

} // namespace

std::string run_record_to_json(const RunRecord& r) {
    json doc;
    doc["setup_id"] = r.setup_id;
    doc["setup_name"] = r.setup_name;
    doc["backend"] = r.backend;
    doc["started_at"] = r.started_at;
    doc["ended_at"] = r.ended_at;
    doc["status"] = to_string(r.status);
    json samples = json::array();
    for (const auto& s : r.samples)
        samples.push_back(sample_to_json(s));
    doc["samples"] = samples;
    doc["raw_logs"] = r.raw_log_paths;
    doc["parse_errors"] = r.parse_errors;
    doc["warnings"] = r.warnings;
    return doc.dump(2) + "\n";
}

RunRecord run_record_from_json(const std::string& text) {
    json doc = json::parse(text);
    RunRecord r;
    r.setup_id = doc.at("setup_id").get<uint64_t>();
    r.setup_name = doc.at("setup_name").get<std::string>();
    r.backend = doc.at("backend").get<std::string>();
    r.started_at = doc.at("started_at").get<std::string>();
    r.ended_at = doc.at("ended_at").get<std::string>();
    std::string status = doc.at("status").get<std::string>();
    r.status = status == "complete" ? RunStatus::complete
               : status == "timeout" ? RunStatus::timeout
                                     : RunStatus::parse_error;
    for (const auto& sj : doc.at("samples"))
        r.samples.push_back(sample_from_json(sj));
    for (auto it = doc.at("raw_logs").begin(); it != doc.at("raw_logs").end(); ++it)
        r.raw_log_paths[it.key()] = it.value().get<std::string>();
    for (const auto& e : doc.at("parse_errors"))
        r.parse_errors.push_back(e.get<std::string>());
    for (const auto& w : doc.at("warnings"))
        r.warnings.push_back(w.get<std::string>());
    return r;
}

RunRecord run_setup(const Setup& setup, Backend& backend, uint32_t repetitions, double timeout_s,
                    const std::filesystem::path& raw_dir) {
    namespace fs = std::filesystem;

    RunRecord record;
    record.setup_id = setup.id;
    record.setup_name = setup.name;
    record.backend = backend.name();
    record.started_at = iso_now();

    std::set<StreamKey> expected;
    for (const auto& g : setup.guests)
        if (g.victim)
            expected.insert({g.name, g.victim->bench_name});

    std::vector<NamedChannel> channels;
    try {
        channels = backend.start(setup);
    } catch (const SimTimeout& e) {
        // non-terminating workload: record the timeout instead of failing
        backend.stop();
        record.status = RunStatus::timeout;
        record.warnings.push_back(e.what());
        record.ended_at = iso_now();
        return record;
    } catch (const std::exception& e) {
        backend.stop();
        throw std::runtime_error("backend start failed for setup " + std::to_string(setup.id) +
                                 " ('" + setup.name + "'): " + e.what());
    }

    fs::path setup_raw = raw_dir / setup.name;
    fs::create_directories(setup_raw);
    std::map<std::string, std::ofstream> logs;
    std::mutex log_mu; // one stream per vm; map lookup needs the lock
    for (const auto& ch : channels) {
        fs::path p = setup_raw / (ch.vm + ".log");
        logs[ch.vm].open(p, std::ios::trunc);
        record.raw_log_paths[ch.vm] = p.string();
    }
    std::function<void(const std::string&, const std::string&)> sink =
        [&](const std::string& vm, const std::string& line) {
            std::lock_guard<std::mutex> lock(log_mu);
            auto it = logs.find(vm);
            if (it != logs.end())
                it->second << line << "\n";
        };

    auto timeout = std::chrono::milliseconds(static_cast<int64_t>(timeout_s * 1000));
    CollectResult collected = collect(channels, expected, timeout, &sink);
    backend.stop();
    {
        std::lock_guard<std::mutex> lock(log_mu);
        for (auto& [vm, out] : logs)
            out.flush();
    }

    record.samples = std::move(collected.samples);
    record.parse_errors = std::move(collected.parse_errors);
    record.warnings = std::move(collected.warnings);

    // Completeness: every expected stream ENDed and carries at least
    // `repetitions` values for every metric it reports at all.
    bool complete = !collected.timed_out;
    for (const auto& key : expected) {
        std::map<Metric, uint32_t> metric_counts;
        for (const auto& s : record.samples) {
            if (s.vm != key.first || s.bench != key.second)
                continue;
            if (s.time_ms) metric_counts[Metric::time_ms]++;
            if (s.llc_miss) metric_counts[Metric::llc_miss]++;
            if (s.bus_cycles) metric_counts[Metric::bus_cycles]++;
            if (s.mem_access) metric_counts[Metric::mem_access]++;
            if (s.retired_ops) metric_counts[Metric::retired_ops]++;
        }
        if (metric_counts.empty() || metric_counts[Metric::time_ms] < repetitions) {
            complete = false;
            continue;
        }
        for (const auto& [m, count] : metric_counts)
            if (count < repetitions)
                complete = false;
    }

    if (complete && record.parse_errors.empty())
        record.status = RunStatus::complete;
    else if (!record.parse_errors.empty())
        record.status = RunStatus::parse_error;
    else
        record.status = RunStatus::timeout;

    for (const auto& e : collected.leftovers)
        record.warnings.push_back("event after END for " + e.vm + "/" + e.bench + ": " +
                                  emit_line(e));

    record.ended_at = iso_now();
    return record;
}

std::string sweep_summary_to_json(const SweepSummary& s) {
    json doc;
    doc["total"] = s.total;
    doc["complete"] = s.complete;
    doc["timeout"] = s.timeout;
    doc["parse_error"] = s.parse_error;
    doc["failed"] = s.failed;
    doc["skipped"] = s.skipped;
    doc["executed"] = s.executed;
    doc["errors"] = s.errors;
    return doc.dump(2) + "\n";
}

SweepSummary run_sweep(const Manifest& manifest, const BackendFactory& factory,
                       const std::filesystem::path& results_dir, const SweepOptions& opts) {
    namespace fs = std::filesystem;
    fs::create_directories(results_dir);
    fs::path raw_dir = results_dir / "raw";

    SweepSummary summary;
    summary.total = manifest.setups.size();

    std::mutex mu;
    std::atomic<size_t> next{0};

    auto worker = [&] {
        auto backend = factory();
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= manifest.setups.size())
                break;
            const Setup& setup = manifest.setups[i];
            fs::path record_path = results_dir / ("run_" + std::to_string(setup.id) + ".json");

            if (!opts.force && fs::exists(record_path)) {
                try {
                    std::ifstream in(record_path);
                    std::ostringstream buf;
                    buf << in.rdbuf();
                    RunRecord prev = run_record_from_json(buf.str());
                    if (prev.status == RunStatus::complete) {
                        std::lock_guard<std::mutex> lock(mu);
                        summary.skipped++;
                        continue;
                    }
                } catch (const std::exception&) {
                    // unreadable record: rerun
                }
            }

            try {
                RunRecord rec =
                    run_setup(setup, *backend, manifest.repetitions, setup.timeout_s, raw_dir);
                std::ofstream(record_path) << run_record_to_json(rec);
                std::lock_guard<std::mutex> lock(mu);
                summary.executed++;
                switch (rec.status) {
                case RunStatus::complete: summary.complete++; break;
                case RunStatus::timeout: summary.timeout++; break;
                case RunStatus::parse_error: summary.parse_error++; break;
                }
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(mu);
                summary.executed++;
                summary.failed++;
                summary.errors.push_back(e.what());
            }
        }
    };

    unsigned jobs = std::max(1u, opts.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
        for (auto& t : pool)
            t.join();
    }

    std::ofstream(results_dir / "sweep_summary.json") << sweep_summary_to_json(summary);
    return summary;
}

} // namespace spim
