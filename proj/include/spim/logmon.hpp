#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace spim {

enum class Metric { time_ms, llc_miss, bus_cycles, mem_access, retired_ops };

const char* to_string(Metric m);
std::optional<Metric> metric_from_string(std::string_view s);

/// One line of the wire protocol:
///   SPIM;v1;<run_id>;<vm>;<bench>;<iter>;<metric>;<value>
///   SPIM;v1;<run_id>;<vm>;<bench>;END
struct MetricEvent {
    std::string run_id;
    std::string vm;
    std::string bench;
    bool is_end = false;
    uint32_t iteration = 0;       // unset for END
    Metric metric = Metric::time_ms;
    double value = 0.0;           // canonical on the 1/1000 grid

    bool operator==(const MetricEvent& o) const {
        if (run_id != o.run_id || vm != o.vm || bench != o.bench || is_end != o.is_end)
            return false;
        if (is_end)
            return true;
        return iteration == o.iteration && metric == o.metric && value == o.value;
    }
};

struct ParsedLine {
    enum class Kind { event, ignored, error } kind = Kind::ignored;
    MetricEvent event;   // valid when kind == event
    std::string error;   // valid when kind == error
    std::string raw;
};

ParsedLine parse_line(std::string_view line);
std::string emit_line(const MetricEvent& event); // no trailing newline

/// Rounds onto the grid emit_line renders exactly (three fractional digits).
double canonical_value(double v);

/// One benchmark execution's counters, grouped from events. Fields are
/// optional because a backend may not report every metric.
struct MetricsSample {
    std::string vm;
    std::string bench;
    uint32_t iteration = 0;
    std::optional<double> time_ms;
    std::optional<uint64_t> llc_miss;
    std::optional<uint64_t> bus_cycles;
    std::optional<uint64_t> mem_access;
    std::optional<uint64_t> retired_ops;

    bool operator==(const MetricsSample&) const = default;
};

std::vector<MetricEvent> sample_to_events(const MetricsSample& s, const std::string& run_id);

/// A newline-delimited text source. next_line blocks up to `wait` and
/// returns nullopt on timeout or EOF (check closed() to distinguish).
class LineChannel {
public:
    virtual ~LineChannel() = default;
    virtual std::optional<std::string> next_line(std::chrono::milliseconds wait) = 0;
    virtual bool closed() const = 0;
};

struct NamedChannel {
    std::string vm;
    std::shared_ptr<LineChannel> channel;
};

using StreamKey = std::pair<std::string, std::string>; // (vm, bench)

struct CollectResult {
    std::vector<MetricsSample> samples;      // canonical (vm, bench, iteration) order
    std::vector<MetricEvent> leftovers;      // events arriving after their stream's END
    std::vector<std::string> warnings;       // e.g. duplicate metrics (last wins)
    std::vector<std::string> parse_errors;   // offending raw lines
    std::set<StreamKey> ended;               // streams that produced END
    bool timed_out = false;
};

/// Consumes every channel (one consumer thread per channel, lines tee'd to
/// `sink` if given) until all expected (vm, bench) streams END or the
/// timeout elapses, then groups events into samples.
CollectResult collect(const std::vector<NamedChannel>& channels,
                      const std::set<StreamKey>& expected,
                      std::chrono::milliseconds timeout,
                      const std::function<void(const std::string& vm, const std::string& line)>* sink = nullptr);

} // namespace spim
