#include "spim/logmon.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

namespace spim {

namespace {
constexpr std::string_view kPrefix = "SPIM;";
constexpr std::string_view kVersion = "v1";
} // namespace

const char* to_string(Metric m) {
    switch (m) {
    case Metric::time_ms: return "time_ms";
    case Metric::llc_miss: return "llc_miss";
    case Metric::bus_cycles: return "bus_cycles";
    case Metric::mem_access: return "mem_access";
    default: return "retired_ops";
    }
}

std::optional<Metric> metric_from_string(std::string_view s) {
    if (s == "time_ms") return Metric::time_ms;
    if (s == "llc_miss") return Metric::llc_miss;
    if (s == "bus_cycles") return Metric::bus_cycles;
    if (s == "mem_access") return Metric::mem_access;
    if (s == "retired_ops") return Metric::retired_ops;
    return std::nullopt;
}

double canonical_value(double v) {
    return std::llround(v * 1000.0) / 1000.0;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view s) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (true) {
        size_t sep = s.find(';', start);
        if (sep == std::string_view::npos) {
            out.push_back(s.substr(start));
            break;
        }
        out.push_back(s.substr(start, sep - start));
        start = sep + 1;
    }
    return out;
}

std::string render_value(double v) {
    double c = canonical_value(v);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f", c);
    std::string s = buf;
    while (!s.empty() && s.back() == '0')
        s.pop_back();
    if (!s.empty() && s.back() == '.')
        s.pop_back();
    return s;
}

ParsedLine error_line(std::string_view raw, std::string message) {
    ParsedLine p;
    p.kind = ParsedLine::Kind::error;
    p.raw = std::string(raw);
    p.error = std::move(message);
    return p;
}

} // namespace

ParsedLine parse_line(std::string_view line) {
    while (!line.empty() && (line.back() == '\n' || line.back() == '\r'))
        line.remove_suffix(1);

    ParsedLine p;
    p.raw = std::string(line);
    if (line.substr(0, kPrefix.size()) != kPrefix) {
        p.kind = ParsedLine::Kind::ignored;
        return p;
    }

    auto f = split_fields(line);
    if (f.size() < 2 || f[1] != kVersion)
        return error_line(line, "unsupported protocol version");

    if (f.size() == 6 && f[5] == "END") {
        p.kind = ParsedLine::Kind::event;
        p.event.run_id = std::string(f[2]);
        p.event.vm = std::string(f[3]);
        p.event.bench = std::string(f[4]);
        p.event.is_end = true;
        return p;
    }
    if (f.size() != 8)
        return error_line(line, "malformed field count (" + std::to_string(f.size()) + ")");

    MetricEvent e;
    e.run_id = std::string(f[2]);
    e.vm = std::string(f[3]);
    e.bench = std::string(f[4]);

    const std::string iter(f[5]);
    if (iter.empty() || !std::all_of(iter.begin(), iter.end(), [](unsigned char c) {
            return std::isdigit(c);
        }))
        return error_line(line, "malformed iteration '" + iter + "'");
    e.iteration = static_cast<uint32_t>(std::stoul(iter));

    auto metric = metric_from_string(f[6]);
    if (!metric)
        return error_line(line, "unknown metric '" + std::string(f[6]) + "'");
    e.metric = *metric;

    const std::string value(f[7]);
    char* end = nullptr;
    double v = std::strtod(value.c_str(), &end);
    if (value.empty() || end != value.c_str() + value.size() || !std::isfinite(v))
        return error_line(line, "non-numeric value '" + value + "'");
    if (v < 0)
        return error_line(line, "negative value '" + value + "'");
    e.value = v;

    p.kind = ParsedLine::Kind::event;
    p.event = std::move(e);
    return p;
}

std::string emit_line(const MetricEvent& e) {
    std::string out = "SPIM;v1;" + e.run_id + ";" + e.vm + ";" + e.bench;
    if (e.is_end)
        return out + ";END";
    out += ";" + std::to_string(e.iteration);
    out += ";";
    out += to_string(e.metric);
    out += ";" + render_value(e.value);
    return out;
}

std::vector<MetricEvent> sample_to_events(const MetricsSample& s, const std::string& run_id) {
    std::vector<MetricEvent> out;
    auto push = [&](Metric m, double v) {
        MetricEvent e;
        e.run_id = run_id;
        e.vm = s.vm;
        e.bench = s.bench;
        e.iteration = s.iteration;
        e.metric = m;
        e.value = canonical_value(v);
        out.push_back(std::move(e));
    };
    if (s.time_ms) push(Metric::time_ms, *s.time_ms);
    if (s.llc_miss) push(Metric::llc_miss, double(*s.llc_miss));
    if (s.bus_cycles) push(Metric::bus_cycles, double(*s.bus_cycles));
    if (s.mem_access) push(Metric::mem_access, double(*s.mem_access));
    if (s.retired_ops) push(Metric::retired_ops, double(*s.retired_ops));
    return out;
}

namespace {

struct ChannelTake {
    std::vector<MetricEvent> events; // arrival order within the channel
    std::vector<std::string> errors;
};

} // namespace

CollectResult collect(const std::vector<NamedChannel>& channels,
                      const std::set<StreamKey>& expected,
                      std::chrono::milliseconds timeout,
                      const std::function<void(const std::string&, const std::string&)>* sink) {
    CollectResult result;

    std::mutex mu;
    std::condition_variable cv;
    std::set<StreamKey> ended;
    size_t channels_open = channels.size();
    bool stop = false;

    std::vector<ChannelTake> takes(channels.size());
    std::vector<std::thread> consumers;
    consumers.reserve(channels.size());

    for (size_t ci = 0; ci < channels.size(); ++ci) {
        consumers.emplace_back([&, ci] {
            const NamedChannel& nc = channels[ci];
            ChannelTake& take = takes[ci];
            while (true) {
                {
                    std::lock_guard<std::mutex> lock(mu);
                    if (stop)
                        break;
                }
                auto line = nc.channel->next_line(std::chrono::milliseconds(20));
                if (!line) {
                    if (nc.channel->closed())
                        break;
                    continue;
                }
                if (sink)
                    (*sink)(nc.vm, *line);
                ParsedLine p = parse_line(*line);
                switch (p.kind) {
                case ParsedLine::Kind::ignored:
                    break;
                case ParsedLine::Kind::error:
                    take.errors.push_back(p.error + ": \"" + p.raw + "\"");
                    break;
                case ParsedLine::Kind::event:
                    take.events.push_back(p.event);
                    if (p.event.is_end) {
                        std::lock_guard<std::mutex> lock(mu);
                        ended.insert({p.event.vm, p.event.bench});
                        cv.notify_all();
                    }
                    break;
                }
            }
            std::lock_guard<std::mutex> lock(mu);
            --channels_open;
            cv.notify_all();
        });
    }

    auto deadline = std::chrono::steady_clock::now() + timeout;
    {
        std::unique_lock<std::mutex> lock(mu);
        cv.wait_until(lock, deadline, [&] {
            bool all_ended = std::all_of(expected.begin(), expected.end(),
                                         [&](const StreamKey& k) { return ended.count(k) > 0; });
            return all_ended || channels_open == 0;
        });
        stop = true;
    }
    for (auto& t : consumers)
        t.join();

    // Drain whatever is still buffered so post-END events surface as
    // leftovers instead of vanishing (bounded: no waiting).
    for (size_t ci = 0; ci < channels.size(); ++ci) {
        while (auto line = channels[ci].channel->next_line(std::chrono::milliseconds(0))) {
            if (sink)
                (*sink)(channels[ci].vm, *line);
            ParsedLine p = parse_line(*line);
            if (p.kind == ParsedLine::Kind::event)
                takes[ci].events.push_back(p.event);
            else if (p.kind == ParsedLine::Kind::error)
                takes[ci].errors.push_back(p.error + ": \"" + p.raw + "\"");
        }
    }

    // Canonical merge: channels ordered by vm name (stable on ties), each
    // channel's events in arrival order. This keeps the grouping independent
    // of cross-channel interleaving.
    std::vector<size_t> order(channels.size());
    for (size_t i = 0; i < order.size(); ++i)
        order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return channels[a].vm < channels[b].vm; });

    std::map<std::tuple<std::string, std::string, uint32_t>, MetricsSample> groups;
    std::set<StreamKey> closed_streams;
    for (size_t idx : order) {
        for (const auto& e : takes[idx].events) {
            StreamKey key{e.vm, e.bench};
            if (closed_streams.count(key)) {
                result.leftovers.push_back(e);
                continue;
            }
            if (e.is_end) {
                closed_streams.insert(key);
                continue;
            }
            auto gk = std::make_tuple(e.vm, e.bench, e.iteration);
            auto it = groups.find(gk);
            if (it == groups.end()) {
                MetricsSample s;
                s.vm = e.vm;
                s.bench = e.bench;
                s.iteration = e.iteration;
                it = groups.emplace(gk, std::move(s)).first;
            }
            MetricsSample& s = it->second;
            auto assign = [&](auto& field, auto value) {
                if (field.has_value())
                    result.warnings.push_back("duplicate metric " + std::string(to_string(e.metric)) +
                                              " for " + e.vm + "/" + e.bench + " iteration " +
                                              std::to_string(e.iteration) + " (last value wins)");
                field = value;
            };
            switch (e.metric) {
            case Metric::time_ms: assign(s.time_ms, e.value); break;
            case Metric::llc_miss: assign(s.llc_miss, uint64_t(e.value)); break;
            case Metric::bus_cycles: assign(s.bus_cycles, uint64_t(e.value)); break;
            case Metric::mem_access: assign(s.mem_access, uint64_t(e.value)); break;
            case Metric::retired_ops: assign(s.retired_ops, uint64_t(e.value)); break;
            }
        }
        for (const auto& err : takes[idx].errors)
            result.parse_errors.push_back(err);
    }

    for (auto& [k, s] : groups)
        result.samples.push_back(std::move(s));
    result.ended = closed_streams;
    result.timed_out = !std::all_of(expected.begin(), expected.end(), [&](const StreamKey& k) {
        return closed_streams.count(k) > 0;
    });
    return result;
}

} // namespace spim
