#include "spim/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spim {

using nlohmann::json;

namespace {

std::string read_file(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in)
        throw ConfigError(file.string(), "cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

json parse_json(const std::string& text, const std::string& what) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
        throw ConfigError(what, "not valid JSON");
    return doc;
}

// Field accessors that keep track of the json path for error messages.

const json& require(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.is_object())
        throw ConfigError(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end())
        throw ConfigError(path.empty() ? key : path + "." + key, "missing required field");
    return *it;
}

std::string subpath(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
}

uint64_t get_uint(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<int64_t>() >= 0))
        throw ConfigError(subpath(path, key), "expected a non-negative integer");
    return v.get<uint64_t>();
}

uint64_t get_positive(const json& obj, const std::string& key, const std::string& path) {
    uint64_t v = get_uint(obj, key, path);
    if (v == 0)
        throw ConfigError(subpath(path, key), "must be positive");
    return v;
}

double get_number(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_number())
        throw ConfigError(subpath(path, key), "expected a number");
    return v.get<double>();
}

std::string get_string(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_string())
        throw ConfigError(subpath(path, key), "expected a string");
    return v.get<std::string>();
}

bool get_bool(const json& obj, const std::string& key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_boolean())
        throw ConfigError(subpath(path, key), "expected a boolean");
    return v.get<bool>();
}

bool is_pow2(uint64_t v) { return v != 0 && (v & (v - 1)) == 0; }

CacheGeom parse_geom(const json& obj, uint32_t line_bytes, const std::string& path) {
    CacheGeom g;
    g.size_bytes = get_positive(obj, "size_bytes", path);
    g.ways = static_cast<uint32_t>(get_positive(obj, "ways", path));
    uint64_t denom = uint64_t(g.ways) * line_bytes;
    if (g.size_bytes % denom != 0)
        throw ConfigError(subpath(path, "size_bytes"),
                          "size_bytes must equal ways * sets * line_bytes (got " +
                              std::to_string(g.size_bytes) + " with ways=" + std::to_string(g.ways) +
                              ", line_bytes=" + std::to_string(line_bytes) + ")");
    g.sets = static_cast<uint32_t>(g.size_bytes / denom);
    return g;
}

} // namespace

const char* to_string(GuestKind k) {
    return k == GuestKind::victim_benchmark ? "victim_benchmark" : "contention_engine";
}

const char* to_string(OpType o) {
    switch (o) {
    case OpType::read: return "read";
    case OpType::write: return "write";
    default: return "read_write";
    }
}

const char* to_string(MbrMode m) {
    return m == MbrMode::per_guest_sweep ? "per_guest_sweep" : "cross_product";
}

const char* to_string(BackendKind b) {
    switch (b) {
    case BackendKind::sim: return "sim";
    case BackendKind::replay: return "replay";
    default: return "serial";
    }
}

OpType op_type_from_string(const std::string& s, const std::string& path) {
    if (s == "read") return OpType::read;
    if (s == "write") return OpType::write;
    if (s == "read_write") return OpType::read_write;
    throw ConfigError(path, "unknown op type '" + s + "' (expected read, write or read_write)");
}

BackendKind backend_from_string(const std::string& s, const std::string& path) {
    if (s == "sim") return BackendKind::sim;
    if (s == "replay") return BackendKind::replay;
    if (s == "serial") return BackendKind::serial;
    throw ConfigError(path, "unknown backend '" + s + "' (expected sim, replay or serial)");
}

PlatformSpec parse_platform(const std::string& text) {
    json doc = parse_json(text, "platform");
    PlatformSpec p;
    p.name = get_string(doc, "name", "");
    p.cpu_count = static_cast<uint32_t>(get_positive(doc, "cpu_count", ""));
    p.clock_hz = get_positive(doc, "clock_hz", "");
    p.line_bytes = static_cast<uint32_t>(get_positive(doc, "line_bytes", ""));
    p.page_bytes = static_cast<uint32_t>(get_positive(doc, "page_bytes", ""));
    if (!is_pow2(p.line_bytes))
        throw ConfigError("line_bytes", "must be a power of two");
    if (!is_pow2(p.page_bytes))
        throw ConfigError("page_bytes", "must be a power of two");
    if (p.page_bytes % p.line_bytes != 0)
        throw ConfigError("page_bytes", "line_bytes must divide page_bytes");
    p.l1 = parse_geom(require(doc, "l1", ""), p.line_bytes, "l1");
    p.l2 = parse_geom(require(doc, "l2", ""), p.line_bytes, "l2");
    p.color_count = static_cast<uint32_t>(get_positive(doc, "color_count", ""));
    if (p.color_count > p.max_colors())
        throw ConfigError("color_count",
                          "exceeds the hardware maximum of " + std::to_string(p.max_colors()) +
                              " page colors (l2.sets * line_bytes / page_bytes)");
    return p;
}

PlatformSpec load_platform(const std::filesystem::path& file) {
    return parse_platform(read_file(file));
}

std::string emit_platform(const PlatformSpec& p) {
    json doc;
    doc["name"] = p.name;
    doc["cpu_count"] = p.cpu_count;
    doc["clock_hz"] = p.clock_hz;
    doc["line_bytes"] = p.line_bytes;
    doc["page_bytes"] = p.page_bytes;
    doc["l1"] = {{"size_bytes", p.l1.size_bytes}, {"ways", p.l1.ways}};
    doc["l2"] = {{"size_bytes", p.l2.size_bytes}, {"ways", p.l2.ways}};
    doc["color_count"] = p.color_count;
    return doc.dump(2) + "\n";
}

VictimPreset load_victim_preset(const std::filesystem::path& file) {
    json doc = parse_json(read_file(file), file.string());
    VictimPreset v;
    std::string path = file.string();
    v.bench_name = get_string(doc, "bench_name", path);
    v.working_set_bytes = get_positive(doc, "working_set_bytes", path);
    v.total_accesses = get_positive(doc, "total_accesses", path);
    v.compute_cycles_per_access = static_cast<uint32_t>(get_uint(doc, "compute_cycles_per_access", path));
    v.write_fraction = get_number(doc, "write_fraction", path);
    if (v.write_fraction < 0.0 || v.write_fraction > 1.0)
        throw ConfigError(subpath(path, "write_fraction"), "must lie in [0, 1]");
    return v;
}

namespace {

VictimPreset parse_victim_workload(const json& w, const std::filesystem::path& base_dir,
                                   const std::string& path) {
    if (w.contains("preset")) {
        std::filesystem::path ref = w.at("preset").get<std::string>();
        if (ref.is_relative())
            ref = base_dir / ref;
        return load_victim_preset(ref);
    }
    VictimPreset v;
    v.bench_name = get_string(w, "bench_name", path);
    v.working_set_bytes = get_positive(w, "working_set_bytes", path);
    v.total_accesses = get_positive(w, "total_accesses", path);
    v.compute_cycles_per_access = static_cast<uint32_t>(get_uint(w, "compute_cycles_per_access", path));
    v.write_fraction = get_number(w, "write_fraction", path);
    if (v.write_fraction < 0.0 || v.write_fraction > 1.0)
        throw ConfigError(subpath(path, "write_fraction"), "must lie in [0, 1]");
    return v;
}

ContentionSweep parse_sweep(const json& w, const PlatformSpec& plat, const std::string& path) {
    ContentionSweep s;
    for (const auto& v : require(w, "cpu_configs", path))
        s.cpu_configs.push_back(v.get<uint32_t>());
    for (const auto& v : require(w, "line_strides", path))
        s.line_strides.push_back(v.get<uint64_t>());
    for (const auto& v : require(w, "workload_sizes", path))
        s.workload_sizes.push_back(v.get<uint64_t>());
    for (const auto& v : require(w, "op_types", path))
        s.op_types.push_back(op_type_from_string(v.get<std::string>(), subpath(path, "op_types")));

    if (s.cpu_configs.empty())
        throw ConfigError(subpath(path, "cpu_configs"), "must not be empty");
    if (s.line_strides.empty())
        throw ConfigError(subpath(path, "line_strides"), "must not be empty");
    if (s.workload_sizes.empty())
        throw ConfigError(subpath(path, "workload_sizes"), "must not be empty");
    if (s.op_types.empty())
        throw ConfigError(subpath(path, "op_types"), "must not be empty");
    for (uint32_t m : s.cpu_configs)
        if (m == 0)
            throw ConfigError(subpath(path, "cpu_configs"), "CPU counts must be >= 1");
    for (uint64_t l : s.line_strides)
        if (l == 0)
            throw ConfigError(subpath(path, "line_strides"), "strides must be > 0");
    uint64_t max_stride = *std::max_element(s.line_strides.begin(), s.line_strides.end());
    for (uint64_t w_ : s.workload_sizes)
        if (w_ < max_stride)
            throw ConfigError(subpath(path, "workload_sizes"),
                              "every buffer size must be >= the largest stride (" +
                                  std::to_string(max_stride) + ")");
    (void)plat;
    return s;
}

} // namespace

ExperimentSpec parse_experiment(const std::string& text, const PlatformSpec& plat,
                                const std::filesystem::path& base_dir) {
    json doc = parse_json(text, "experiment");
    ExperimentSpec e;
    e.platform_path = get_string(doc, "platform", "");

    const json& guests = require(doc, "guests", "");
    if (!guests.is_array() || guests.empty())
        throw ConfigError("guests", "expected a non-empty array");

    std::vector<uint32_t> used_cpus(plat.cpu_count, UINT32_MAX);
    std::set<std::string> names;
    for (size_t i = 0; i < guests.size(); ++i) {
        std::string gp = "guests[" + std::to_string(i) + "]";
        const json& gj = guests[i];
        GuestSpec g;
        g.name = get_string(gj, "name", gp);
        if (!names.insert(g.name).second)
            throw ConfigError(subpath(gp, "name"), "duplicate guest name '" + g.name + "'");
        std::string kind = get_string(gj, "kind", gp);
        if (kind == "victim_benchmark")
            g.kind = GuestKind::victim_benchmark;
        else if (kind == "contention_engine")
            g.kind = GuestKind::contention_engine;
        else
            throw ConfigError(subpath(gp, "kind"), "unknown guest kind '" + kind + "'");

        const json& cpus = require(gj, "cpus", gp);
        if (!cpus.is_array() || cpus.empty())
            throw ConfigError(subpath(gp, "cpus"), "expected a non-empty array of CPU indices");
        for (const auto& c : cpus) {
            uint32_t idx = c.get<uint32_t>();
            if (idx >= plat.cpu_count)
                throw ConfigError(subpath(gp, "cpus"),
                                  "CPU index " + std::to_string(idx) + " out of range [0, " +
                                      std::to_string(plat.cpu_count) + ")");
            if (used_cpus[idx] != UINT32_MAX)
                throw ConfigError(subpath(gp, "cpus"),
                                  "overlapping CPU assignment: CPU " + std::to_string(idx) +
                                      " already claimed by guest '" +
                                      std::string(guests[used_cpus[idx]].at("name").get<std::string>()) + "'");
            used_cpus[idx] = static_cast<uint32_t>(i);
            g.cpus.push_back(idx);
        }
        std::sort(g.cpus.begin(), g.cpus.end());
        g.cpus.erase(std::unique(g.cpus.begin(), g.cpus.end()), g.cpus.end());

        const json& w = require(gj, "workload", gp);
        std::string wp = subpath(gp, "workload");
        if (g.kind == GuestKind::victim_benchmark) {
            g.victim = parse_victim_workload(w, base_dir, wp);
        } else {
            g.sweep = parse_sweep(w, plat, wp);
            uint32_t max_m = *std::max_element(g.sweep->cpu_configs.begin(), g.sweep->cpu_configs.end());
            if (max_m > g.cpus.size())
                throw ConfigError(subpath(wp, "cpu_configs"),
                                  "CPU count option " + std::to_string(max_m) + " exceeds the " +
                                      std::to_string(g.cpus.size()) + " CPUs assigned to guest '" +
                                      g.name + "'");
        }
        e.guests.push_back(std::move(g));
    }

    size_t n = e.guests.size();

    const json& col = require(doc, "coloring", "");
    e.coloring.enabled = get_bool(col, "enabled", "coloring");
    if (col.contains("min_colors_per_vm")) {
        for (const auto& v : col.at("min_colors_per_vm"))
            e.coloring.min_colors_per_vm.push_back(v.get<uint32_t>());
    } else {
        e.coloring.min_colors_per_vm.assign(n, 1);
    }
    if (e.coloring.min_colors_per_vm.size() != n)
        throw ConfigError("coloring.min_colors_per_vm",
                          "expected one entry per guest (" + std::to_string(n) + ")");
    if (e.coloring.enabled) {
        uint64_t total_min = 0;
        for (uint32_t m : e.coloring.min_colors_per_vm)
            total_min += m;
        if (total_min > plat.color_count)
            throw ConfigError("coloring.min_colors_per_vm",
                              "infeasible color minimums: sum " + std::to_string(total_min) +
                                  " exceeds color_count " + std::to_string(plat.color_count));
    }

    const json& mbr = require(doc, "mbr", "");
    e.mbr.enabled = get_bool(mbr, "enabled", "mbr");
    if (mbr.contains("mode")) {
        std::string mode = get_string(mbr, "mode", "mbr");
        if (mode == "cross_product")
            e.mbr.mode = MbrMode::cross_product;
        else if (mode == "per_guest_sweep")
            e.mbr.mode = MbrMode::per_guest_sweep;
        else
            throw ConfigError("mbr.mode", "unknown mode '" + mode + "'");
    }
    if (e.mbr.enabled) {
        const json& budgets = require(mbr, "budgets", "mbr");
        const json& periods = require(mbr, "periods_us", "mbr");
        if (!budgets.is_array() || budgets.size() != n)
            throw ConfigError("mbr.budgets", "expected one list per guest (" + std::to_string(n) + ")");
        if (!periods.is_array() || periods.size() != n)
            throw ConfigError("mbr.periods_us", "expected one list per guest (" + std::to_string(n) + ")");
        for (size_t i = 0; i < n; ++i) {
            std::vector<uint64_t> b, p;
            for (const auto& v : budgets[i])
                b.push_back(v.get<uint64_t>());
            for (const auto& v : periods[i])
                p.push_back(v.get<uint64_t>());
            if (b.empty() != p.empty())
                throw ConfigError("mbr.budgets[" + std::to_string(i) + "]",
                                  "a regulated guest needs both budgets and periods (lists must be "
                                  "both empty or both non-empty)");
            for (uint64_t v : b)
                if (v == 0)
                    throw ConfigError("mbr.budgets[" + std::to_string(i) + "]", "budgets must be >= 1");
            for (uint64_t v : p)
                if (v == 0)
                    throw ConfigError("mbr.periods_us[" + std::to_string(i) + "]", "periods must be >= 1");
            e.mbr.budgets.push_back(std::move(b));
            e.mbr.periods_us.push_back(std::move(p));
        }
    } else {
        e.mbr.budgets.assign(n, {});
        e.mbr.periods_us.assign(n, {});
    }

    e.repetitions = static_cast<uint32_t>(get_positive(doc, "repetitions", ""));
    e.timeout_s = get_number(doc, "timeout_s", "");
    if (e.timeout_s <= 0)
        throw ConfigError("timeout_s", "must be positive");
    e.backend = backend_from_string(get_string(doc, "backend", ""), "backend");
    return e;
}

ExperimentSpec load_experiment(const std::filesystem::path& file, const PlatformSpec& plat) {
    return parse_experiment(read_file(file), plat, file.parent_path());
}

std::string emit_experiment(const ExperimentSpec& e) {
    json doc;
    doc["platform"] = e.platform_path;
    json guests = json::array();
    for (const auto& g : e.guests) {
        json gj;
        gj["name"] = g.name;
        gj["kind"] = to_string(g.kind);
        gj["cpus"] = g.cpus;
        json w;
        if (g.victim) {
            w["bench_name"] = g.victim->bench_name;
            w["working_set_bytes"] = g.victim->working_set_bytes;
            w["total_accesses"] = g.victim->total_accesses;
            w["compute_cycles_per_access"] = g.victim->compute_cycles_per_access;
            w["write_fraction"] = g.victim->write_fraction;
        } else if (g.sweep) {
            w["cpu_configs"] = g.sweep->cpu_configs;
            w["line_strides"] = g.sweep->line_strides;
            w["workload_sizes"] = g.sweep->workload_sizes;
            json ops = json::array();
            for (OpType o : g.sweep->op_types)
                ops.push_back(to_string(o));
            w["op_types"] = ops;
        }
        gj["workload"] = w;
        guests.push_back(gj);
    }
    doc["guests"] = guests;
    doc["coloring"] = {{"enabled", e.coloring.enabled},
                       {"min_colors_per_vm", e.coloring.min_colors_per_vm}};
    doc["mbr"] = {{"enabled", e.mbr.enabled},
                  {"budgets", e.mbr.budgets},
                  {"periods_us", e.mbr.periods_us},
                  {"mode", to_string(e.mbr.mode)}};
    doc["repetitions"] = e.repetitions;
    doc["timeout_s"] = e.timeout_s;
    doc["backend"] = to_string(e.backend);
    return doc.dump(2) + "\n";
}

} // namespace spim
