#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace spim {

/// Validation failure carrying the json path of the offending field,
/// e.g. "l2.size_bytes" or "guests[1].cpus".
class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string path, const std::string& message)
        : std::runtime_error(path.empty() ? message : path + ": " + message),
          path_(std::move(path)) {}

    const std::string& path() const { return path_; }

private:
    std::string path_;
};

struct CacheGeom {
    uint64_t size_bytes = 0;
    uint32_t ways = 0;
    uint32_t sets = 0; // derived: size_bytes / (ways * line_bytes)

    bool operator==(const CacheGeom&) const = default;
};

struct PlatformSpec {
    std::string name;
    uint32_t cpu_count = 0;
    uint64_t clock_hz = 0;
    uint32_t line_bytes = 0;
    uint32_t page_bytes = 0;
    CacheGeom l1; // per-CPU, private
    CacheGeom l2; // shared LLC
    uint32_t color_count = 0; // S

    // Hardware ceiling on S: one color per page-sized slice of an LLC way.
    uint32_t max_colors() const {
        return static_cast<uint32_t>(uint64_t(l2.sets) * line_bytes / page_bytes);
    }

    bool operator==(const PlatformSpec&) const = default;
};

enum class GuestKind { victim_benchmark, contention_engine };
enum class OpType { read, write, read_write };
enum class MbrMode { per_guest_sweep, cross_product };
enum class BackendKind { sim, replay, serial };

struct VictimPreset {
    std::string bench_name;
    uint64_t working_set_bytes = 0;
    uint64_t total_accesses = 0;
    uint32_t compute_cycles_per_access = 0;
    double write_fraction = 0.0; // in [0, 1]

    bool operator==(const VictimPreset&) const = default;
};

struct ContentionSweep {
    std::vector<uint32_t> cpu_configs;    // M
    std::vector<uint64_t> line_strides;   // L, bytes
    std::vector<uint64_t> workload_sizes; // W, bytes
    std::vector<OpType> op_types;         // O

    bool operator==(const ContentionSweep&) const = default;
};

struct GuestSpec {
    std::string name;
    GuestKind kind = GuestKind::victim_benchmark;
    std::vector<uint32_t> cpus; // kept sorted, pairwise disjoint across guests
    std::optional<VictimPreset> victim;
    std::optional<ContentionSweep> sweep;

    bool operator==(const GuestSpec&) const = default;
};

struct ColoringPolicy {
    bool enabled = false;
    std::vector<uint32_t> min_colors_per_vm; // one per guest, defaults to 1

    bool operator==(const ColoringPolicy&) const = default;
};

struct MbrPolicy {
    bool enabled = false;
    std::vector<std::vector<uint64_t>> budgets;    // per guest; empty list = unregulated
    std::vector<std::vector<uint64_t>> periods_us; // per guest
    MbrMode mode = MbrMode::per_guest_sweep;

    bool operator==(const MbrPolicy&) const = default;
};

struct ExperimentSpec {
    std::string platform_path;
    std::vector<GuestSpec> guests;
    ColoringPolicy coloring;
    MbrPolicy mbr;
    uint32_t repetitions = 10;
    double timeout_s = 60.0;
    BackendKind backend = BackendKind::sim;

    bool operator==(const ExperimentSpec&) const = default;
};

const char* to_string(GuestKind k);
const char* to_string(OpType o);
const char* to_string(MbrMode m);
const char* to_string(BackendKind b);
OpType op_type_from_string(const std::string& s, const std::string& path = "");
BackendKind backend_from_string(const std::string& s, const std::string& path = "");

/// Parse and validate a platform document. Throws ConfigError naming the
/// offending field or violated invariant.
PlatformSpec parse_platform(const std::string& text);
PlatformSpec load_platform(const std::filesystem::path& file);
std::string emit_platform(const PlatformSpec& plat);

/// Parse and validate an experiment document against an already-validated
/// platform. `base_dir` resolves relative preset paths.
ExperimentSpec parse_experiment(const std::string& text, const PlatformSpec& plat,
                                const std::filesystem::path& base_dir = {});
ExperimentSpec load_experiment(const std::filesystem::path& file, const PlatformSpec& plat);
std::string emit_experiment(const ExperimentSpec& exp);

VictimPreset load_victim_preset(const std::filesystem::path& file);

} // namespace spim
