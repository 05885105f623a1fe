#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "spim/config.hpp"

namespace spim {

/// One fully resolved contention-engine variant: (m, l, w, o).
struct ContentionConfig {
    uint32_t cpus = 1;          // m
    uint64_t stride = 0;        // l, bytes
    uint64_t buffer_bytes = 0;  // w
    OpType op = OpType::read;   // o

    bool operator==(const ContentionConfig&) const = default;
};

/// Non-overlapping per-VM color masks covering [0, S), plus the boundary
/// tuple that generated them.
struct ColoringAssignment {
    std::vector<uint64_t> masks;      // one per guest, S-bit
    std::vector<uint32_t> boundaries; // strictly increasing (N-1)-tuple

    bool operator==(const ColoringAssignment&) const = default;
};

struct MbrEntry {
    std::string guest;
    uint64_t budget = 0;    // memory transactions per period
    uint64_t period_us = 0; // sampling period, microseconds

    bool operator==(const MbrEntry&) const = default;
};

/// Guests absent from `entries` run unregulated.
struct MbrAssignment {
    std::vector<MbrEntry> entries;

    bool operator==(const MbrAssignment&) const = default;
};

struct ResolvedGuest {
    std::string name;
    GuestKind kind = GuestKind::victim_benchmark;
    std::vector<uint32_t> cpus;
    std::optional<VictimPreset> victim;
    std::optional<ContentionConfig> engine;
    std::optional<uint64_t> color_mask; // unset = uncolored
    std::optional<MbrEntry> mbr;        // unset = unregulated

    bool operator==(const ResolvedGuest&) const = default;
};

struct Setup {
    uint64_t id = 0;
    std::string name;
    std::vector<ResolvedGuest> guests;
    bool baseline = false; // solo variants
    uint32_t repetitions = 1;
    double timeout_s = 60.0;

    bool operator==(const Setup&) const = default;
};

struct ManifestCounts {
    uint64_t contention_configs = 0;
    uint64_t coloring_assignments = 0;
    uint64_t mbr_assignments = 0;
    uint64_t interference_setups = 0;
    uint64_t baseline_setups = 0;
    uint64_t total_setups = 0;
};

struct Manifest {
    PlatformSpec platform;
    ManifestCounts counts;
    bool coloring_enabled = false;
    bool mbr_enabled = false;
    MbrMode mbr_mode = MbrMode::per_guest_sweep;
    std::vector<uint32_t> min_colors_per_vm;
    uint32_t repetitions = 1;
    double timeout_s = 60.0;
    BackendKind backend = BackendKind::sim;
    std::vector<Setup> setups;
};

/// Cartesian product M x L x W x O in lexicographic (m, l, w, o) order.
std::vector<ContentionConfig> gen_guest_configs(const ContentionSweep& sweep);

/// Bits [s, e) set: ((1 << (e - s)) - 1) << s. Throws on s > e or e > color_count.
uint64_t mask_for_partition(uint32_t s, uint32_t e, uint32_t color_count);

/// All partitions of [0, S) into N contiguous sections, one per guest,
/// enumerated over strictly increasing boundary tuples, deduplicated, then
/// filtered so each guest keeps at least min_colors[i] colors.
std::vector<ColoringAssignment> gen_colorings(uint32_t color_count, uint32_t guest_count,
                                              const std::vector<uint32_t>& min_colors);

struct MbrGuestLists {
    std::string guest;
    std::vector<uint64_t> budgets;
    std::vector<uint64_t> periods_us;
};

std::vector<MbrAssignment> gen_mbr(const std::vector<MbrGuestLists>& guests, MbrMode mode);

/// Convenience converter from a bandwidth in bytes/s to a transaction budget
/// for the given period (rounded down).
uint64_t budget_from_bandwidth(uint64_t bytes_per_s, uint64_t period_us, uint32_t line_bytes);

/// Baseline solo setups plus the interference cross product
/// {contention configs} x {colorings | none} x {mbr | none}.
Manifest enumerate_setups(const ExperimentSpec& exp, const PlatformSpec& plat);

std::string setup_name(const Setup& setup);

struct SetupNameParts {
    bool solo = false;
    std::optional<OpType> access;
    std::optional<uint64_t> buffer_bytes;
    std::optional<uint32_t> colors; // victim color count (cc_<k>)
    struct MbrPart {
        uint32_t guest_index;
        uint64_t budget;
        uint64_t period_us;
        bool operator==(const MbrPart&) const = default;
    };
    std::vector<MbrPart> mbr;

    bool operator==(const SetupNameParts&) const = default;
};

/// Inverse of setup_name. Throws std::invalid_argument on malformed names.
SetupNameParts parse_setup_name(const std::string& name);

/// Binary-unit rendering used in setup names: 32768 -> "32KiB",
/// 1572864 -> "1.5MiB". Falls back to plain bytes when no unit is exact
/// within three fractional digits.
std::string format_size(uint64_t bytes);
uint64_t parse_size(const std::string& text);

// --- serialization ---

std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);
std::string setup_to_json(const Setup& s, const PlatformSpec& plat,
                          uint32_t repetitions, double timeout_s);
std::pair<Setup, PlatformSpec> setup_from_json(const std::string& text);

/// Writes manifest.json plus one setup_<id>.json per setup. Refuses to
/// overwrite a differing manifest unless force is set. Returns the manifest
/// path.
std::filesystem::path write_manifest(const Manifest& m, const std::filesystem::path& out_dir,
                                     bool force = false);
Manifest load_manifest(const std::filesystem::path& dir_or_file);

} // namespace spim
