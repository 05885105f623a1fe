#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spim/config.hpp"
#include "spim/genspace.hpp"
#include "spim/logmon.hpp"

namespace spim {

struct SimParams {
    uint32_t l1_hit_cycles = 1;
    uint32_t l2_hit_cycles = 10;       // >= 1
    uint32_t bus_service_cycles = 20;  // per memory transaction, >= 1
    bool writeback_extra_transaction = true;
    enum class Arbitration { fifo_cpu_index_tiebreak } arbitration =
        Arbitration::fifo_cpu_index_tiebreak;
    uint64_t mem_bytes = uint64_t(64) << 20; // simulated physical memory
    uint64_t seed = 0;                       // 0 = canonical page placement
    uint64_t cycle_cap = 10000000000ull;     // timeout guard
    bool check_structure = false;            // per-step cache invariant checks
    bool private_engine_buffers = false;     // per-CPU buffers instead of one shared
    bool collect_mbr_trace = false;
};

SimParams parse_sim_params(const std::string& text);
SimParams load_sim_params(const std::filesystem::path& file);

/// Raised when a run exceeds params.cycle_cap.
class SimTimeout : public std::runtime_error {
public:
    explicit SimTimeout(const std::string& setup)
        : std::runtime_error("cycle budget cap exceeded in setup '" + setup + "'") {}
};

struct VmCounters {
    uint64_t l1_hit = 0;
    uint64_t llc_access = 0; // == l1 misses
    uint64_t llc_miss = 0;
    uint64_t mem_access = 0; // bus transactions issued (fills + writebacks)
    uint64_t writebacks = 0;
    uint64_t bus_cycles = 0; // queued + in-service cycles of completed transactions
    uint64_t retired_ops = 0;
    uint64_t completion_cycle = 0; // victims only
};

struct MbrTraceEntry {
    uint32_t cpu = 0;
    uint64_t completion_cycle = 0;
};

struct SimResult {
    std::vector<MetricsSample> samples;          // per victim bench, per iteration
    std::map<std::string, VmCounters> vm_counters; // last iteration, every VM
    std::vector<MbrTraceEntry> mbr_trace;        // last iteration, regulated CPUs
};

/// Page color: (address / page_bytes) mod color_count.
uint32_t color_of(uint64_t address, uint32_t page_bytes, uint32_t color_count);

/// Simulated physical memory. Guests draw page frames restricted to a color
/// mask; frames never overlap between guests of one simulation.
class FrameAllocator {
public:
    FrameAllocator(uint64_t mem_bytes, uint32_t page_bytes, uint32_t color_count);

    /// Frames for `size_bytes` of memory, colors restricted to `mask`.
    /// Consecutive logical pages cycle through the mask's colors in ascending
    /// color order (rotated by `color_rotation` for seed-varied placement).
    std::vector<uint64_t> allocate(uint64_t size_bytes, uint64_t mask, uint32_t color_rotation = 0);

private:
    uint64_t total_frames_;
    uint32_t page_bytes_;
    uint32_t color_count_;
    std::vector<uint64_t> next_in_color_; // per color: next untried frame of that color
};

/// Unbounded cyclic access stream of a contention engine: offsets start at 0,
/// advance by the stride, wrap at the buffer size; read_write alternates R,W.
class ContentionStream {
public:
    explicit ContentionStream(const ContentionConfig& cfg) : cfg_(cfg) {}

    struct Access {
        uint64_t offset;
        bool write;
    };

    Access next() {
        uint64_t k = index_++;
        bool write = cfg_.op == OpType::write || (cfg_.op == OpType::read_write && (k & 1));
        return {(k * cfg_.stride) % cfg_.buffer_bytes, write};
    }

private:
    ContentionConfig cfg_;
    uint64_t index_ = 0;
};

/// Executes a resolved setup on the simulated platform. Deterministic:
/// identical inputs produce bit-identical samples.
SimResult simulate(const Setup& setup, const PlatformSpec& plat, const SimParams& params,
                   uint32_t repetitions);

} // namespace spim
