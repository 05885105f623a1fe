#include "spim/sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace spim {

using nlohmann::json;

SimParams parse_sim_params(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded())
        throw ConfigError("simparams", "not valid JSON");
    SimParams p;
    if (doc.contains("l1_hit_cycles")) p.l1_hit_cycles = doc.at("l1_hit_cycles").get<uint32_t>();
    if (doc.contains("l2_hit_cycles")) p.l2_hit_cycles = doc.at("l2_hit_cycles").get<uint32_t>();
    if (doc.contains("bus_service_cycles"))
        p.bus_service_cycles = doc.at("bus_service_cycles").get<uint32_t>();
    if (doc.contains("writeback_extra_transaction"))
        p.writeback_extra_transaction = doc.at("writeback_extra_transaction").get<bool>();
    if (doc.contains("arbitration")) {
        std::string a = doc.at("arbitration").get<std::string>();
        if (a != "fifo_cpu_index_tiebreak")
            throw ConfigError("simparams.arbitration", "unknown arbitration '" + a + "'");
    }
    if (doc.contains("mem_bytes")) p.mem_bytes = doc.at("mem_bytes").get<uint64_t>();
    if (doc.contains("seed")) p.seed = doc.at("seed").get<uint64_t>();
    if (doc.contains("cycle_cap")) p.cycle_cap = doc.at("cycle_cap").get<uint64_t>();
    if (doc.contains("private_engine_buffers"))
        p.private_engine_buffers = doc.at("private_engine_buffers").get<bool>();
    if (p.l2_hit_cycles < 1)
        throw ConfigError("simparams.l2_hit_cycles", "must be >= 1");
    if (p.bus_service_cycles < 1)
        throw ConfigError("simparams.bus_service_cycles", "must be >= 1");
    return p;
}

SimParams load_sim_params(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in)
        throw ConfigError(file.string(), "cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sim_params(buf.str());
}

uint32_t color_of(uint64_t address, uint32_t page_bytes, uint32_t color_count) {
    return static_cast<uint32_t>((address / page_bytes) % color_count);
}

FrameAllocator::FrameAllocator(uint64_t mem_bytes, uint32_t page_bytes, uint32_t color_count)
    : total_frames_(mem_bytes / page_bytes), page_bytes_(page_bytes), color_count_(color_count) {
    next_in_color_.assign(color_count, 0);
    for (uint32_t c = 0; c < color_count; ++c)
        next_in_color_[c] = c; // frame f has color f % color_count
}

std::vector<uint64_t> FrameAllocator::allocate(uint64_t size_bytes, uint64_t mask,
                                               uint32_t color_rotation) {
    if (mask == 0)
        throw std::invalid_argument("empty color mask cannot back memory");
    std::vector<uint32_t> colors;
    for (uint32_t c = 0; c < color_count_; ++c)
        if (mask & (uint64_t(1) << c))
            colors.push_back(c);
    uint64_t pages = (size_bytes + page_bytes_ - 1) / page_bytes_;
    std::vector<uint64_t> frames;
    frames.reserve(pages);
    for (uint64_t i = 0; i < pages; ++i) {
        uint32_t color = colors[(i + color_rotation) % colors.size()];
        uint64_t f = next_in_color_[color];
        if (f >= total_frames_)
            throw std::runtime_error("out of simulated physical memory (" +
                                     std::to_string(total_frames_) + " frames)");
        next_in_color_[color] = f + color_count_;
        frames.push_back(f);
    }
    return frames;
}

// --- cache model ---

namespace {

class SetAssocCache {
public:
    SetAssocCache(uint32_t sets, uint32_t ways, bool check)
        : sets_(sets), ways_(ways), check_(check), lines_(size_t(sets) * ways) {
        for (uint32_t s = 0; s < sets_; ++s)
            for (uint32_t w = 0; w < ways_; ++w)
                lines_[size_t(s) * ways_ + w].age = static_cast<uint8_t>(w);
    }

    struct Evicted {
        bool valid = false;
        bool dirty = false;
        uint64_t line = 0;
    };

    // Demand lookup. On hit promotes the line and merges the dirty bit.
    bool access(uint64_t line_addr, bool write) {
        Line* l = find(line_addr);
        if (!l)
            return false;
        promote(set_of(line_addr), l);
        l->dirty = l->dirty || write;
        return true;
    }

    bool contains(uint64_t line_addr) { return find(line_addr) != nullptr; }

    void mark_dirty_if_present(uint64_t line_addr) {
        if (Line* l = find(line_addr))
            l->dirty = true;
    }

    // Installs a line, evicting LRU if the set is full. No-op promote when
    // the line is already present.
    Evicted fill(uint64_t line_addr, bool dirty) {
        uint32_t set = set_of(line_addr);
        if (Line* l = find(line_addr)) {
            promote(set, l);
            l->dirty = l->dirty || dirty;
            return {};
        }
        Line* span = &lines_[size_t(set) * ways_];
        Line* victim = nullptr;
        for (uint32_t w = 0; w < ways_; ++w) {
            if (!span[w].valid) {
                victim = &span[w];
                break;
            }
        }
        if (!victim) {
            for (uint32_t w = 0; w < ways_; ++w)
                if (span[w].age == ways_ - 1)
                    victim = &span[w];
        }
        Evicted ev;
        if (victim->valid) {
            ev.valid = true;
            ev.dirty = victim->dirty;
            ev.line = victim->tag;
        }
        victim->tag = line_addr;
        victim->valid = true;
        victim->dirty = dirty;
        promote(set, victim);
        return ev;
    }

private:
    struct Line {
        uint64_t tag = 0;
        bool valid = false;
        bool dirty = false;
        uint8_t age = 0; // 0 = MRU .. ways-1 = LRU; permutation per set
    };

    uint32_t set_of(uint64_t line_addr) const { return static_cast<uint32_t>(line_addr % sets_); }

    Line* find(uint64_t line_addr) {
        Line* span = &lines_[size_t(set_of(line_addr)) * ways_];
        for (uint32_t w = 0; w < ways_; ++w)
            if (span[w].valid && span[w].tag == line_addr)
                return &span[w];
        return nullptr;
    }

    void promote(uint32_t set, Line* target) {
        Line* span = &lines_[size_t(set) * ways_];
        for (uint32_t w = 0; w < ways_; ++w)
            if (span[w].age < target->age)
                ++span[w].age;
        target->age = 0;
        if (check_)
            check_set(set);
    }

    void check_set(uint32_t set) const {
        const Line* span = &lines_[size_t(set) * ways_];
        uint64_t seen = 0;
        uint32_t valid = 0;
        for (uint32_t w = 0; w < ways_; ++w) {
            if (span[w].age >= ways_ || (seen & (uint64_t(1) << span[w].age)))
                throw std::logic_error("LRU ranks are not a permutation in set " +
                                       std::to_string(set));
            seen |= uint64_t(1) << span[w].age;
            if (span[w].valid)
                ++valid;
        }
        if (valid > ways_)
            throw std::logic_error("more valid lines than ways in set " + std::to_string(set));
    }

    uint32_t sets_;
    uint32_t ways_;
    bool check_;
    std::vector<Line> lines_;
};

struct Xorshift64 {
    uint64_t state;
    explicit Xorshift64(uint64_t seed) : state(seed ? seed : 0x9e3779b97f4a7c15ull) {}
    uint64_t next() {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        return state;
    }
};

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

// Victim access pattern: one sequential pass covering the working set (cold
// misses are exactly ws/line), then pseudo-random reuse: 7 of 8 accesses go
// to a hot fifth of the set, the rest sample the whole set. Hot lines reuse
// fast enough to stay cached under pressure; the rarely-touched lines age
// out, so misses degrade smoothly as the effective share shrinks or as an
// interferer streams through the shared sets.
struct VictimStream {
    uint64_t lines;
    uint64_t hot_lines;
    uint32_t line_bytes;
    double write_fraction;
    Xorshift64 rng;
    uint64_t index = 0;

    VictimStream(const VictimPreset& p, uint32_t line_bytes_, uint64_t seed)
        : lines((p.working_set_bytes + line_bytes_ - 1) / line_bytes_),
          hot_lines(std::max<uint64_t>(1, lines / 5)),
          line_bytes(line_bytes_),
          write_fraction(p.write_fraction),
          rng(seed) {}

    ContentionStream::Access next() {
        uint64_t k = index++;
        uint64_t off;
        if (k < lines) {
            off = k * line_bytes;
        } else {
            uint64_t r = rng.next();
            uint64_t pool = ((r & 7) != 0) ? hot_lines : lines;
            off = ((r >> 3) % pool) * line_bytes;
        }
        bool write = std::floor(double(k + 1) * write_fraction) > std::floor(double(k) * write_fraction);
        return {off, write};
    }
};

struct Buffer {
    std::vector<uint64_t> frames; // frame numbers, logical page i -> frames[i]
    uint32_t page_bytes;

    uint64_t translate(uint64_t offset) const {
        return frames[offset / page_bytes] * page_bytes + offset % page_bytes;
    }
};

struct Tx {
    uint32_t cpu;
    uint64_t arrival; // joins the queue after the LLC lookup latency
    bool fill;        // false: writeback
};

struct Cpu {
    uint32_t id = 0;
    size_t guest = 0;
    bool is_victim = false;

    enum class St { ready, wait_mem, stalled, finished } st = St::ready;
    uint64_t next_cycle = 0; // issue time when ready
    uint64_t wake_cycle = 0; // when stalled

    // workload
    std::optional<VictimStream> victim_stream;
    std::optional<ContentionStream> engine_stream;
    const Buffer* buffer = nullptr;
    uint64_t remaining = std::numeric_limits<uint64_t>::max();
    uint32_t compute_cycles = 0;

    // regulation: a regulated CPU's transactions pass one at a time through
    // a budget gate, so completed transactions per window stay <= budget
    bool regulated = false;
    uint64_t budget = 0;
    uint64_t period_cycles = 0;
    uint64_t window_idx = 0;
    uint64_t window_count = 0;
    std::deque<Tx> held;           // transactions waiting on the gate
    bool tx_in_bus = false;
    uint64_t gate_wake = 0;        // boundary that reopens the gate, 0 = none

    // counters
    uint64_t l1_hit = 0, l1_miss = 0, llc_miss = 0, mem_tx = 0, writebacks = 0;
    uint64_t bus_cycles = 0, retired = 0, completion_cycle = 0;
};

constexpr uint64_t kInf = std::numeric_limits<uint64_t>::max();

} // namespace

SimResult simulate(const Setup& setup, const PlatformSpec& plat, const SimParams& params,
                   uint32_t repetitions) {
    SimResult result;
    if (repetitions == 0)
        return result;

    for (uint32_t rep = 0; rep < repetitions; ++rep) {
        // --- build the machine ---
        FrameAllocator alloc(params.mem_bytes, plat.page_bytes, plat.color_count);
        uint64_t full_mask = (plat.color_count >= 64) ? ~uint64_t(0)
                                                      : (uint64_t(1) << plat.color_count) - 1;

        std::deque<Buffer> buffers; // stable addresses
        std::vector<Cpu> cpus;
        std::vector<std::string> guest_names;
        std::vector<bool> guest_is_victim;
        std::vector<std::string> bench_names;

        for (size_t gi = 0; gi < setup.guests.size(); ++gi) {
            const ResolvedGuest& g = setup.guests[gi];
            guest_names.push_back(g.name);
            guest_is_victim.push_back(g.kind == GuestKind::victim_benchmark);
            bench_names.push_back(g.victim ? g.victim->bench_name : "");

            uint64_t mask = g.color_mask.value_or(full_mask);
            uint32_t rotation =
                params.seed == 0 ? 0 : static_cast<uint32_t>((params.seed ^ fnv1a(g.name)) % 64);

            uint64_t mbr_period_cycles = 0;
            if (g.mbr) {
                unsigned __int128 pc =
                    static_cast<unsigned __int128>(g.mbr->period_us) * plat.clock_hz / 1000000;
                if (pc == 0)
                    pc = 1;
                mbr_period_cycles = static_cast<uint64_t>(pc);
            }

            auto make_cpu = [&](uint32_t cpu_id, const Buffer* buf, uint32_t within) {
                Cpu c;
                c.id = cpu_id;
                c.guest = gi;
                c.buffer = buf;
                if (g.victim) {
                    c.is_victim = true;
                    uint64_t seed = fnv1a(g.name) ^ (params.seed * 0x9e3779b97f4a7c15ull) ^
                                    (uint64_t(within) + 1) * 0xff51afd7ed558ccdull;
                    c.victim_stream.emplace(*g.victim, plat.line_bytes, seed);
                    c.remaining = g.victim->total_accesses;
                    c.compute_cycles = g.victim->compute_cycles_per_access;
                } else if (g.engine) {
                    c.engine_stream.emplace(*g.engine);
                }
                if (g.mbr) {
                    c.regulated = true;
                    c.budget = g.mbr->budget;
                    c.period_cycles = mbr_period_cycles;
                }
                return c;
            };

            if (g.victim) {
                buffers.push_back(Buffer{alloc.allocate(g.victim->working_set_bytes, mask, rotation),
                                         plat.page_bytes});
                const Buffer* buf = &buffers.back();
                for (uint32_t i = 0; i < g.cpus.size(); ++i)
                    cpus.push_back(make_cpu(g.cpus[i], buf, i));
            } else if (g.engine) {
                uint32_t active = std::min<uint32_t>(g.engine->cpus,
                                                     static_cast<uint32_t>(g.cpus.size()));
                if (!params.private_engine_buffers) {
                    buffers.push_back(Buffer{alloc.allocate(g.engine->buffer_bytes, mask, rotation),
                                             plat.page_bytes});
                }
                for (uint32_t i = 0; i < active; ++i) {
                    if (params.private_engine_buffers)
                        buffers.push_back(Buffer{
                            alloc.allocate(g.engine->buffer_bytes, mask, rotation), plat.page_bytes});
                    cpus.push_back(make_cpu(g.cpus[i], &buffers.back(), i));
                }
            }
        }
        std::sort(cpus.begin(), cpus.end(), [](const Cpu& a, const Cpu& b) { return a.id < b.id; });

        SetAssocCache l2(plat.l2.sets, plat.l2.ways, params.check_structure);
        std::vector<SetAssocCache> l1s;
        l1s.reserve(cpus.size());
        for (size_t i = 0; i < cpus.size(); ++i)
            l1s.emplace_back(plat.l1.sets, plat.l1.ways, params.check_structure);

        std::deque<Tx> bus_queue;
        bool bus_busy = false;
        Tx bus_current{};
        uint64_t bus_free_at = 0;

        uint64_t victims_running = 0;
        for (const Cpu& c : cpus)
            if (c.is_victim)
                ++victims_running;

        std::vector<MbrTraceEntry> trace;

        auto refresh_window = [&](Cpu& c, uint64_t now) {
            uint64_t w = now / c.period_cycles;
            if (w > c.window_idx) {
                c.window_idx = w;
                c.window_count = 0;
            }
        };

        auto maybe_start_bus = [&](uint64_t now) {
            if (!bus_busy && !bus_queue.empty() && bus_queue.front().arrival <= now) {
                bus_current = bus_queue.front();
                bus_queue.pop_front();
                bus_busy = true;
                bus_free_at = now + params.bus_service_cycles;
            }
        };

        // Releases the next held transaction of a regulated CPU when its
        // window budget allows; otherwise arms the gate for the boundary.
        auto pump_gate = [&](Cpu& c, uint64_t now) {
            c.gate_wake = 0;
            if (c.tx_in_bus || c.held.empty())
                return;
            refresh_window(c, now);
            if (c.window_count >= c.budget) {
                c.gate_wake = (c.window_idx + 1) * c.period_cycles;
                return;
            }
            Tx t = c.held.front();
            c.held.pop_front();
            t.arrival = std::max(t.arrival, now);
            bus_queue.push_back(t);
            c.tx_in_bus = true;
            maybe_start_bus(now);
        };

        // The lookup that detects the miss precedes the transaction; arrival
        // times stay FIFO because the lookup latency is uniform.
        auto enqueue_tx = [&](Cpu& c, uint64_t now, bool fill) {
            uint64_t arrival = now + params.l2_hit_cycles;
            c.mem_tx++;
            if (!fill)
                c.writebacks++;
            if (c.regulated) {
                c.held.push_back(Tx{c.id, arrival, fill});
                pump_gate(c, now);
            } else {
                bus_queue.push_back(Tx{c.id, arrival, fill});
                maybe_start_bus(now);
            }
        };

        // Schedules the access after `finish`, or marks the benchmark done.
        auto after_access = [&](Cpu& c, uint64_t finish) {
            c.retired++;
            if (c.is_victim) {
                if (c.retired >= c.remaining) {
                    c.st = Cpu::St::finished;
                    c.completion_cycle = finish;
                    --victims_running;
                    return;
                }
            }
            c.st = Cpu::St::ready;
            c.next_cycle = finish + c.compute_cycles;
        };

        auto stall_if_exhausted = [&](Cpu& c) {
            if (c.regulated && c.st == Cpu::St::ready && c.window_count >= c.budget) {
                c.st = Cpu::St::stalled;
                c.wake_cycle = (c.window_idx + 1) * c.period_cycles;
            }
        };

        // Issue one access: cache lookups happen immediately; latency defers
        // the CPU's next step.
        auto issue = [&](Cpu& c, size_t cpu_slot, uint64_t now) {
            ContentionStream::Access acc =
                c.victim_stream ? c.victim_stream->next() : c.engine_stream->next();
            uint64_t addr = c.buffer->translate(acc.offset);
            uint64_t line = addr / plat.line_bytes;

            if (l1s[cpu_slot].access(line, acc.write)) {
                c.l1_hit++;
                after_access(c, now + params.l1_hit_cycles);
                return;
            }
            c.l1_miss++;

            auto spill_l1_victim = [&](const SetAssocCache::Evicted& ev, uint64_t when) {
                if (!ev.valid || !ev.dirty)
                    return;
                if (l2.contains(ev.line)) {
                    l2.mark_dirty_if_present(ev.line);
                } else if (params.writeback_extra_transaction) {
                    enqueue_tx(c, when, false);
                }
            };

            if (l2.access(line, acc.write)) {
                auto ev1 = l1s[cpu_slot].fill(line, acc.write);
                spill_l1_victim(ev1, now);
                after_access(c, now + params.l2_hit_cycles);
                return;
            }

            // LLC miss: the fill transaction unblocks the CPU; dirty
            // evictions ride the bus behind it.
            c.llc_miss++;
            c.st = Cpu::St::wait_mem;
            enqueue_tx(c, now, true);
            auto ev2 = l2.fill(line, acc.write);
            if (ev2.valid && ev2.dirty && params.writeback_extra_transaction)
                enqueue_tx(c, now, false);
            auto ev1 = l1s[cpu_slot].fill(line, acc.write);
            spill_l1_victim(ev1, now);
        };

        std::vector<size_t> slot_of_cpu(plat.cpu_count, SIZE_MAX);
        for (size_t i = 0; i < cpus.size(); ++i)
            slot_of_cpu[cpus[i].id] = i;

        // --- run ---
        while (victims_running > 0) {
            uint64_t t = kInf;
            if (bus_busy)
                t = bus_free_at;
            else if (!bus_queue.empty())
                t = bus_queue.front().arrival;
            for (const Cpu& c : cpus) {
                if (c.st == Cpu::St::ready)
                    t = std::min(t, c.next_cycle);
                else if (c.st == Cpu::St::stalled)
                    t = std::min(t, c.wake_cycle);
                if (c.gate_wake)
                    t = std::min(t, c.gate_wake);
            }
            if (t == kInf)
                throw std::logic_error("simulation wedged in setup '" + setup.name + "'");
            if (t > params.cycle_cap)
                throw SimTimeout(setup.name);

            // wake regulated CPUs and budget gates at their period boundary
            for (Cpu& c : cpus) {
                if (c.st == Cpu::St::stalled && c.wake_cycle == t) {
                    refresh_window(c, t);
                    c.st = Cpu::St::ready;
                    c.next_cycle = t + c.compute_cycles;
                }
                if (c.gate_wake && c.gate_wake <= t)
                    pump_gate(c, t);
            }

            // bus completion (start a waiting transaction when idle)
            if (!bus_busy)
                maybe_start_bus(t);
            if (bus_busy && bus_free_at == t) {
                Cpu& owner = cpus[slot_of_cpu[bus_current.cpu]];
                owner.bus_cycles += t - bus_current.arrival;
                if (owner.regulated) {
                    owner.tx_in_bus = false;
                    refresh_window(owner, t);
                    owner.window_count++;
                    if (params.collect_mbr_trace)
                        trace.push_back(MbrTraceEntry{owner.id, t});
                }
                bool was_fill = bus_current.fill;
                bus_busy = false;
                maybe_start_bus(t);
                if (was_fill) {
                    after_access(owner, t);
                    if (owner.regulated)
                        stall_if_exhausted(owner);
                } else if (owner.regulated && owner.st == Cpu::St::ready) {
                    // a writeback can exhaust the budget too
                    stall_if_exhausted(owner);
                }
                if (owner.regulated)
                    pump_gate(owner, t);
            }

            // CPU issues, ascending cpu_id
            for (size_t i = 0; i < cpus.size(); ++i) {
                Cpu& c = cpus[i];
                if (c.st == Cpu::St::ready && c.next_cycle == t)
                    issue(c, i, t);
            }
        }

        // --- aggregate per VM ---
        std::map<std::string, VmCounters> vm;
        for (size_t i = 0; i < cpus.size(); ++i) {
            const Cpu& c = cpus[i];
            VmCounters& v = vm[guest_names[c.guest]];
            v.l1_hit += c.l1_hit;
            v.llc_access += c.l1_miss;
            v.llc_miss += c.llc_miss;
            v.mem_access += c.mem_tx;
            v.writebacks += c.writebacks;
            v.bus_cycles += c.bus_cycles;
            v.retired_ops += c.retired;
            v.completion_cycle = std::max(v.completion_cycle, c.completion_cycle);
        }

        for (size_t gi = 0; gi < setup.guests.size(); ++gi) {
            if (!guest_is_victim[gi])
                continue;
            const VmCounters& v = vm[guest_names[gi]];
            MetricsSample s;
            s.vm = guest_names[gi];
            s.bench = bench_names[gi];
            s.iteration = rep;
            s.time_ms = canonical_value(double(v.completion_cycle) / double(plat.clock_hz) * 1000.0);
            s.llc_miss = v.llc_miss;
            s.bus_cycles = v.bus_cycles;
            s.mem_access = v.mem_access;
            s.retired_ops = v.retired_ops;
            result.samples.push_back(std::move(s));
        }

        if (rep + 1 == repetitions) {
            result.vm_counters = std::move(vm);
            result.mbr_trace = std::move(trace);
        }
    }
    return result;
}

} // namespace spim
