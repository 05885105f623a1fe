#include "spim/genspace.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace spim {

using nlohmann::json;

std::vector<ContentionConfig> gen_guest_configs(const ContentionSweep& sweep) {
    if (sweep.cpu_configs.empty() || sweep.line_strides.empty() || sweep.workload_sizes.empty() ||
        sweep.op_types.empty())
        throw std::invalid_argument("contention sweep lists must be non-empty");
    std::vector<ContentionConfig> out;
    out.reserve(sweep.cpu_configs.size() * sweep.line_strides.size() * sweep.workload_sizes.size() *
                sweep.op_types.size());
    for (uint32_t m : sweep.cpu_configs)
        for (uint64_t l : sweep.line_strides)
            for (uint64_t w : sweep.workload_sizes)
                for (OpType o : sweep.op_types)
                    out.push_back(ContentionConfig{m, l, w, o});
    return out;
}

uint64_t mask_for_partition(uint32_t s, uint32_t e, uint32_t color_count) {
    if (color_count == 0 || color_count > 63)
        throw std::out_of_range("color count must lie in [1, 63]");
    if (s > e || e > color_count)
        throw std::out_of_range("partition bounds must satisfy 0 <= s <= e <= " +
                                std::to_string(color_count));
    return ((uint64_t(1) << (e - s)) - 1) << s;
}

namespace {

void boundary_tuples(uint32_t color_count, uint32_t guest_count,
                     std::vector<uint32_t>& current,
                     std::vector<std::vector<uint32_t>>& out) {
    if (current.size() == size_t(guest_count) - 1) {
        out.push_back(current);
        return;
    }
    uint32_t lo = current.empty() ? 0 : current.back() + 1;
    for (uint32_t b = lo; b < color_count; ++b) {
        current.push_back(b);
        boundary_tuples(color_count, guest_count, current, out);
        current.pop_back();
    }
}

ColoringAssignment masks_from_boundaries(const std::vector<uint32_t>& boundaries,
                                         uint32_t color_count, uint32_t guest_count) {
    ColoringAssignment a;
    a.boundaries = boundaries;
    uint32_t start = 0;
    for (uint32_t i = 0; i < guest_count; ++i) {
        uint32_t end = (i + 1 < guest_count) ? boundaries[i] : color_count;
        a.masks.push_back(mask_for_partition(start, end, color_count));
        start = end;
    }
    return a;
}

} // namespace

std::vector<ColoringAssignment> gen_colorings(uint32_t color_count, uint32_t guest_count,
                                              const std::vector<uint32_t>& min_colors) {
    if (guest_count < 1)
        throw std::invalid_argument("guest count must be >= 1");
    if (min_colors.size() != guest_count)
        throw std::invalid_argument("expected one color minimum per guest");
    uint64_t total_min = 0;
    for (uint32_t m : min_colors)
        total_min += m;
    if (total_min > color_count)
        throw std::invalid_argument("infeasible color minimums: sum " + std::to_string(total_min) +
                                    " exceeds color count " + std::to_string(color_count));

    std::vector<std::vector<uint32_t>> tuples;
    std::vector<uint32_t> scratch;
    boundary_tuples(color_count, guest_count, scratch, tuples);

    std::vector<ColoringAssignment> out;
    std::set<std::vector<uint64_t>> seen;
    for (const auto& t : tuples) {
        ColoringAssignment a = masks_from_boundaries(t, color_count, guest_count);
        if (!seen.insert(a.masks).second)
            continue; // already present in the set
        bool feasible = true;
        for (uint32_t i = 0; i < guest_count; ++i) {
            if (std::popcount(a.masks[i]) < int(min_colors[i])) {
                feasible = false;
                break;
            }
        }
        if (feasible)
            out.push_back(std::move(a));
    }
    return out;
}

std::vector<MbrAssignment> gen_mbr(const std::vector<MbrGuestLists>& guests, MbrMode mode) {
    for (const auto& g : guests)
        if (g.budgets.empty() || g.periods_us.empty())
            throw std::invalid_argument("regulated guest '" + g.guest +
                                        "' needs non-empty budget and period lists");

    std::vector<MbrAssignment> out;
    if (mode == MbrMode::per_guest_sweep) {
        for (const auto& g : guests)
            for (uint64_t b : g.budgets)
                for (uint64_t p : g.periods_us)
                    out.push_back(MbrAssignment{{MbrEntry{g.guest, b, p}}});
        return out;
    }

    // cross_product: every regulated guest gets a (budget, period) pair.
    out.push_back(MbrAssignment{});
    for (const auto& g : guests) {
        std::vector<MbrAssignment> next;
        next.reserve(out.size() * g.budgets.size() * g.periods_us.size());
        for (const auto& partial : out)
            for (uint64_t b : g.budgets)
                for (uint64_t p : g.periods_us) {
                    MbrAssignment a = partial;
                    a.entries.push_back(MbrEntry{g.guest, b, p});
                    next.push_back(std::move(a));
                }
        out = std::move(next);
    }
    return out;
}

uint64_t budget_from_bandwidth(uint64_t bytes_per_s, uint64_t period_us, uint32_t line_bytes) {
    if (line_bytes == 0)
        throw std::invalid_argument("line_bytes must be positive");
    unsigned __int128 num = static_cast<unsigned __int128>(bytes_per_s) * period_us;
    return static_cast<uint64_t>(num / (static_cast<unsigned __int128>(line_bytes) * 1000000));
}

// --- size rendering ---

std::string format_size(uint64_t bytes) {
    struct Unit {
        uint64_t scale;
        const char* suffix;
    };
    static const Unit units[] = {{uint64_t(1) << 30, "GiB"}, {uint64_t(1) << 20, "MiB"},
                                 {uint64_t(1) << 10, "KiB"}};
    for (const Unit& u : units) {
        if (bytes < u.scale)
            continue;
        // exact within three fractional digits?
        unsigned __int128 scaled = static_cast<unsigned __int128>(bytes) * 1000;
        if (scaled % u.scale != 0)
            continue;
        uint64_t milli = static_cast<uint64_t>(scaled / u.scale);
        std::string s = std::to_string(milli / 1000);
        uint64_t frac = milli % 1000;
        if (frac != 0) {
            char buf[8];
            std::snprintf(buf, sizeof(buf), "%03llu", static_cast<unsigned long long>(frac));
            std::string f = buf;
            while (!f.empty() && f.back() == '0')
                f.pop_back();
            s += "." + f;
        }
        return s + u.suffix;
    }
    return std::to_string(bytes) + "B";
}

uint64_t parse_size(const std::string& text) {
    size_t pos = 0;
    while (pos < text.size() && (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.'))
        ++pos;
    if (pos == 0)
        throw std::invalid_argument("malformed size '" + text + "'");
    std::string num = text.substr(0, pos);
    std::string suffix = text.substr(pos);
    uint64_t scale;
    if (suffix == "B")
        scale = 1;
    else if (suffix == "KiB")
        scale = uint64_t(1) << 10;
    else if (suffix == "MiB")
        scale = uint64_t(1) << 20;
    else if (suffix == "GiB")
        scale = uint64_t(1) << 30;
    else
        throw std::invalid_argument("unknown size unit in '" + text + "'");

    auto dot = num.find('.');
    std::string ipart = dot == std::string::npos ? num : num.substr(0, dot);
    std::string fpart = dot == std::string::npos ? "" : num.substr(dot + 1);
    if (ipart.empty() || fpart.size() > 3 || (dot != std::string::npos && fpart.empty()))
        throw std::invalid_argument("malformed size '" + text + "'");
    uint64_t bytes = std::stoull(ipart) * scale;
    if (!fpart.empty()) {
        uint64_t digits = std::stoull(fpart);
        uint64_t denom = 1;
        for (size_t i = 0; i < fpart.size(); ++i)
            denom *= 10;
        uint64_t extra = digits * scale;
        if (extra % denom != 0)
            throw std::invalid_argument("size '" + text + "' is not an integral byte count");
        bytes += extra / denom;
    }
    return bytes;
}

// --- naming ---

namespace {

const char* access_token(OpType o) {
    switch (o) {
    case OpType::read: return "read";
    case OpType::write: return "write";
    default: return "readwrite"; // avoids ambiguity with '_' separators
    }
}

std::vector<const ResolvedGuest*> victims_of(const Setup& s) {
    std::vector<const ResolvedGuest*> v;
    for (const auto& g : s.guests)
        if (g.kind == GuestKind::victim_benchmark)
            v.push_back(&g);
    return v;
}

// True when the victims' masks are the prefix packing of their popcounts,
// i.e. reconstructible from the counts alone.
bool victim_masks_prefix_packed(const std::vector<const ResolvedGuest*>& victims) {
    uint32_t start = 0;
    for (const auto* g : victims) {
        if (!g->color_mask)
            return false;
        uint32_t k = static_cast<uint32_t>(std::popcount(*g->color_mask));
        uint64_t expect = ((uint64_t(1) << k) - 1) << start;
        if (*g->color_mask != expect)
            return false;
        start += k;
    }
    return true;
}

uint32_t mask_start_bit(uint64_t mask) {
    return mask == 0 ? 0 : static_cast<uint32_t>(std::countr_zero(mask));
}

} // namespace

std::string setup_name(const Setup& setup) {
    std::ostringstream name;
    auto victims = victims_of(setup);
    bool colored = false;
    for (const auto& g : setup.guests)
        if (g.color_mask)
            colored = true;

    if (setup.baseline) {
        name << "solo";
        if (colored) {
            name << "_cc";
            for (const auto* v : victims)
                name << "_" << std::popcount(v->color_mask.value_or(0));
            if (!victim_masks_prefix_packed(victims)) {
                name << "_v";
                for (size_t i = 0; i < victims.size(); ++i)
                    name << (i ? "_" : "") << mask_start_bit(victims[i]->color_mask.value_or(0));
            }
        }
    } else {
        name << "interf";
        for (const auto& g : setup.guests)
            if (g.engine)
                name << "_" << access_token(g.engine->op) << "_" << format_size(g.engine->buffer_bytes);
        if (colored) {
            name << "_cc";
            if (setup.guests.size() <= 2 && victims.size() == 1) {
                name << "_" << std::popcount(victims[0]->color_mask.value_or(0));
            } else {
                // counts of every guest reconstruct the contiguous partition
                for (const auto& g : setup.guests)
                    name << "_" << std::popcount(g.color_mask.value_or(0));
            }
        }
    }
    for (size_t i = 0; i < setup.guests.size(); ++i) {
        const auto& g = setup.guests[i];
        if (g.mbr)
            name << "_mbr_g" << i << "_" << g.mbr->budget << "_" << g.mbr->period_us << "us";
    }
    return name.str();
}

SetupNameParts parse_setup_name(const std::string& name) {
    std::vector<std::string> tok;
    std::string cur;
    for (char c : name) {
        if (c == '_') {
            tok.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    tok.push_back(cur);

    auto is_int = [](const std::string& s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) {
            return std::isdigit(static_cast<unsigned char>(c));
        });
    };

    SetupNameParts parts;
    size_t i = 0;
    if (tok[i] == "solo") {
        parts.solo = true;
        ++i;
    } else if (tok[i] == "interf") {
        ++i;
        bool first = true;
        while (i < tok.size() && (tok[i] == "read" || tok[i] == "write" || tok[i] == "readwrite")) {
            if (i + 1 >= tok.size())
                throw std::invalid_argument("missing buffer size in '" + name + "'");
            OpType op = tok[i] == "read"        ? OpType::read
                        : tok[i] == "write"     ? OpType::write
                                                : OpType::read_write;
            uint64_t size = parse_size(tok[i + 1]);
            if (first) {
                parts.access = op;
                parts.buffer_bytes = size;
                first = false;
            }
            i += 2;
        }
        if (first)
            throw std::invalid_argument("missing access type in '" + name + "'");
    } else {
        throw std::invalid_argument("setup name must start with 'solo' or 'interf': '" + name + "'");
    }

    if (i < tok.size() && tok[i] == "cc") {
        ++i;
        if (i >= tok.size() || !is_int(tok[i]))
            throw std::invalid_argument("malformed coloring suffix in '" + name + "'");
        parts.colors = static_cast<uint32_t>(std::stoul(tok[i]));
        ++i;
        while (i < tok.size() && is_int(tok[i]))
            ++i; // additional per-guest counts
        if (i < tok.size() && tok[i].size() > 1 && tok[i][0] == 'v' && is_int(tok[i].substr(1))) {
            ++i; // mask start disambiguator
            while (i < tok.size() && is_int(tok[i]))
                ++i;
        }
    }

    while (i < tok.size() && tok[i] == "mbr") {
        ++i;
        if (i >= tok.size() || tok[i].size() < 2 || tok[i][0] != 'g' || !is_int(tok[i].substr(1)))
            throw std::invalid_argument("malformed mbr guest index in '" + name + "'");
        uint32_t guest_index = static_cast<uint32_t>(std::stoul(tok[i].substr(1)));
        ++i;
        if (i >= tok.size() || !is_int(tok[i]))
            throw std::invalid_argument("malformed mbr budget in '" + name + "'");
        uint64_t budget = std::stoull(tok[i]);
        ++i;
        if (i >= tok.size() || tok[i].size() < 3 || tok[i].substr(tok[i].size() - 2) != "us" ||
            !is_int(tok[i].substr(0, tok[i].size() - 2)))
            throw std::invalid_argument("malformed mbr period in '" + name + "'");
        uint64_t period = std::stoull(tok[i].substr(0, tok[i].size() - 2));
        ++i;
        parts.mbr.push_back(SetupNameParts::MbrPart{guest_index, budget, period});
    }

    if (i != tok.size())
        throw std::invalid_argument("trailing tokens in setup name '" + name + "'");
    return parts;
}

// --- enumeration ---

Manifest enumerate_setups(const ExperimentSpec& exp, const PlatformSpec& plat) {
    Manifest m;
    m.platform = plat;
    m.coloring_enabled = exp.coloring.enabled;
    m.mbr_enabled = exp.mbr.enabled;
    m.mbr_mode = exp.mbr.mode;
    m.min_colors_per_vm = exp.coloring.min_colors_per_vm;
    m.repetitions = exp.repetitions;
    m.timeout_s = exp.timeout_s;
    m.backend = exp.backend;

    const auto& guests = exp.guests;
    size_t n = guests.size();

    // Contention configs, cross product across engine guests.
    std::vector<size_t> engine_idx;
    std::vector<std::vector<ContentionConfig>> engine_cfgs;
    for (size_t i = 0; i < n; ++i) {
        if (guests[i].kind == GuestKind::contention_engine) {
            engine_idx.push_back(i);
            engine_cfgs.push_back(gen_guest_configs(*guests[i].sweep));
        }
    }
    std::vector<std::vector<ContentionConfig>> engine_combos;
    if (!engine_idx.empty()) {
        engine_combos.push_back({});
        for (const auto& cfgs : engine_cfgs) {
            std::vector<std::vector<ContentionConfig>> next;
            for (const auto& partial : engine_combos)
                for (const auto& c : cfgs) {
                    auto combo = partial;
                    combo.push_back(c);
                    next.push_back(std::move(combo));
                }
            engine_combos = std::move(next);
        }
        uint64_t total = 1;
        for (const auto& cfgs : engine_cfgs)
            total *= cfgs.size();
        m.counts.contention_configs = total;
    }

    // Coloring variants: none + every generated assignment.
    std::vector<ColoringAssignment> colorings;
    if (exp.coloring.enabled) {
        colorings = gen_colorings(plat.color_count, static_cast<uint32_t>(n),
                                  exp.coloring.min_colors_per_vm);
        if (colorings.empty())
            throw ConfigError("coloring",
                              "no feasible coloring assignment for color_count=" +
                                  std::to_string(plat.color_count) + " and the given minimums");
        m.counts.coloring_assignments = colorings.size();
    }

    // MBR variants: none + every generated assignment.
    std::vector<MbrAssignment> mbr_assignments;
    if (exp.mbr.enabled) {
        std::vector<MbrGuestLists> regulated;
        for (size_t i = 0; i < n; ++i)
            if (!exp.mbr.budgets[i].empty())
                regulated.push_back(
                    MbrGuestLists{guests[i].name, exp.mbr.budgets[i], exp.mbr.periods_us[i]});
        if (!regulated.empty())
            mbr_assignments = gen_mbr(regulated, exp.mbr.mode);
        m.counts.mbr_assignments = mbr_assignments.size();
    }

    auto resolve_guest = [&](size_t i) {
        ResolvedGuest r;
        r.name = guests[i].name;
        r.kind = guests[i].kind;
        r.cpus = guests[i].cpus;
        r.victim = guests[i].victim;
        return r;
    };

    auto apply_mbr = [&](std::vector<ResolvedGuest>& rg, const MbrAssignment& a) {
        for (auto& g : rg)
            for (const auto& e : a.entries)
                if (e.guest == g.name)
                    g.mbr = e;
    };

    std::vector<Setup> baselines;
    std::vector<Setup> interference;

    // Plain solo: victims only, uncolored, unregulated.
    bool have_victims = std::any_of(guests.begin(), guests.end(), [](const GuestSpec& g) {
        return g.kind == GuestKind::victim_benchmark;
    });
    if (have_victims) {
        Setup solo;
        solo.baseline = true;
        for (size_t i = 0; i < n; ++i)
            if (guests[i].kind == GuestKind::victim_benchmark)
                solo.guests.push_back(resolve_guest(i));
        baselines.push_back(std::move(solo));

        // Per-coloring solo variants, deduplicated by the victims' masks.
        std::set<std::vector<uint64_t>> seen_victim_masks;
        for (const auto& a : colorings) {
            Setup s;
            s.baseline = true;
            std::vector<uint64_t> vm_masks;
            for (size_t i = 0; i < n; ++i) {
                if (guests[i].kind != GuestKind::victim_benchmark)
                    continue;
                ResolvedGuest r = resolve_guest(i);
                r.color_mask = a.masks[i];
                vm_masks.push_back(a.masks[i]);
                s.guests.push_back(std::move(r));
            }
            if (!seen_victim_masks.insert(vm_masks).second)
                continue;
            baselines.push_back(std::move(s));
        }
    }

    // Interference setups: engines x {no coloring + colorings} x {no mbr + mbr}.
    for (const auto& combo : engine_combos) {
        for (int ci = -1; ci < static_cast<int>(colorings.size()); ++ci) {
            for (int mi = -1; mi < static_cast<int>(mbr_assignments.size()); ++mi) {
                Setup s;
                s.baseline = false;
                for (size_t i = 0; i < n; ++i) {
                    ResolvedGuest r = resolve_guest(i);
                    if (guests[i].kind == GuestKind::contention_engine) {
                        size_t which = std::find(engine_idx.begin(), engine_idx.end(), i) -
                                       engine_idx.begin();
                        r.engine = combo[which];
                    }
                    if (ci >= 0)
                        r.color_mask = colorings[ci].masks[i];
                    s.guests.push_back(std::move(r));
                }
                if (mi >= 0)
                    apply_mbr(s.guests, mbr_assignments[mi]);
                interference.push_back(std::move(s));
            }
        }
    }

    // Assign ids and names in manifest order: baselines first.
    uint64_t id = 0;
    std::set<std::string> names;
    for (auto* bucket : {&baselines, &interference}) {
        for (auto& s : *bucket) {
            s.id = id++;
            s.repetitions = exp.repetitions;
            s.timeout_s = exp.timeout_s;
            s.name = setup_name(s);
            if (!names.insert(s.name).second)
                throw ConfigError("setups", "duplicate setup name '" + s.name + "'");
            m.setups.push_back(std::move(s));
        }
    }
    m.counts.baseline_setups = baselines.size();
    m.counts.interference_setups = interference.size();
    m.counts.total_setups = m.setups.size();
    return m;
}

// --- serialization ---

namespace {

json guest_to_json(const ResolvedGuest& g) {
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
    } else if (g.engine) {
        w["m"] = g.engine->cpus;
        w["l"] = g.engine->stride;
        w["w"] = g.engine->buffer_bytes;
        w["o"] = to_string(g.engine->op);
    }
    gj["workload"] = w;
    return gj;
}

ResolvedGuest guest_from_json(const json& gj) {
    ResolvedGuest g;
    g.name = gj.at("name").get<std::string>();
    std::string kind = gj.at("kind").get<std::string>();
    g.kind = kind == "victim_benchmark" ? GuestKind::victim_benchmark : GuestKind::contention_engine;
    for (const auto& c : gj.at("cpus"))
        g.cpus.push_back(c.get<uint32_t>());
    const json& w = gj.at("workload");
    if (g.kind == GuestKind::victim_benchmark) {
        VictimPreset v;
        v.bench_name = w.at("bench_name").get<std::string>();
        v.working_set_bytes = w.at("working_set_bytes").get<uint64_t>();
        v.total_accesses = w.at("total_accesses").get<uint64_t>();
        v.compute_cycles_per_access = w.at("compute_cycles_per_access").get<uint32_t>();
        v.write_fraction = w.at("write_fraction").get<double>();
        g.victim = v;
    } else {
        ContentionConfig c;
        c.cpus = w.at("m").get<uint32_t>();
        c.stride = w.at("l").get<uint64_t>();
        c.buffer_bytes = w.at("w").get<uint64_t>();
        c.op = op_type_from_string(w.at("o").get<std::string>());
        g.engine = c;
    }
    return g;
}

json setup_entry_json(const Setup& s) {
    json sj;
    sj["id"] = s.id;
    sj["name"] = s.name;
    json guests = json::array();
    for (const auto& g : s.guests)
        guests.push_back(guest_to_json(g));
    sj["guests"] = guests;
    bool colored = std::any_of(s.guests.begin(), s.guests.end(),
                               [](const ResolvedGuest& g) { return g.color_mask.has_value(); });
    if (colored) {
        json masks = json::array();
        for (const auto& g : s.guests)
            masks.push_back(g.color_mask.value_or(0));
        sj["coloring_masks"] = masks;
    } else {
        sj["coloring_masks"] = nullptr;
    }
    bool regulated = std::any_of(s.guests.begin(), s.guests.end(),
                                 [](const ResolvedGuest& g) { return g.mbr.has_value(); });
    if (regulated) {
        json entries = json::array();
        for (const auto& g : s.guests)
            if (g.mbr)
                entries.push_back({{"guest", g.mbr->guest},
                                   {"budget", g.mbr->budget},
                                   {"period_us", g.mbr->period_us}});
        sj["mbr"] = entries;
    } else {
        sj["mbr"] = nullptr;
    }
    return sj;
}

Setup setup_from_entry(const json& sj, uint32_t repetitions, double timeout_s) {
    Setup s;
    s.id = sj.at("id").get<uint64_t>();
    s.name = sj.at("name").get<std::string>();
    s.repetitions = repetitions;
    s.timeout_s = timeout_s;
    s.baseline = s.name.rfind("solo", 0) == 0;
    for (const auto& gj : sj.at("guests"))
        s.guests.push_back(guest_from_json(gj));
    const json& masks = sj.at("coloring_masks");
    if (!masks.is_null()) {
        for (size_t i = 0; i < s.guests.size(); ++i)
            s.guests[i].color_mask = masks.at(i).get<uint64_t>();
    }
    const json& mbr = sj.at("mbr");
    if (!mbr.is_null()) {
        for (const auto& ej : mbr) {
            MbrEntry e;
            e.guest = ej.at("guest").get<std::string>();
            e.budget = ej.at("budget").get<uint64_t>();
            e.period_us = ej.at("period_us").get<uint64_t>();
            for (auto& g : s.guests)
                if (g.name == e.guest)
                    g.mbr = e;
        }
    }
    return s;
}

json platform_to_json(const PlatformSpec& p) {
    return json::parse(emit_platform(p));
}

} // namespace

std::string manifest_to_json(const Manifest& m) {
    json doc;
    json meta;
    meta["platform"] = platform_to_json(m.platform);
    meta["counts"] = {{"contention_configs", m.counts.contention_configs},
                      {"coloring_assignments", m.counts.coloring_assignments},
                      {"mbr_assignments", m.counts.mbr_assignments},
                      {"interference_setups", m.counts.interference_setups},
                      {"baseline_setups", m.counts.baseline_setups},
                      {"total_setups", m.counts.total_setups}};
    meta["coloring_enabled"] = m.coloring_enabled;
    meta["mbr_enabled"] = m.mbr_enabled;
    meta["mbr_mode"] = to_string(m.mbr_mode);
    meta["min_colors_per_vm"] = m.min_colors_per_vm;
    meta["repetitions"] = m.repetitions;
    meta["timeout_s"] = m.timeout_s;
    meta["backend"] = to_string(m.backend);
    doc["meta"] = meta;
    json setups = json::array();
    for (const auto& s : m.setups)
        setups.push_back(setup_entry_json(s));
    doc["setups"] = setups;
    return doc.dump(2) + "\n";
}

Manifest manifest_from_json(const std::string& text) {
    json doc = json::parse(text);
    Manifest m;
    const json& meta = doc.at("meta");
    m.platform = parse_platform(meta.at("platform").dump());
    const json& counts = meta.at("counts");
    m.counts.contention_configs = counts.at("contention_configs").get<uint64_t>();
    m.counts.coloring_assignments = counts.at("coloring_assignments").get<uint64_t>();
    m.counts.mbr_assignments = counts.at("mbr_assignments").get<uint64_t>();
    m.counts.interference_setups = counts.at("interference_setups").get<uint64_t>();
    m.counts.baseline_setups = counts.at("baseline_setups").get<uint64_t>();
    m.counts.total_setups = counts.at("total_setups").get<uint64_t>();
    m.coloring_enabled = meta.at("coloring_enabled").get<bool>();
    m.mbr_enabled = meta.at("mbr_enabled").get<bool>();
    m.mbr_mode = meta.at("mbr_mode").get<std::string>() == "cross_product" ? MbrMode::cross_product
                                                                           : MbrMode::per_guest_sweep;
    for (const auto& v : meta.at("min_colors_per_vm"))
        m.min_colors_per_vm.push_back(v.get<uint32_t>());
    m.repetitions = meta.at("repetitions").get<uint32_t>();
    m.timeout_s = meta.at("timeout_s").get<double>();
    m.backend = backend_from_string(meta.at("backend").get<std::string>());
    for (const auto& sj : doc.at("setups"))
        m.setups.push_back(setup_from_entry(sj, m.repetitions, m.timeout_s));
    return m;
}

std::string setup_to_json(const Setup& s, const PlatformSpec& plat, uint32_t repetitions,
                          double timeout_s) {
    json doc = setup_entry_json(s);
    doc["platform"] = platform_to_json(plat);
    doc["repetitions"] = repetitions;
    doc["timeout_s"] = timeout_s;
    doc["baseline"] = s.baseline;
    return doc.dump(2) + "\n";
}

std::pair<Setup, PlatformSpec> setup_from_json(const std::string& text) {
    json doc = json::parse(text);
    PlatformSpec plat = parse_platform(doc.at("platform").dump());
    Setup s = setup_from_entry(doc, doc.at("repetitions").get<uint32_t>(),
                               doc.at("timeout_s").get<double>());
    s.baseline = doc.at("baseline").get<bool>();
    return {std::move(s), std::move(plat)};
}

std::filesystem::path write_manifest(const Manifest& m, const std::filesystem::path& out_dir,
                                     bool force) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::path manifest_path = out_dir / "manifest.json";
    std::string text = manifest_to_json(m);
    if (fs::exists(manifest_path) && !force) {
        std::ifstream in(manifest_path);
        std::ostringstream existing;
        existing << in.rdbuf();
        if (existing.str() != text)
            throw ConfigError(manifest_path.string(),
                              "existing manifest differs; pass --force to overwrite");
    }
    std::ofstream(manifest_path) << text;
    for (const auto& s : m.setups) {
        fs::path p = out_dir / ("setup_" + std::to_string(s.id) + ".json");
        std::ofstream(p) << setup_to_json(s, m.platform, m.repetitions, m.timeout_s);
    }
    return manifest_path;
}

Manifest load_manifest(const std::filesystem::path& dir_or_file) {
    namespace fs = std::filesystem;
    fs::path p = dir_or_file;
    if (fs::is_directory(p))
        p /= "manifest.json";
    std::ifstream in(p);
    if (!in)
        throw ConfigError(p.string(), "cannot open manifest");
    std::ostringstream buf;
    buf << in.rdbuf();
    return manifest_from_json(buf.str());
}

} // namespace spim
