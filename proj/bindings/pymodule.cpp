#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spim/backend.hpp"
#include "spim/config.hpp"
#include "spim/genspace.hpp"
#include "spim/logmon.hpp"
#include "spim/orchestrator.hpp"
#include "spim/report.hpp"
#include "spim/sim.hpp"

namespace py = pybind11;
using namespace spim;

PYBIND11_MODULE(_core, m) {
    m.doc() = "interference-analysis toolkit: experiment enumeration, contention "
              "simulation and reporting";

    py::enum_<OpType>(m, "OpType")
        .value("read", OpType::read)
        .value("write", OpType::write)
        .value("read_write", OpType::read_write);

    py::enum_<GuestKind>(m, "GuestKind")
        .value("victim_benchmark", GuestKind::victim_benchmark)
        .value("contention_engine", GuestKind::contention_engine);

    py::enum_<MbrMode>(m, "MbrMode")
        .value("per_guest_sweep", MbrMode::per_guest_sweep)
        .value("cross_product", MbrMode::cross_product);

    py::class_<CacheGeom>(m, "CacheGeom")
        .def_readonly("size_bytes", &CacheGeom::size_bytes)
        .def_readonly("ways", &CacheGeom::ways)
        .def_readonly("sets", &CacheGeom::sets);

    py::class_<PlatformSpec>(m, "PlatformSpec")
        .def_readonly("name", &PlatformSpec::name)
        .def_readonly("cpu_count", &PlatformSpec::cpu_count)
        .def_readonly("clock_hz", &PlatformSpec::clock_hz)
        .def_readonly("line_bytes", &PlatformSpec::line_bytes)
        .def_readonly("page_bytes", &PlatformSpec::page_bytes)
        .def_readonly("l1", &PlatformSpec::l1)
        .def_readonly("l2", &PlatformSpec::l2)
        .def_readonly("color_count", &PlatformSpec::color_count)
        .def("max_colors", &PlatformSpec::max_colors);

    py::class_<ExperimentSpec>(m, "ExperimentSpec")
        .def_readonly("platform_path", &ExperimentSpec::platform_path)
        .def_readonly("repetitions", &ExperimentSpec::repetitions)
        .def_readonly("timeout_s", &ExperimentSpec::timeout_s)
        .def_property_readonly("guest_names", [](const ExperimentSpec& e) {
            std::vector<std::string> names;
            for (const auto& g : e.guests)
                names.push_back(g.name);
            return names;
        });

    py::class_<VictimPreset>(m, "VictimPreset")
        .def(py::init([](std::string bench_name, uint64_t working_set_bytes, uint64_t total_accesses,
                         uint32_t compute_cycles_per_access, double write_fraction) {
                 VictimPreset v;
                 v.bench_name = std::move(bench_name);
                 v.working_set_bytes = working_set_bytes;
                 v.total_accesses = total_accesses;
                 v.compute_cycles_per_access = compute_cycles_per_access;
                 v.write_fraction = write_fraction;
                 return v;
             }),
             py::arg("bench_name"), py::arg("working_set_bytes"), py::arg("total_accesses"),
             py::arg("compute_cycles_per_access") = 0, py::arg("write_fraction") = 0.0)
        .def_readonly("bench_name", &VictimPreset::bench_name)
        .def_readonly("working_set_bytes", &VictimPreset::working_set_bytes)
        .def_readonly("total_accesses", &VictimPreset::total_accesses);

    py::class_<ContentionConfig>(m, "ContentionConfig")
        .def(py::init([](uint32_t cpus, uint64_t stride, uint64_t buffer_bytes, OpType op) {
                 return ContentionConfig{cpus, stride, buffer_bytes, op};
             }),
             py::arg("cpus"), py::arg("stride"), py::arg("buffer_bytes"), py::arg("op"))
        .def_readonly("cpus", &ContentionConfig::cpus)
        .def_readonly("stride", &ContentionConfig::stride)
        .def_readonly("buffer_bytes", &ContentionConfig::buffer_bytes)
        .def_readonly("op", &ContentionConfig::op)
        .def("__repr__", [](const ContentionConfig& c) {
            return "ContentionConfig(m=" + std::to_string(c.cpus) + ", l=" + std::to_string(c.stride) +
                   ", w=" + std::to_string(c.buffer_bytes) + ", o=" + to_string(c.op) + ")";
        });

    py::class_<ColoringAssignment>(m, "ColoringAssignment")
        .def_readonly("masks", &ColoringAssignment::masks)
        .def_readonly("boundaries", &ColoringAssignment::boundaries);

    py::class_<MbrEntry>(m, "MbrEntry")
        .def_readonly("guest", &MbrEntry::guest)
        .def_readonly("budget", &MbrEntry::budget)
        .def_readonly("period_us", &MbrEntry::period_us);

    py::class_<MbrAssignment>(m, "MbrAssignment")
        .def_readonly("entries", &MbrAssignment::entries);

    py::class_<ResolvedGuest>(m, "ResolvedGuest")
        .def_readonly("name", &ResolvedGuest::name)
        .def_readonly("kind", &ResolvedGuest::kind)
        .def_readonly("cpus", &ResolvedGuest::cpus)
        .def_readonly("victim", &ResolvedGuest::victim)
        .def_readonly("engine", &ResolvedGuest::engine)
        .def_readonly("color_mask", &ResolvedGuest::color_mask)
        .def_readonly("mbr", &ResolvedGuest::mbr);

    py::class_<Setup>(m, "Setup")
        .def_readonly("id", &Setup::id)
        .def_readonly("name", &Setup::name)
        .def_readonly("guests", &Setup::guests)
        .def_readonly("baseline", &Setup::baseline)
        .def_readonly("repetitions", &Setup::repetitions);

    py::class_<ManifestCounts>(m, "ManifestCounts")
        .def_readonly("contention_configs", &ManifestCounts::contention_configs)
        .def_readonly("coloring_assignments", &ManifestCounts::coloring_assignments)
        .def_readonly("mbr_assignments", &ManifestCounts::mbr_assignments)
        .def_readonly("interference_setups", &ManifestCounts::interference_setups)
        .def_readonly("baseline_setups", &ManifestCounts::baseline_setups)
        .def_readonly("total_setups", &ManifestCounts::total_setups);

    py::class_<Manifest>(m, "Manifest")
        .def_readonly("platform", &Manifest::platform)
        .def_readonly("counts", &Manifest::counts)
        .def_readonly("setups", &Manifest::setups);

    py::class_<MetricsSample>(m, "MetricsSample")
        .def_readonly("vm", &MetricsSample::vm)
        .def_readonly("bench", &MetricsSample::bench)
        .def_readonly("iteration", &MetricsSample::iteration)
        .def_readonly("time_ms", &MetricsSample::time_ms)
        .def_readonly("llc_miss", &MetricsSample::llc_miss)
        .def_readonly("bus_cycles", &MetricsSample::bus_cycles)
        .def_readonly("mem_access", &MetricsSample::mem_access)
        .def_readonly("retired_ops", &MetricsSample::retired_ops);

    py::class_<SimParams>(m, "SimParams")
        .def(py::init<>())
        .def_readwrite("l1_hit_cycles", &SimParams::l1_hit_cycles)
        .def_readwrite("l2_hit_cycles", &SimParams::l2_hit_cycles)
        .def_readwrite("bus_service_cycles", &SimParams::bus_service_cycles)
        .def_readwrite("writeback_extra_transaction", &SimParams::writeback_extra_transaction)
        .def_readwrite("mem_bytes", &SimParams::mem_bytes)
        .def_readwrite("seed", &SimParams::seed)
        .def_readwrite("cycle_cap", &SimParams::cycle_cap)
        .def_readwrite("check_structure", &SimParams::check_structure)
        .def_readwrite("private_engine_buffers", &SimParams::private_engine_buffers)
        .def_readwrite("collect_mbr_trace", &SimParams::collect_mbr_trace);

    py::class_<VmCounters>(m, "VmCounters")
        .def_readonly("l1_hit", &VmCounters::l1_hit)
        .def_readonly("llc_access", &VmCounters::llc_access)
        .def_readonly("llc_miss", &VmCounters::llc_miss)
        .def_readonly("mem_access", &VmCounters::mem_access)
        .def_readonly("writebacks", &VmCounters::writebacks)
        .def_readonly("bus_cycles", &VmCounters::bus_cycles)
        .def_readonly("retired_ops", &VmCounters::retired_ops)
        .def_readonly("completion_cycle", &VmCounters::completion_cycle);

    py::class_<MbrTraceEntry>(m, "MbrTraceEntry")
        .def_readonly("cpu", &MbrTraceEntry::cpu)
        .def_readonly("completion_cycle", &MbrTraceEntry::completion_cycle);

    py::class_<SimResult>(m, "SimResult")
        .def_readonly("samples", &SimResult::samples)
        .def_readonly("vm_counters", &SimResult::vm_counters)
        .def_readonly("mbr_trace", &SimResult::mbr_trace);

    py::class_<MetricEvent>(m, "MetricEvent")
        .def_readonly("run_id", &MetricEvent::run_id)
        .def_readonly("vm", &MetricEvent::vm)
        .def_readonly("bench", &MetricEvent::bench)
        .def_readonly("is_end", &MetricEvent::is_end)
        .def_readonly("iteration", &MetricEvent::iteration)
        .def_readonly("value", &MetricEvent::value);

    py::class_<SlowdownRow>(m, "SlowdownRow")
        .def_readonly("setup", &SlowdownRow::setup)
        .def_readonly("bench", &SlowdownRow::bench)
        .def_readonly("baseline", &SlowdownRow::baseline)
        .def_readonly("slowdown", &SlowdownRow::slowdown)
        .def_readonly("llc_miss_ratio", &SlowdownRow::llc_miss_ratio)
        .def_readonly("bus_cycles_ratio", &SlowdownRow::bus_cycles_ratio)
        .def_readonly("mem_access_ratio", &SlowdownRow::mem_access_ratio)
        .def_readonly("n", &SlowdownRow::n);

    // config loading
    m.def("parse_platform", &parse_platform, py::arg("text"));
    m.def("load_platform", &load_platform, py::arg("file"));
    m.def("load_experiment", &load_experiment, py::arg("file"), py::arg("platform"));
    m.def("load_sim_params", &load_sim_params, py::arg("file"));

    // generation
    m.def("gen_guest_configs",
          [](std::vector<uint32_t> m_, std::vector<uint64_t> l, std::vector<uint64_t> w,
             std::vector<OpType> o) {
              ContentionSweep s;
              s.cpu_configs = std::move(m_);
              s.line_strides = std::move(l);
              s.workload_sizes = std::move(w);
              s.op_types = std::move(o);
              return gen_guest_configs(s);
          },
          py::arg("cpu_configs"), py::arg("line_strides"), py::arg("workload_sizes"),
          py::arg("op_types"));
    m.def("mask_for_partition", &mask_for_partition, py::arg("s"), py::arg("e"),
          py::arg("color_count"));
    m.def("gen_colorings", &gen_colorings, py::arg("color_count"), py::arg("guest_count"),
          py::arg("min_colors"));
    m.def("gen_mbr",
          [](const std::vector<std::tuple<std::string, std::vector<uint64_t>,
                                          std::vector<uint64_t>>>& guests,
             MbrMode mode) {
              std::vector<MbrGuestLists> lists;
              for (const auto& [name, budgets, periods] : guests)
                  lists.push_back(MbrGuestLists{name, budgets, periods});
              return gen_mbr(lists, mode);
          },
          py::arg("guests"), py::arg("mode") = MbrMode::per_guest_sweep);
    m.def("budget_from_bandwidth", &budget_from_bandwidth, py::arg("bytes_per_s"),
          py::arg("period_us"), py::arg("line_bytes"));
    m.def("enumerate_setups", &enumerate_setups, py::arg("experiment"), py::arg("platform"));
    m.def("setup_name", &setup_name, py::arg("setup"));
    m.def("parse_setup_name", [](const std::string& name) {
        SetupNameParts parts = parse_setup_name(name);
        py::dict d;
        d["solo"] = parts.solo;
        d["access"] = parts.access ? py::cast(*parts.access) : py::none();
        d["buffer_bytes"] = parts.buffer_bytes ? py::cast(*parts.buffer_bytes) : py::none();
        d["colors"] = parts.colors ? py::cast(*parts.colors) : py::none();
        py::list mbr;
        for (const auto& p : parts.mbr)
            mbr.append(py::make_tuple(p.guest_index, p.budget, p.period_us));
        d["mbr"] = mbr;
        return d;
    });
    m.def("format_size", &format_size, py::arg("bytes"));
    m.def("parse_size", &parse_size, py::arg("text"));
    m.def("write_manifest", &write_manifest, py::arg("manifest"), py::arg("out_dir"),
          py::arg("force") = false);
    m.def("load_manifest", &load_manifest, py::arg("dir_or_file"));

    // simulation
    m.def("color_of", &color_of, py::arg("address"), py::arg("page_bytes"), py::arg("color_count"));
    m.def("simulate", &simulate, py::arg("setup"), py::arg("platform"), py::arg("params"),
          py::arg("repetitions") = 1,
          py::call_guard<py::gil_scoped_release>());

    // protocol
    m.def("parse_line", [](const std::string& line) -> py::object {
        ParsedLine p = parse_line(line);
        switch (p.kind) {
        case ParsedLine::Kind::event: return py::cast(p.event);
        case ParsedLine::Kind::ignored: return py::none();
        default: throw std::runtime_error(p.error);
        }
    });
    m.def("emit_line", &emit_line, py::arg("event"));

    // reporting
    m.def("diminishing_returns", &diminishing_returns, py::arg("series"), py::arg("epsilon"));
    m.def("run_report",
          [](const std::filesystem::path& results_dir) {
              auto records = load_records(results_dir);
              return build_rows(aggregate(records));
          },
          py::arg("results_dir"));
}
