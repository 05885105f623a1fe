#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "spim/backend.hpp"
#include "spim/orchestrator.hpp"

using namespace spim;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SPIM_FIXTURES_DIR;

PlatformSpec zcu104() { return load_platform(kFixtures / "zcu104.json"); }

Setup tiny_setup(uint64_t id, const std::string& name, uint64_t accesses = 20000) {
    Setup s;
    s.id = id;
    s.name = name;
    s.baseline = true;
    s.repetitions = 3;
    s.timeout_s = 30.0;
    ResolvedGuest g;
    g.name = "vm_linux";
    g.kind = GuestKind::victim_benchmark;
    g.cpus = {0};
    g.victim = VictimPreset{"bench", 131072, accesses, 1, 0.2};
    s.guests.push_back(g);
    return s;
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_lines(const fs::path& file, const std::vector<std::string>& lines) {
    fs::create_directories(file.parent_path());
    std::ofstream out(file);
    for (const auto& l : lines)
        out << l << "\n";
}

} // namespace

TEST_CASE("run_setup on the sim backend completes with one sample set per iteration") {
    SimBackend backend(zcu104(), SimParams{});
    Setup s = tiny_setup(0, "solo");
    fs::path raw = fresh_dir("spim_test_run_setup");
    RunRecord rec = run_setup(s, backend, 3, 30.0, raw);

    CHECK(rec.status == RunStatus::complete);
    REQUIRE(rec.samples.size() == 3);
    for (uint32_t i = 0; i < 3; ++i) {
        CHECK(rec.samples[i].iteration == i);
        CHECK(rec.samples[i].time_ms.has_value());
        CHECK(rec.samples[i].llc_miss.has_value());
        CHECK(rec.samples[i].bus_cycles.has_value());
        CHECK(rec.samples[i].mem_access.has_value());
        CHECK(rec.samples[i].retired_ops.has_value());
    }
    CHECK(rec.parse_errors.empty());
    CHECK(fs::exists(raw / "solo" / "vm_linux.log"));
    fs::remove_all(raw);
}

TEST_CASE("raw logs reparse to exactly the recorded samples") {
    SimBackend backend(zcu104(), SimParams{});
    Setup s = tiny_setup(0, "solo");
    fs::path raw = fresh_dir("spim_test_roundtrip");
    RunRecord rec = run_setup(s, backend, 2, 30.0, raw);

    std::vector<NamedChannel> channels;
    channels.push_back(
        {"vm_linux", std::make_shared<FileChannel>(raw / "solo" / "vm_linux.log")});
    CollectResult again =
        collect(channels, {{"vm_linux", "bench"}}, std::chrono::milliseconds(2000));
    CHECK_FALSE(again.timed_out);
    REQUIRE(again.samples.size() == rec.samples.size());
    for (size_t i = 0; i < again.samples.size(); ++i)
        CHECK(again.samples[i] == rec.samples[i]);
    fs::remove_all(raw);
}

TEST_CASE("replay of a truncated log yields a timeout with partial samples") {
    fs::path dir = fresh_dir("spim_test_trunc");
    write_lines(dir / "solo" / "vm_linux.log", {
                                                   "SPIM;v1;r0;vm_linux;bench;0;time_ms;1.5",
                                                   "SPIM;v1;r0;vm_linux;bench;0;llc_miss;10",
                                                   // no END
                                               });
    ReplayBackend backend(dir);
    Setup s = tiny_setup(0, "solo");
    fs::path raw = fresh_dir("spim_test_trunc_raw");
    RunRecord rec = run_setup(s, backend, 1, 1.0, raw);
    CHECK(rec.status == RunStatus::timeout);
    REQUIRE(rec.samples.size() == 1);
    CHECK(rec.samples[0].time_ms == 1.5);
    fs::remove_all(dir);
    fs::remove_all(raw);
}

TEST_CASE("replay of a corrupted line records parse_error but keeps the rest") {
    fs::path dir = fresh_dir("spim_test_corrupt");
    write_lines(dir / "solo" / "vm_linux.log",
                {
                    "SPIM;v1;r0;vm_linux;bench;0;time_ms;1.5",
                    "SPIM;v1;r0;vm_linux;bench;0;llc_miss;garbage",
                    "SPIM;v1;r0;vm_linux;bench;0;mem_access;5",
                    "SPIM;v1;r0;vm_linux;bench;END",
                });
    ReplayBackend backend(dir);
    Setup s = tiny_setup(0, "solo");
    fs::path raw = fresh_dir("spim_test_corrupt_raw");
    RunRecord rec = run_setup(s, backend, 1, 5.0, raw);
    CHECK(rec.status == RunStatus::parse_error);
    REQUIRE(rec.parse_errors.size() == 1);
    CHECK(rec.parse_errors[0].find("garbage") != std::string::npos);
    REQUIRE(rec.samples.size() == 1);
    CHECK(rec.samples[0].time_ms == 1.5);
    CHECK(rec.samples[0].mem_access == 5); // later lines still parsed
    fs::remove_all(dir);
    fs::remove_all(raw);
}

namespace {

Manifest tiny_manifest(std::vector<Setup> setups) {
    Manifest m;
    m.platform = zcu104();
    m.repetitions = 2;
    m.timeout_s = 30.0;
    m.setups = std::move(setups);
    m.counts.total_setups = m.setups.size();
    return m;
}

} // namespace

TEST_CASE("sweeps are resumable and never rerun complete records") {
    Manifest m = tiny_manifest({tiny_setup(0, "solo"), tiny_setup(1, "solo_cc_2")});
    m.setups[1].guests[0].color_mask = 0b11;
    fs::path results = fresh_dir("spim_test_sweep");

    auto factory = [&]() -> std::unique_ptr<Backend> {
        return std::make_unique<SimBackend>(zcu104(), SimParams{});
    };
    SweepSummary first = run_sweep(m, factory, results);
    CHECK(first.total == 2);
    CHECK(first.complete == 2);
    CHECK(first.executed == 2);
    CHECK(first.all_complete());
    CHECK(fs::exists(results / "run_0.json"));
    CHECK(fs::exists(results / "sweep_summary.json"));

    SweepSummary second = run_sweep(m, factory, results);
    CHECK(second.skipped == 2);
    CHECK(second.executed == 0); // zero re-executions
    CHECK(second.all_complete());

    SweepOptions force;
    force.force = true;
    SweepSummary third = run_sweep(m, factory, results, force);
    CHECK(third.executed == 2);
    fs::remove_all(results);
}

TEST_CASE("a timing-out setup does not stop the sweep") {
    // first setup exceeds the cycle cap, second completes
    Setup hog = tiny_setup(0, "solo", 50000000);
    hog.guests[0].victim->compute_cycles_per_access = 200;
    Manifest m = tiny_manifest({hog, tiny_setup(1, "solo_cc_2")});
    m.setups[1].guests[0].color_mask = 0b11;

    SimParams params;
    params.cycle_cap = 2000000;
    fs::path results = fresh_dir("spim_test_sweep_timeout");
    auto factory = [&]() -> std::unique_ptr<Backend> {
        return std::make_unique<SimBackend>(zcu104(), params);
    };
    SweepSummary summary = run_sweep(m, factory, results);
    CHECK(summary.complete == 1);
    CHECK(summary.timeout == 1);
    CHECK_FALSE(summary.all_complete());

    std::ifstream in(results / "run_0.json");
    std::string text((std::istreambuf_iterator<char>(in)), {});
    RunRecord rec = run_record_from_json(text);
    CHECK(rec.status == RunStatus::timeout);
    fs::remove_all(results);
}

TEST_CASE("an empty manifest sweeps to an empty summary") {
    Manifest m = tiny_manifest({});
    fs::path results = fresh_dir("spim_test_sweep_empty");
    auto factory = [&]() -> std::unique_ptr<Backend> {
        return std::make_unique<SimBackend>(zcu104(), SimParams{});
    };
    SweepSummary summary = run_sweep(m, factory, results);
    CHECK(summary.total == 0);
    CHECK(summary.all_complete());
    fs::remove_all(results);
}

TEST_CASE("parallel sweeps with a deterministic backend match serial results") {
    std::vector<Setup> setups;
    for (uint64_t i = 0; i < 6; ++i) {
        Setup s = tiny_setup(i, i == 0 ? "solo" : "solo_cc_" + std::to_string(i + 1));
        if (i > 0)
            s.guests[0].color_mask = (uint64_t(1) << (i + 1)) - 1;
        setups.push_back(std::move(s));
    }
    Manifest m = tiny_manifest(setups);
    auto factory = [&]() -> std::unique_ptr<Backend> {
        return std::make_unique<SimBackend>(zcu104(), SimParams{});
    };

    fs::path serial = fresh_dir("spim_test_sweep_serial");
    fs::path parallel = fresh_dir("spim_test_sweep_parallel");
    run_sweep(m, factory, serial);
    SweepOptions opts;
    opts.jobs = 4;
    run_sweep(m, factory, parallel, opts);

    for (uint64_t i = 0; i < 6; ++i) {
        auto read_all = [](const fs::path& p) {
            std::ifstream in(p);
            return std::string(std::istreambuf_iterator<char>(in), {});
        };
        RunRecord a =
            run_record_from_json(read_all(serial / ("run_" + std::to_string(i) + ".json")));
        RunRecord b =
            run_record_from_json(read_all(parallel / ("run_" + std::to_string(i) + ".json")));
        CHECK(a.samples == b.samples);
        CHECK(a.status == b.status);
    }
    fs::remove_all(serial);
    fs::remove_all(parallel);
}

TEST_CASE("run records round-trip through json") {
    SimBackend backend(zcu104(), SimParams{});
    Setup s = tiny_setup(7, "solo");
    fs::path raw = fresh_dir("spim_test_record_json");
    RunRecord rec = run_setup(s, backend, 2, 30.0, raw);
    RunRecord again = run_record_from_json(run_record_to_json(rec));
    CHECK(again.setup_id == rec.setup_id);
    CHECK(again.setup_name == rec.setup_name);
    CHECK(again.status == rec.status);
    CHECK(again.samples == rec.samples);
    CHECK(again.raw_log_paths == rec.raw_log_paths);
    fs::remove_all(raw);
}
