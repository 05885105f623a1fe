#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "spim/orchestrator.hpp"

using namespace spim;
using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

const std::string kBin = SPIM_CLI_BIN;
const fs::path kFixtures = SPIM_FIXTURES_DIR;

struct CmdResult {
    int exit_code;
    std::string out; // stdout + stderr
};

CmdResult run_cli(const std::string& args) {
    std::string cmd = kBin + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    std::string out;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), buf.size(), pipe))
        out += buf.data();
    int status = pclose(pipe);
    int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, out};
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

std::string read_all(const fs::path& p) {
    std::ifstream in(p);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// a one-victim experiment over a 2-color platform, small enough for fast
// end-to-end runs: 2 configs x (1 coloring + none) = 4 interference setups
fs::path tiny_experiment(const fs::path& dir) {
    fs::create_directories(dir);
    std::ofstream(dir / "platform.json") << R"({
  "name": "mini", "cpu_count": 4, "clock_hz": 1000000000,
  "line_bytes": 64, "page_bytes": 4096,
  "l1": {"size_bytes": 8192, "ways": 2},
  "l2": {"size_bytes": 262144, "ways": 16},
  "color_count": 2
})";
    std::ofstream(dir / "experiment.json") << R"({
  "platform": "platform.json",
  "guests": [
    {"name": "vm_linux", "kind": "victim_benchmark", "cpus": [0],
     "workload": {"bench_name": "bench", "working_set_bytes": 131072,
                  "total_accesses": 20000, "compute_cycles_per_access": 1,
                  "write_fraction": 0.2}},
    {"name": "vm_baremetal", "kind": "contention_engine", "cpus": [1, 2],
     "workload": {"cpu_configs": [2], "line_strides": [64],
                  "workload_sizes": [65536, 262144], "op_types": ["write"]}}
  ],
  "coloring": {"enabled": true, "min_colors_per_vm": [1, 1]},
  "mbr": {"enabled": false, "budgets": [[], []], "periods_us": [[], []]},
  "repetitions": 2,
  "timeout_s": 30.0,
  "backend": "sim"
})";
    return dir / "experiment.json";
}

} // namespace

TEST_CASE("gen reproduces the 84-setup count on the reproduction fixture") {
    fs::path out = fresh_dir("spim_cli_gen84");
    CmdResult r = run_cli("gen --experiment " + (kFixtures / "paper_repro.json").string() +
                          " --platform " + (kFixtures / "zcu104.json").string() + " --out " +
                          out.string());
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("84 interference setups + 7 baselines") != std::string::npos);
    CHECK(fs::exists(out / "manifest.json"));
    CHECK(fs::exists(out / "setup_0.json"));

    SUBCASE("a second gen is byte-identical") {
        std::string before = read_all(out / "manifest.json");
        CmdResult again = run_cli("gen --experiment " + (kFixtures / "paper_repro.json").string() +
                                  " --platform " + (kFixtures / "zcu104.json").string() +
                                  " --out " + out.string());
        CHECK(again.exit_code == 0);
        CHECK(read_all(out / "manifest.json") == before);
    }
    fs::remove_all(out);
}

TEST_CASE("gen with a missing platform file exits 2") {
    fs::path out = fresh_dir("spim_cli_gen_missing");
    CmdResult r = run_cli("gen --experiment " + (kFixtures / "paper_repro.json").string() +
                          " --platform /nonexistent/platform.json --out " + out.string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("validate accepts the fixture and rejects a broken experiment") {
    CmdResult ok = run_cli("validate --experiment " + (kFixtures / "paper_repro.json").string() +
                           " --platform " + (kFixtures / "zcu104.json").string());
    CHECK(ok.exit_code == 0);
    CHECK(ok.out.find("ok:") != std::string::npos);

    fs::path dir = fresh_dir("spim_cli_validate");
    fs::create_directories(dir);
    std::ofstream(dir / "broken.json") << R"({
  "platform": ")" << (kFixtures / "zcu104.json").string() << R"(",
  "guests": [
    {"name": "a", "kind": "victim_benchmark", "cpus": [0],
     "workload": {"bench_name": "b", "working_set_bytes": 4096, "total_accesses": 10,
                  "compute_cycles_per_access": 0, "write_fraction": 0.0}},
    {"name": "b", "kind": "victim_benchmark", "cpus": [0],
     "workload": {"bench_name": "b", "working_set_bytes": 4096, "total_accesses": 10,
                  "compute_cycles_per_access": 0, "write_fraction": 0.0}}
  ],
  "coloring": {"enabled": false},
  "mbr": {"enabled": false, "budgets": [], "periods_us": []},
  "repetitions": 1, "timeout_s": 5.0, "backend": "sim"
})";
    CmdResult bad = run_cli("validate --experiment " + (dir / "broken.json").string());
    CHECK(bad.exit_code == 2);
    CHECK(bad.out.find("overlapping") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("run rejects unknown backends and non-parallelizable jobs") {
    fs::path dir = fresh_dir("spim_cli_run_usage");
    tiny_experiment(dir);
    fs::path setups = dir / "setups";
    run_cli("gen --experiment " + (dir / "experiment.json").string() + " --out " +
            setups.string());

    CmdResult unknown = run_cli("run --setups " + setups.string() + " --backend board --out " +
                                (dir / "results").string());
    CHECK(unknown.exit_code == 2);
    CHECK(unknown.out.find("unknown backend") != std::string::npos);

    std::ofstream(dir / "serialmap.json") << R"({"vm_linux": "/dev/null"})";
    CmdResult serial = run_cli("run --setups " + setups.string() + " --backend serial --jobs 4" +
                               " --serialmap " + (dir / "serialmap.json").string() + " --out " +
                               (dir / "results").string());
    CHECK(serial.exit_code == 2);
    CHECK(serial.out.find("not parallelizable") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("gen, run, report round trip end to end") {
    fs::path dir = fresh_dir("spim_cli_e2e");
    tiny_experiment(dir);
    fs::path setups = dir / "setups";
    fs::path results = dir / "results";

    CmdResult gen = run_cli("gen --experiment " + (dir / "experiment.json").string() + " --out " +
                            setups.string());
    REQUIRE(gen.exit_code == 0);
    // 2 configs x (1 coloring + none) = 4 interference, solo + solo_cc_2
    CHECK(gen.out.find("4 interference setups + 2 baselines") != std::string::npos);

    CmdResult run = run_cli("run --setups " + setups.string() + " --backend sim --out " +
                            results.string());
    REQUIRE(run.exit_code == 0);
    CHECK(run.out.find("complete:6") != std::string::npos);

    SUBCASE("a rerun performs zero executions") {
        CmdResult rerun = run_cli("run --setups " + setups.string() + " --backend sim --out " +
                                  results.string());
        CHECK(rerun.exit_code == 0);
        CHECK(rerun.out.find("skipped:6") != std::string::npos);
    }

    SUBCASE("report emits one csv row per setup and bench") {
        CmdResult rep = run_cli("report --results " + results.string() + " --format csv --out " +
                                (dir / "report.csv").string());
        REQUIRE(rep.exit_code == 0);
        CHECK(rep.out.find("worst slowdown bench:") != std::string::npos);
        std::string csv = read_all(dir / "report.csv");
        CHECK(std::count(csv.begin(), csv.end(), '\n') == 7); // header + 6 setups x 1 bench
    }

    SUBCASE("replay over the recorded logs matches the original records") {
        fs::path replayed = dir / "results_replay";
        CmdResult rep = run_cli("run --setups " + setups.string() + " --backend replay" +
                                " --replay-dir " + (results / "raw").string() + " --out " +
                                replayed.string());
        REQUIRE(rep.exit_code == 0);
        CHECK(rep.out.find("complete:6") != std::string::npos);
        for (int i = 0; i < 6; ++i) {
            std::string name = "run_" + std::to_string(i) + ".json";
            RunRecord a = run_record_from_json(read_all(results / name));
            RunRecord b = run_record_from_json(read_all(replayed / name));
            // wall-clock stamps, backend name and raw log paths differ by
            // construction; the payload must not
            CHECK(a.status == b.status);
            CHECK(a.setup_name == b.setup_name);
            CHECK(a.samples == b.samples);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("report on an empty results directory exits 2") {
    fs::path dir = fresh_dir("spim_cli_report_empty");
    fs::create_directories(dir / "results");
    CmdResult r = run_cli("report --results " + (dir / "results").string() +
                          " --format csv --out " + (dir / "report.csv").string());
    CHECK(r.exit_code == 2);
    fs::remove_all(dir);
}

TEST_CASE("solo-only results report a single 1.0 row per bench") {
    fs::path dir = fresh_dir("spim_cli_solo_only");
    fs::create_directories(dir);
    std::ofstream(dir / "platform.json") << read_all(kFixtures / "zcu104.json");
    std::ofstream(dir / "experiment.json") << R"({
  "platform": "platform.json",
  "guests": [
    {"name": "vm_linux", "kind": "victim_benchmark", "cpus": [0],
     "workload": {"bench_name": "bench", "working_set_bytes": 65536,
                  "total_accesses": 10000, "compute_cycles_per_access": 1,
                  "write_fraction": 0.2}}
  ],
  "coloring": {"enabled": false},
  "mbr": {"enabled": false, "budgets": [[]], "periods_us": [[]]},
  "repetitions": 2, "timeout_s": 30.0, "backend": "sim"
})";
    run_cli("gen --experiment " + (dir / "experiment.json").string() + " --out " +
            (dir / "setups").string());
    run_cli("run --setups " + (dir / "setups").string() + " --backend sim --out " +
            (dir / "results").string());
    CmdResult rep = run_cli("report --results " + (dir / "results").string() +
                            " --format csv --out " + (dir / "report.csv").string());
    REQUIRE(rep.exit_code == 0);
    std::string csv = read_all(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.find("solo,bench,solo,1.00,1.00,1.00,1.00,2") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("sim emits protocol lines for a single setup") {
    fs::path dir = fresh_dir("spim_cli_sim_one");
    tiny_experiment(dir);
    run_cli("gen --experiment " + (dir / "experiment.json").string() + " --out " +
            (dir / "setups").string());
    CmdResult r = run_cli("sim --setup " + (dir / "setups" / "setup_0.json").string() +
                          " --params " + (kFixtures / "simparams.json").string());
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("SPIM;v1;r0;vm_linux;bench;0;time_ms;") != std::string::npos);
    CHECK(r.out.find("SPIM;v1;r0;vm_linux;bench;END") != std::string::npos);
    fs::remove_all(dir);
}
