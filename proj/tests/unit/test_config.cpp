#include <doctest.h>

#include <filesystem>

#include "spim/config.hpp"

using namespace spim;

namespace {
const std::filesystem::path kFixtures = SPIM_FIXTURES_DIR;
}

TEST_CASE("zcu104 platform fixture derives the L2 geometry") {
    PlatformSpec p = load_platform(kFixtures / "zcu104.json");
    CHECK(p.name == "zcu104");
    CHECK(p.cpu_count == 4);
    CHECK(p.clock_hz == 1200000000ull);
    CHECK(p.l2.sets == 1024); // 1048576 / (16 * 64)
    CHECK(p.l1.sets == 64);
    CHECK(p.color_count == 8);
    CHECK(p.max_colors() == 16);
}

TEST_CASE("minimal platform document is accepted") {
    const char* doc = R"({
        "name": "mini", "cpu_count": 1, "clock_hz": 1000000,
        "line_bytes": 64, "page_bytes": 4096,
        "l1": {"size_bytes": 4096, "ways": 1},
        "l2": {"size_bytes": 4096, "ways": 1},
        "color_count": 1
    })";
    PlatformSpec p = parse_platform(doc);
    CHECK(p.l2.sets == 64);
    CHECK(p.color_count == 1);
}

TEST_CASE("bad cache geometry names the invariant and the field") {
    const char* doc = R"({
        "name": "bad", "cpu_count": 1, "clock_hz": 1000000,
        "line_bytes": 64, "page_bytes": 4096,
        "l1": {"size_bytes": 4096, "ways": 1},
        "l2": {"size_bytes": 100000, "ways": 16},
        "color_count": 1
    })";
    try {
        parse_platform(doc);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("l2.size_bytes") != std::string::npos);
        CHECK(std::string(e.what()).find("ways * sets * line_bytes") != std::string::npos);
    }
}

TEST_CASE("missing fields report their path") {
    CHECK_THROWS_WITH_AS(parse_platform(R"({"name": "x"})"),
                         doctest::Contains("cpu_count"), ConfigError);
    const char* no_clock = R"({
        "name": "x", "cpu_count": 1,
        "line_bytes": 64, "page_bytes": 4096,
        "l1": {"size_bytes": 4096, "ways": 1},
        "l2": {"size_bytes": 4096, "ways": 1},
        "color_count": 1
    })";
    CHECK_THROWS_WITH_AS(parse_platform(no_clock), doctest::Contains("clock_hz"), ConfigError);
}

TEST_CASE("color count above the hardware maximum is rejected") {
    const char* doc = R"({
        "name": "x", "cpu_count": 1, "clock_hz": 1000000,
        "line_bytes": 64, "page_bytes": 4096,
        "l1": {"size_bytes": 4096, "ways": 1},
        "l2": {"size_bytes": 1048576, "ways": 16},
        "color_count": 17
    })";
    CHECK_THROWS_WITH_AS(parse_platform(doc), doctest::Contains("color_count"), ConfigError);
}

TEST_CASE("paper-reproduction experiment fixture validates") {
    PlatformSpec plat = load_platform(kFixtures / "zcu104.json");
    ExperimentSpec exp = load_experiment(kFixtures / "paper_repro.json", plat);
    REQUIRE(exp.guests.size() == 2);
    CHECK(exp.guests[0].kind == GuestKind::victim_benchmark);
    CHECK(exp.guests[0].cpus == std::vector<uint32_t>{0});
    CHECK(exp.guests[1].kind == GuestKind::contention_engine);
    CHECK(exp.guests[1].cpus == std::vector<uint32_t>{1, 2, 3});
    CHECK(exp.guests[1].sweep->workload_sizes.size() == 6);
    CHECK(exp.coloring.enabled);
    CHECK(exp.coloring.min_colors_per_vm == std::vector<uint32_t>{2, 1});
    CHECK_FALSE(exp.mbr.enabled);
    CHECK(exp.repetitions == 3);
}

namespace {

std::string experiment_doc(const std::string& guests, const std::string& coloring) {
    return R"({
        "platform": "p.json",
        "guests": [)" + guests + R"(],
        "coloring": )" + coloring + R"(,
        "mbr": {"enabled": false, "budgets": [], "periods_us": []},
        "repetitions": 1, "timeout_s": 10.0, "backend": "sim"
    })";
}

const char* kVictim0 = R"({"name": "v", "kind": "victim_benchmark", "cpus": [0],
    "workload": {"bench_name": "b", "working_set_bytes": 4096, "total_accesses": 10,
                 "compute_cycles_per_access": 0, "write_fraction": 0.0}})";

PlatformSpec mini_platform() {
    return parse_platform(R"({
        "name": "mini", "cpu_count": 4, "clock_hz": 1000000,
        "line_bytes": 64, "page_bytes": 4096,
        "l1": {"size_bytes": 4096, "ways": 1},
        "l2": {"size_bytes": 524288, "ways": 8},
        "color_count": 8
    })");
}

} // namespace

TEST_CASE("overlapping CPU assignments are rejected") {
    std::string guests = std::string(kVictim0) + "," +
                         R"({"name": "e", "kind": "contention_engine", "cpus": [0, 1],
            "workload": {"cpu_configs": [1], "line_strides": [64],
                         "workload_sizes": [64], "op_types": ["read"]}})";
    std::string doc = experiment_doc(guests, R"({"enabled": false})");
    CHECK_THROWS_WITH_AS(parse_experiment(doc, mini_platform()),
                         doctest::Contains("overlapping CPU assignment"), ConfigError);
}

TEST_CASE("infeasible color minimums are rejected") {
    std::string guests = std::string(kVictim0) + "," +
                         R"({"name": "e", "kind": "contention_engine", "cpus": [1],
            "workload": {"cpu_configs": [1], "line_strides": [64],
                         "workload_sizes": [64], "op_types": ["read"]}})";
    std::string doc =
        experiment_doc(guests, R"({"enabled": true, "min_colors_per_vm": [5, 4]})");
    CHECK_THROWS_WITH_AS(parse_experiment(doc, mini_platform()),
                         doctest::Contains("infeasible color minimums"), ConfigError);
}

TEST_CASE("unknown backend is rejected") {
    std::string doc = experiment_doc(kVictim0, R"({"enabled": false})");
    auto pos = doc.find("\"sim\"");
    doc.replace(pos, 5, "\"board\"");
    CHECK_THROWS_WITH_AS(parse_experiment(doc, mini_platform()),
                         doctest::Contains("unknown backend"), ConfigError);
}

TEST_CASE("CPU indices out of range are rejected") {
    std::string doc = experiment_doc(
        R"({"name": "v", "kind": "victim_benchmark", "cpus": [9],
            "workload": {"bench_name": "b", "working_set_bytes": 4096, "total_accesses": 10,
                         "compute_cycles_per_access": 0, "write_fraction": 0.0}})",
        R"({"enabled": false})");
    CHECK_THROWS_WITH_AS(parse_experiment(doc, mini_platform()),
                         doctest::Contains("out of range"), ConfigError);
}

TEST_CASE("engine CPU options may not exceed the assigned CPUs") {
    std::string guests = std::string(kVictim0) + "," +
                         R"({"name": "e", "kind": "contention_engine", "cpus": [1, 2],
            "workload": {"cpu_configs": [3], "line_strides": [64],
                         "workload_sizes": [64], "op_types": ["read"]}})";
    std::string doc = experiment_doc(guests, R"({"enabled": false})");
    CHECK_THROWS_WITH_AS(parse_experiment(doc, mini_platform()),
                         doctest::Contains("cpu_configs"), ConfigError);
}

TEST_CASE("buffer sizes below the largest stride are rejected") {
    std::string guests = std::string(kVictim0) + "," +
                         R"({"name": "e", "kind": "contention_engine", "cpus": [1],
            "workload": {"cpu_configs": [1], "line_strides": [128],
                         "workload_sizes": [64], "op_types": ["read"]}})";
    std::string doc = experiment_doc(guests, R"({"enabled": false})");
    CHECK_THROWS_WITH_AS(parse_experiment(doc, mini_platform()),
                         doctest::Contains("workload_sizes"), ConfigError);
}

TEST_CASE("platform round-trips through emit and parse") {
    PlatformSpec p = load_platform(kFixtures / "zcu104.json");
    CHECK(parse_platform(emit_platform(p)) == p);
}

TEST_CASE("experiment round-trips through emit and parse") {
    PlatformSpec plat = load_platform(kFixtures / "zcu104.json");
    ExperimentSpec exp = load_experiment(kFixtures / "paper_repro.json", plat);
    ExperimentSpec again = parse_experiment(emit_experiment(exp), plat);
    CHECK(again == exp);
}

TEST_CASE("validation verdict is independent of guest order") {
    std::string engine = R"({"name": "e", "kind": "contention_engine", "cpus": [1],
        "workload": {"cpu_configs": [1], "line_strides": [64],
                     "workload_sizes": [64], "op_types": ["read"]}})";
    std::string fwd = experiment_doc(std::string(kVictim0) + "," + engine,
                                     R"({"enabled": true, "min_colors_per_vm": [2, 1]})");
    std::string rev = experiment_doc(engine + "," + kVictim0,
                                     R"({"enabled": true, "min_colors_per_vm": [1, 2]})");
    CHECK_NOTHROW(parse_experiment(fwd, mini_platform()));
    CHECK_NOTHROW(parse_experiment(rev, mini_platform()));

    // an invalid document stays invalid in either order
    std::string clash = R"({"name": "e", "kind": "contention_engine", "cpus": [0],
        "workload": {"cpu_configs": [1], "line_strides": [64],
                     "workload_sizes": [64], "op_types": ["read"]}})";
    CHECK_THROWS_AS(parse_experiment(experiment_doc(std::string(kVictim0) + "," + clash,
                                                    R"({"enabled": false})"),
                                     mini_platform()),
                    ConfigError);
    CHECK_THROWS_AS(parse_experiment(experiment_doc(clash + "," + kVictim0,
                                                    R"({"enabled": false})"),
                                     mini_platform()),
                    ConfigError);
}
