#include <doctest.h>

#include <random>

#include "spim/backend.hpp"
#include "spim/logmon.hpp"

using namespace spim;

TEST_CASE("metric lines parse per the grammar") {
    ParsedLine p = parse_line("SPIM;v1;r42;vm_linux;susanc-small;0;time_ms;4.37");
    REQUIRE(p.kind == ParsedLine::Kind::event);
    CHECK(p.event.run_id == "r42");
    CHECK(p.event.vm == "vm_linux");
    CHECK(p.event.bench == "susanc-small");
    CHECK(p.event.iteration == 0);
    CHECK(p.event.metric == Metric::time_ms);
    CHECK(p.event.value == doctest::Approx(4.37).epsilon(1e-12));

    CHECK(parse_line("booting kernel...").kind == ParsedLine::Kind::ignored);
    CHECK(parse_line("").kind == ParsedLine::Kind::ignored);
    CHECK(parse_line("[vm0] hello").kind == ParsedLine::Kind::ignored);

    ParsedLine bad = parse_line("SPIM;v1;r42;vm_linux;susanc-small;0;time_ms;fast");
    REQUIRE(bad.kind == ParsedLine::Kind::error);
    CHECK(bad.error.find("non-numeric value") != std::string::npos);

    ParsedLine end = parse_line("SPIM;v1;r42;vm_linux;susanc-small;END");
    REQUIRE(end.kind == ParsedLine::Kind::event);
    CHECK(end.event.is_end);
    CHECK(end.event.vm == "vm_linux");
}

TEST_CASE("malformed prefixed lines report the failure mode") {
    CHECK(parse_line("SPIM;v2;a;b;c;END").error.find("version") != std::string::npos);
    CHECK(parse_line("SPIM;v1;a;b;c;0;time_ms").error.find("field count") != std::string::npos);
    CHECK(parse_line("SPIM;v1;a;b;c;0;watts;1").error.find("unknown metric") != std::string::npos);
    CHECK(parse_line("SPIM;v1;a;b;c;x;time_ms;1").error.find("iteration") != std::string::npos);
    CHECK(parse_line("SPIM;v1;a;b;c;0;time_ms;-1").error.find("negative") != std::string::npos);
}

TEST_CASE("emission is canonical") {
    MetricEvent e;
    e.run_id = "r1";
    e.vm = "vm0";
    e.bench = "b";
    e.iteration = 2;
    e.metric = Metric::llc_miss;
    e.value = 1024;
    CHECK(emit_line(e) == "SPIM;v1;r1;vm0;b;2;llc_miss;1024");

    e.metric = Metric::time_ms;
    e.value = 9.83;
    CHECK(emit_line(e) == "SPIM;v1;r1;vm0;b;2;time_ms;9.83");
    e.value = 2.5;
    CHECK(emit_line(e) == "SPIM;v1;r1;vm0;b;2;time_ms;2.5");

    MetricEvent end;
    end.run_id = "r1";
    end.vm = "vm0";
    end.bench = "b";
    end.is_end = true;
    CHECK(emit_line(end) == "SPIM;v1;r1;vm0;b;END");
}

namespace {

MetricEvent random_event(std::mt19937_64& rng) {
    static const char* names[] = {"vm_linux", "vm0", "guest-a", "b2"};
    static const char* benches[] = {"susanc-small", "qsort", "b", "stream9"};
    MetricEvent e;
    e.run_id = "r" + std::to_string(rng() % 1000);
    e.vm = names[rng() % 4];
    e.bench = benches[rng() % 4];
    if (rng() % 8 == 0) {
        e.is_end = true;
        return e;
    }
    e.iteration = uint32_t(rng() % 100);
    switch (rng() % 5) {
    case 0: e.metric = Metric::time_ms; break;
    case 1: e.metric = Metric::llc_miss; break;
    case 2: e.metric = Metric::bus_cycles; break;
    case 3: e.metric = Metric::mem_access; break;
    default: e.metric = Metric::retired_ops; break;
    }
    // canonical values: the 1/1000 grid the protocol renders exactly
    e.value = double(rng() % 100000000) / 1000.0;
    return e;
}

} // namespace

TEST_CASE("parse is the inverse of emit for 10^4 random events") {
    std::mt19937_64 rng(4242);
    for (int i = 0; i < 10000; ++i) {
        MetricEvent e = random_event(rng);
        ParsedLine p = parse_line(emit_line(e));
        REQUIRE(p.kind == ParsedLine::Kind::event);
        CHECK(p.event == e);
    }
}

TEST_CASE("corrupt lines never crash parsing") {
    std::mt19937_64 rng(777);
    const std::string seed_line = "SPIM;v1;r1;vm0;bench;3;llc_miss;1024";
    for (int i = 0; i < 1000; ++i) {
        std::string line = seed_line;
        int mutations = 1 + int(rng() % 4);
        for (int m = 0; m < mutations; ++m) {
            size_t pos = rng() % line.size();
            switch (rng() % 3) {
            case 0: line[pos] = char(rng() % 256); break;
            case 1: line.erase(pos, 1 + rng() % 3); break;
            default: line.insert(pos, 1, char('!' + rng() % 90)); break;
            }
            if (line.empty())
                line = ";";
        }
        ParsedLine p = parse_line(line); // must classify, never throw
        CHECK((p.kind == ParsedLine::Kind::event || p.kind == ParsedLine::Kind::ignored ||
               p.kind == ParsedLine::Kind::error));
    }
}

namespace {

std::shared_ptr<BufferChannel> channel_of(std::vector<std::string> lines) {
    return std::make_shared<BufferChannel>(std::move(lines));
}

} // namespace

TEST_CASE("collect groups interleaved channels into samples") {
    std::vector<NamedChannel> channels;
    channels.push_back({"vm0", channel_of({
                                   "noise to ignore",
                                   "SPIM;v1;r1;vm0;b0;0;time_ms;1.5",
                                   "SPIM;v1;r1;vm0;b0;0;llc_miss;10",
                                   "SPIM;v1;r1;vm0;b0;END",
                               })});
    channels.push_back({"vm1", channel_of({
                                   "SPIM;v1;r1;vm1;b1;0;time_ms;2.25",
                                   "SPIM;v1;r1;vm1;b1;0;llc_miss;20",
                                   "SPIM;v1;r1;vm1;b1;END",
                               })});
    std::set<StreamKey> expected = {{"vm0", "b0"}, {"vm1", "b1"}};
    CollectResult r = collect(channels, expected, std::chrono::milliseconds(2000));
    CHECK_FALSE(r.timed_out);
    REQUIRE(r.samples.size() == 2);
    CHECK(r.samples[0].vm == "vm0");
    CHECK(r.samples[0].time_ms == 1.5);
    CHECK(r.samples[0].llc_miss == 10);
    CHECK(r.samples[1].vm == "vm1");
    CHECK(r.parse_errors.empty());
}

TEST_CASE("a channel closing before END flags a timeout") {
    std::vector<NamedChannel> channels;
    channels.push_back({"vm0", channel_of({"SPIM;v1;r1;vm0;b0;0;time_ms;1.5"})});
    std::set<StreamKey> expected = {{"vm0", "b0"}};
    CollectResult r = collect(channels, expected, std::chrono::milliseconds(500));
    CHECK(r.timed_out);
    REQUIRE(r.samples.size() == 1); // partial sample still grouped
    CHECK(r.samples[0].time_ms == 1.5);
}

TEST_CASE("duplicate metrics keep the last value and record a warning") {
    std::vector<NamedChannel> channels;
    channels.push_back({"vm0", channel_of({
                                   "SPIM;v1;r1;vm0;b0;0;llc_miss;10",
                                   "SPIM;v1;r1;vm0;b0;0;llc_miss;30",
                                   "SPIM;v1;r1;vm0;b0;END",
                               })});
    CollectResult r = collect(channels, {{"vm0", "b0"}}, std::chrono::milliseconds(2000));
    REQUIRE(r.samples.size() == 1);
    CHECK(r.samples[0].llc_miss == 30);
    REQUIRE(r.warnings.size() == 1);
    CHECK(r.warnings[0].find("duplicate metric llc_miss") != std::string::npos);
}

TEST_CASE("events after END are reported as leftovers") {
    std::vector<NamedChannel> channels;
    channels.push_back({"vm0", channel_of({
                                   "SPIM;v1;r1;vm0;b0;0;llc_miss;10",
                                   "SPIM;v1;r1;vm0;b0;END",
                                   "SPIM;v1;r1;vm0;b0;1;llc_miss;99",
                               })});
    CollectResult r = collect(channels, {{"vm0", "b0"}}, std::chrono::milliseconds(2000));
    REQUIRE(r.samples.size() == 1);
    CHECK(r.samples[0].llc_miss == 10);
    REQUIRE(r.leftovers.size() == 1);
    CHECK(r.leftovers[0].value == 99);
}

TEST_CASE("grouping is independent of the channel interleaving") {
    std::vector<std::string> all = {
        "SPIM;v1;r1;vmA;b;0;time_ms;1.5",  "SPIM;v1;r1;vmA;b;0;llc_miss;10",
        "SPIM;v1;r1;vmA;b;1;time_ms;1.75", "SPIM;v1;r1;vmA;b;1;llc_miss;12",
        "SPIM;v1;r1;vmA;b;END",
    };
    // same event stream split across two runs with different chunking of a
    // second noisy channel
    auto run = [&](std::vector<std::string> noise) {
        std::vector<NamedChannel> channels;
        channels.push_back({"vmA", channel_of(all)});
        channels.push_back({"vmB", channel_of(std::move(noise))});
        return collect(channels, {{"vmA", "b"}}, std::chrono::milliseconds(2000));
    };
    CollectResult r1 = run({"noise1", "noise2"});
    CollectResult r2 = run({});
    REQUIRE(r1.samples.size() == r2.samples.size());
    for (size_t i = 0; i < r1.samples.size(); ++i)
        CHECK(r1.samples[i] == r2.samples[i]);
}

TEST_CASE("ignoring is total: junk channels never abort collection") {
    std::vector<std::string> junk;
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        std::string s;
        for (int j = 0; j < int(rng() % 40); ++j)
            s += char(32 + rng() % 90);
        junk.push_back(s);
    }
    junk.push_back("SPIM;v1;r;vm;b;END");
    std::vector<NamedChannel> channels;
    channels.push_back({"vm", channel_of(junk)});
    CollectResult r = collect(channels, {{"vm", "b"}}, std::chrono::milliseconds(2000));
    CHECK_FALSE(r.timed_out);
}
