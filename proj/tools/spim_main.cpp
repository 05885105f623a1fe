#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "spim/backend.hpp"
#include "spim/config.hpp"
#include "spim/genspace.hpp"
#include "spim/orchestrator.hpp"
#include "spim/report.hpp"
#include "spim/sim.hpp"

namespace fs = std::filesystem;
using namespace spim;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitPartial = 1;

PlatformSpec resolve_platform(const std::string& platform_flag, const std::string& experiment_path) {
    if (!platform_flag.empty())
        return load_platform(platform_flag);
    // fall back to the experiment's own platform reference
    std::ifstream in(experiment_path);
    if (!in)
        throw ConfigError(experiment_path, "cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    auto doc = nlohmann::json::parse(buf.str(), nullptr, false);
    if (doc.is_discarded() || !doc.contains("platform"))
        throw ConfigError(experiment_path, "no usable platform reference; pass --platform");
    fs::path ref = doc.at("platform").get<std::string>();
    if (ref.is_relative())
        ref = fs::path(experiment_path).parent_path() / ref;
    return load_platform(ref);
}

int cmd_gen(const std::string& experiment, const std::string& platform, const std::string& out,
            bool force) {
    PlatformSpec plat = resolve_platform(platform, experiment);
    ExperimentSpec exp = load_experiment(experiment, plat);
    Manifest manifest = enumerate_setups(exp, plat);
    write_manifest(manifest, out, force);
    std::cout << manifest.counts.interference_setups << " interference setups + "
              << manifest.counts.baseline_setups << " baselines\n";
    std::cout << "wrote " << manifest.counts.total_setups << " setup descriptors to " << out
              << "\n";
    return 0;
}

int cmd_validate(const std::string& experiment, const std::string& platform) {
    PlatformSpec plat = resolve_platform(platform, experiment);
    ExperimentSpec exp = load_experiment(experiment, plat);
    std::cout << "ok: platform '" << plat.name << "' (" << plat.cpu_count << " CPUs, "
              << plat.color_count << " colors), " << exp.guests.size() << " guests\n";
    return 0;
}

int cmd_run(const std::string& setups_dir, const std::string& backend_name, const std::string& out,
            unsigned jobs, bool force, const std::string& params_file,
            const std::string& replay_dir, const std::string& serialmap) {
    Manifest manifest = load_manifest(setups_dir);
    SimParams params = params_file.empty() ? SimParams{} : load_sim_params(params_file);

    if (backend_name == "replay" && replay_dir.empty()) {
        std::cerr << "error: --backend replay requires --replay-dir\n";
        return kExitUsage;
    }
    if (backend_name == "serial" && serialmap.empty()) {
        std::cerr << "error: --backend serial requires --serialmap\n";
        return kExitUsage;
    }

    BackendFactory factory = [&]() {
        return make_backend(backend_name, manifest.platform, params, replay_dir, serialmap);
    };
    if (jobs > 1 && !factory()->capabilities().deterministic) {
        std::cerr << "error: backend is not parallelizable\n";
        return kExitUsage;
    }

    SweepOptions opts;
    opts.jobs = jobs;
    opts.force = force;
    SweepSummary summary = run_sweep(manifest, factory, out, opts);
    std::cout << "complete:" << summary.complete << " timeout:" << summary.timeout
              << " parse_error:" << summary.parse_error << " failed:" << summary.failed
              << " skipped:" << summary.skipped << " (total " << summary.total << ")\n";
    for (const auto& e : summary.errors)
        std::cerr << "error: " << e << "\n";
    return summary.all_complete() ? 0 : kExitPartial;
}

int cmd_sim(const std::string& setup_file, const std::string& platform_file,
            const std::string& params_file, unsigned repetitions, const std::string& out) {
    std::ifstream in(setup_file);
    if (!in)
        throw ConfigError(setup_file, "cannot open file");
    std::ostringstream buf;
    buf << in.rdbuf();
    auto [setup, plat] = setup_from_json(buf.str());
    if (!platform_file.empty())
        plat = load_platform(platform_file);
    SimParams params = params_file.empty() ? SimParams{} : load_sim_params(params_file);
    if (repetitions > 0)
        setup.repetitions = repetitions;

    SimBackend backend(plat, params);
    auto channels = backend.start(setup);

    std::map<std::string, std::ofstream> files;
    if (!out.empty()) {
        fs::create_directories(fs::path(out) / setup.name);
        for (const auto& ch : channels)
            files[ch.vm].open(fs::path(out) / setup.name / (ch.vm + ".log"));
    }
    for (const auto& ch : channels) {
        while (auto line = ch.channel->next_line(std::chrono::milliseconds(0))) {
            if (out.empty())
                std::cout << *line << "\n";
            else
                files[ch.vm] << *line << "\n";
        }
    }
    return 0;
}

int cmd_report(const std::string& results, const std::string& format, const std::string& out) {
    auto records = load_records(results);
    if (records.empty()) {
        std::cerr << "error: no run records in " << results << "\n";
        return kExitUsage;
    }
    StatsTable stats = aggregate(records);
    std::vector<SlowdownRow> rows;
    try {
        rows = build_rows(stats);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    ReportFormat fmt = format == "json"       ? ReportFormat::json
                       : format == "plotdata" ? ReportFormat::plotdata
                                              : ReportFormat::csv;
    export_report(rows, stats, fmt, out);

    std::map<std::string, const SlowdownRow*> worst;
    for (const auto& r : rows) {
        auto& slot = worst[r.bench];
        if (!slot || r.slowdown > slot->slowdown)
            slot = &r;
    }
    for (const auto& [bench, row] : worst) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f", row->slowdown);
        std::cout << "worst slowdown " << bench << ": " << buf << "x (" << row->setup << ")\n";
    }
    std::cout << "wrote " << format << " report to " << out << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"enumerate, execute and report interference-analysis experiment sweeps"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen", "enumerate the experiment space into setup descriptors");
    std::string gen_exp, gen_plat, gen_out;
    bool gen_force = false;
    gen->add_option("--experiment", gen_exp, "experiment config (json)")->required();
    gen->add_option("--platform", gen_plat, "platform config (json)");
    gen->add_option("--out", gen_out, "output directory for manifest + setups")->required();
    gen->add_flag("--force", gen_force, "overwrite a differing manifest");

    auto* validate = app.add_subcommand("validate", "check configs without generating anything");
    std::string val_exp, val_plat;
    validate->add_option("--experiment", val_exp, "experiment config (json)")->required();
    validate->add_option("--platform", val_plat, "platform config (json)");

    auto* run = app.add_subcommand("run", "execute a generated sweep against a backend");
    std::string run_setups, run_backend, run_out, run_params, run_replay, run_serialmap;
    unsigned run_jobs = 1;
    bool run_force = false;
    run->add_option("--setups", run_setups, "directory containing manifest.json")->required();
    run->add_option("--backend", run_backend, "sim | replay | serial")->required();
    run->add_option("--out", run_out, "results directory")->required();
    run->add_option("--jobs", run_jobs, "parallel workers (deterministic backends only)");
    run->add_option("--params", run_params, "simparams.json for the sim backend");
    run->add_option("--replay-dir", run_replay, "raw log directory for the replay backend");
    run->add_option("--serialmap", run_serialmap, "vm -> device map for the serial backend");
    run->add_flag("--force", run_force, "rerun setups with existing complete records");

    auto* sim = app.add_subcommand("sim", "simulate one setup and emit its metric lines");
    std::string sim_setup, sim_plat, sim_params, sim_out;
    unsigned sim_reps = 0;
    sim->add_option("--setup", sim_setup, "setup descriptor (setup_<id>.json)")->required();
    sim->add_option("--platform", sim_plat, "override the embedded platform");
    sim->add_option("--params", sim_params, "simparams.json");
    sim->add_option("--repetitions", sim_reps, "override the setup's repetition count");
    sim->add_option("--out", sim_out, "write per-VM logs under <out>/<setup>/ instead of stdout");

    auto* report = app.add_subcommand("report", "aggregate run records into slowdown reports");
    std::string rep_results, rep_format = "csv", rep_out;
    report->add_option("--results", rep_results, "results directory from a run")->required();
    report->add_option("--format", rep_format, "csv | json | plotdata")
        ->check(CLI::IsMember({"csv", "json", "plotdata"}));
    report->add_option("--out", rep_out, "output file (csv/json) or directory (plotdata)")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (gen->parsed())
            return cmd_gen(gen_exp, gen_plat, gen_out, gen_force);
        if (validate->parsed())
            return cmd_validate(val_exp, val_plat);
        if (run->parsed())
            return cmd_run(run_setups, run_backend, run_out, run_jobs, run_force, run_params,
                           run_replay, run_serialmap);
        if (sim->parsed())
            return cmd_sim(sim_setup, sim_plat, sim_params, sim_reps, sim_out);
        if (report->parsed())
            return cmd_report(rep_results, rep_format, rep_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return 0;
}
