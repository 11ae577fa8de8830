// platoon: run, compare and check bundled or user scenarios.

#include <cstdlib>
#include <filesystem>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "platoon/acceptance.hpp"
#include "platoon/csv_log.hpp"
#include "platoon/report.hpp"
#include "platoon/scenario.hpp"
#include "platoon/sim_engine.hpp"
#include "platoon/svg_plot.hpp"

namespace fs = std::filesystem;
using namespace platoon;

namespace {

enum Exit { kOk = 0, kAborted = 1, kBadInput = 2, kIoFailure = 3, kCheckFailed = 4 };

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("platoon");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::info);
    const char* env = std::getenv("PLATOON_LOG_LEVEL");
    if (!env) return;
    const std::string level = env;
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring PLATOON_LOG_LEVEL={}, expected error, info or debug", level);
}

/// A path to a scenario file, or the name of a bundled one.
fs::path resolve_scenario(const std::string& arg) {
    if (fs::exists(arg)) return arg;
    const fs::path bundled = fs::path(PLATOON_SCENARIO_DIR) / (arg + ".cfg");
    if (fs::exists(bundled)) return bundled;
    throw Error(ErrorKind::IoError, fmt::format("no scenario file or bundled scenario named '{}'", arg));
}

PlatoonConfig load(const std::string& arg) {
    const fs::path path = resolve_scenario(arg);
    PlatoonConfig cfg = load_scenario(path);
    spdlog::info("loaded {} from {}", cfg.name, path.string());
    spdlog::info("{} vehicles, {} lane(s), {} merge(s); mode {}, hold {}, duration {} s", cfg.vehicles.size(),
                 cfg.lanes.size(), cfg.merges.size(), to_string(cfg.mode), to_string(cfg.hold), cfg.duration);
    spdlog::info("dt_control {} s, dt_sim {} s, eps1 {}, k_constraint {}, e_star {} m, v_star {} m/s, eps {} m",
                 cfg.dt_control, cfg.dt_sim, cfg.eps1, cfg.gains.k_constraint, cfg.e_star, cfg.v_star, cfg.eps);
    spdlog::info("gains k1 {} k2 {} k3 {} k4 {} k5 {} k6 {}", cfg.gains.k1, cfg.gains.k2, cfg.gains.k3,
                 cfg.gains.k4, cfg.gains.k5, cfg.gains.k6);
    return cfg;
}

struct Outcome {
    SimLog log;
    std::optional<std::string> abort;
};

Outcome simulate(const PlatoonConfig& cfg) {
    try {
        return {run_simulation(cfg), std::nullopt};
    } catch (const SimulationAborted& e) {
        return {e.log(), fmt::format("{}: {}", to_string(e.kind()), e.what())};
    }
}

void log_events(const SimLog& log) {
    const std::string_view mode = to_string(log.config.mode);
    for (const MergeRecord& m : log.summary.merges) {
        spdlog::debug("{}: t = {} s: vehicle {} merged onto {} behind vehicle {}", mode, m.t, m.vehicle + 1,
                      log.config.lanes[m.lane].id, m.ahead + 1);
    }
    for (const BreachEvent& b : log.summary.breaches) {
        spdlog::debug("{}: t = {} s: vehicle {} breach {} = {}", mode, b.t, b.vehicle + 1, b.which, b.value);
    }
    spdlog::info("{}: {} ticks, {} breach event(s)", mode, log.records.size(), log.summary.breaches.size());
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, fmt::format("cannot create {}: {}", dir.string(), ec.message()));
}

void write_plots(const fs::path& stem, const std::vector<svg::Trace>& traces) {
    const std::pair<const char*, svg::Figure> figures[] = {
        {"errors", svg::errors_figure(traces)},
        {"safety", svg::safety_figure(traces)},
        {"inputs", svg::inputs_figure(traces)},
        {"trajectory", svg::trajectory_figure(traces)},
    };
    for (const auto& [what, fig] : figures) {
        const fs::path path = stem.string() + "_" + what + ".svg";
        svg::write(path, fig);
        spdlog::info("wrote {}", path.string());
    }
}

void print_abort(const Outcome& out) {
    const SimLog& log = out.log;
    std::cerr << fmt::format("aborted: {}\n", *out.abort);
    if (log.records.empty()) return;
    const StepRecord& last = log.records.back();
    std::cerr << kCsvHeader << '\n';
    for (std::size_t i = 0; i < last.vehicles.size(); ++i) std::cerr << csv_row(last.t, i + 1, last.vehicles[i]) << '\n';
}

int cmd_run(const std::string& scenario, const std::optional<std::string>& mode, const fs::path& out_dir) {
    PlatoonConfig cfg = load(scenario);
    if (mode) cfg.mode = *mode == "baseline" ? ControllerMode::Baseline : ControllerMode::Safe;
    ensure_dir(out_dir);
    const Outcome out = simulate(cfg);
    log_events(out.log);

    const fs::path stem = out_dir / fmt::format("{}_{}", cfg.name, to_string(cfg.mode));
    write_csv(stem.string() + ".csv", out.log);
    spdlog::info("wrote {}.csv", stem.string());
    write_plots(stem, {{&out.log, std::string(to_string(cfg.mode))}});

    std::cout << summary_table({{std::string(to_string(cfg.mode)), &out.log, out.abort.has_value()}});
    if (out.abort) {
        print_abort(out);
        return kAborted;
    }
    return kOk;
}

int cmd_compare(const std::string& scenario, const fs::path& out_dir) {
    PlatoonConfig safe_cfg = load(scenario);
    safe_cfg.mode = ControllerMode::Safe;
    PlatoonConfig base_cfg = safe_cfg;
    base_cfg.mode = ControllerMode::Baseline;
    ensure_dir(out_dir);

    auto pending = std::async(std::launch::async, simulate, base_cfg);
    const Outcome safe = simulate(safe_cfg);
    const Outcome base = pending.get();
    log_events(safe.log);
    log_events(base.log);

    for (const Outcome* o : {&safe, &base}) {
        const fs::path path = out_dir / fmt::format("{}_{}.csv", safe_cfg.name, to_string(o->log.config.mode));
        write_csv(path, o->log);
        spdlog::info("wrote {}", path.string());
    }
    write_plots(out_dir / fmt::format("{}_compare", safe_cfg.name),
                {{&safe.log, "safe"}, {&base.log, "baseline"}});

    std::cout << summary_table({{"safe", &safe.log, safe.abort.has_value()},
                                {"baseline", &base.log, base.abort.has_value()}});
    for (const Outcome* o : {&safe, &base}) {
        if (o->abort) {
            print_abort(*o);
            return kAborted;
        }
    }
    return kOk;
}

int cmd_check(bool list_only) {
    const auto criteria = acceptance::criteria();
    if (list_only) {
        for (const auto& c : criteria) std::cout << fmt::format("{} {}\n", c.id, c.name);
        return kOk;
    }
    acceptance::Runs runs(PLATOON_SCENARIO_DIR);
    bool all = true;
    for (const auto& c : criteria) {
        acceptance::Outcome o;
        try {
            o = c.run(runs);
        } catch (const std::exception& e) {
            o = {false, fmt::format("error: {}", e.what())};
        }
        all = all && o.pass;
        std::cout << acceptance::report_line(c, o) << std::endl;
    }
    return all ? kOk : kCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Safe platoon controller simulator"};
    app.require_subcommand(1);

    std::string scenario;
    std::optional<std::string> mode;
    std::string out_dir = "out";
    auto* run = app.add_subcommand("run", "simulate one scenario and write CSV and SVG plots");
    run->add_option("scenario", scenario, "scenario file or bundled scenario name")->required();
    run->add_option("--mode", mode, "controller mode, overriding the scenario file")
        ->check(CLI::IsMember({"safe", "baseline"}));
    run->add_option("--out", out_dir, "output directory")->capture_default_str();

    auto* compare = app.add_subcommand("compare", "run safe and baseline modes side by side");
    compare->add_option("scenario", scenario, "scenario file or bundled scenario name")->required();
    compare->add_option("--out", out_dir, "output directory")->capture_default_str();

    bool list_only = false;
    auto* check = app.add_subcommand("check", "run the acceptance suite");
    check->add_flag("--list", list_only, "list criteria without running them");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kBadInput;
    }

    try {
        if (*run) return cmd_run(scenario, mode, out_dir);
        if (*compare) return cmd_compare(scenario, out_dir);
        return cmd_check(list_only);
    } catch (const Error& e) {
        spdlog::error("{}: {}", to_string(e.kind()), e.what());
        return e.kind() == ErrorKind::IoError ? kIoFailure : kBadInput;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kIoFailure;
    }
}
