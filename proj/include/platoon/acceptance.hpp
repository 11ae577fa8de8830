#pragma once

// Acceptance suite shared by `platoon check` and the acceptance test binary.
// Each criterion returns PASS/FAIL with a one-line explanation.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "platoon/controllers.hpp"
#include "platoon/csv_log.hpp"
#include "platoon/frenet_bridge.hpp"
#include "platoon/path_geometry.hpp"
#include "platoon/scenario.hpp"
#include "platoon/sim_engine.hpp"
#include "platoon/vehicle_model.hpp"

namespace platoon::acceptance {

struct Outcome {
    bool pass = false;
    std::string detail;
};

/// One finished (or aborted) simulation.
struct RunResult {
    PlatoonConfig config;
    SimLog log;
    std::optional<std::string> abort;  // what() of the abort, if any
    double seconds = 0.0;
};

inline RunResult run_timed(const PlatoonConfig& config) {
    RunResult out{config, {}, std::nullopt, 0.0};
    const auto t0 = std::chrono::steady_clock::now();
    try {
        out.log = run_simulation(config);
    } catch (const SimulationAborted& e) {
        out.log = e.log();
        out.abort = e.what();
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

/// Loads bundled scenarios and memoizes their runs per mode.
class Runs {
public:
    explicit Runs(std::filesystem::path scenario_dir) : dir_(std::move(scenario_dir)) {}

    PlatoonConfig config(const std::string& name, ControllerMode mode) const {
        PlatoonConfig cfg = load_scenario(dir_ / (name + ".cfg"));
        cfg.mode = mode;
        return cfg;
    }

    const RunResult& get(const std::string& name, ControllerMode mode) {
        const auto key = std::make_pair(name, mode);
        auto it = cache_.find(key);
        if (it == cache_.end()) it = cache_.emplace(key, run_timed(config(name, mode))).first;
        return it->second;
    }

private:
    std::filesystem::path dir_;
    std::map<std::pair<std::string, ControllerMode>, RunResult> cache_;
};

/// Safety-invariance verdict for one safe-mode run.
inline Outcome safety_verdict(const std::string& name, const RunResult& r) {
    if (r.abort) return {false, fmt::format("{} aborted: {}", name, *r.abort)};
    double min_rho = std::numeric_limits<double>::infinity();
    double min_eta = std::numeric_limits<double>::infinity();
    double max_theta = 0.0;
    for (const VehicleSummary& v : r.log.summary.vehicles) {
        if (v.min_d_rho) min_rho = std::min(min_rho, *v.min_d_rho);
        min_eta = std::min(min_eta, v.min_d_eta());
        max_theta = std::max(max_theta, v.max_abs_theta_tilde);
    }
    const bool ok = min_rho > 0.0 && min_eta > 0.0 && max_theta < std::numbers::pi / 2.0 &&
                    r.log.summary.breaches.empty() && r.seconds < 10.0;
    return {ok, fmt::format("{}: min d_rho {:.3g}, min d_eta {:.3g}, max |theta~| {:.3g}, {:.2f} s", name,
                            min_rho, min_eta, max_theta, r.seconds)};
}

namespace detail {

inline Outcome combine(const std::vector<Outcome>& parts) {
    Outcome out{true, {}};
    for (const Outcome& p : parts) {
        out.pass = out.pass && p.pass;
        if (!out.detail.empty()) out.detail += "; ";
        out.detail += p.detail;
    }
    return out;
}

inline std::set<std::size_t> breaching(const SimLog& log, bool longitudinal) {
    std::set<std::size_t> out;
    for (const BreachEvent& b : log.summary.breaches) {
        if ((b.which == "d_rho") == longitudinal) out.insert(b.vehicle + 1);
    }
    return out;
}

inline std::string list(const std::set<std::size_t>& ids) {
    if (ids.empty()) return "none";
    std::string out;
    for (std::size_t id : ids) out += (out.empty() ? "" : ",") + std::to_string(id);
    return out;
}

inline bool within(double value, double expected, double tol) { return std::abs(value - expected) <= tol; }

}  // namespace detail

inline Outcome safety_invariance(Runs& runs) {
    std::vector<Outcome> parts;
    for (const char* name : {"scenario_A", "scenario_B", "scenario_C"})
        parts.push_back(safety_verdict(name, runs.get(name, ControllerMode::Safe)));
    return detail::combine(parts);
}

inline Outcome convergence(Runs& runs, double by = 30.0) {
    std::vector<Outcome> parts;
    for (const char* name : {"scenario_A", "scenario_B"}) {
        const RunResult& r = runs.get(name, ControllerMode::Safe);
        if (r.abort) {
            parts.push_back({false, fmt::format("{} aborted", name)});
            continue;
        }
        double latest = 0.0;
        bool ok = true;
        for (const VehicleSummary& v : r.log.summary.vehicles) {
            if (!v.converged_at) {
                ok = false;
                latest = std::numeric_limits<double>::infinity();
            } else {
                latest = std::max(latest, *v.converged_at);
            }
        }
        ok = ok && latest <= by + 1e-9;
        parts.push_back({ok, fmt::format("{} converged by t = {:g} s", name, latest)});
    }
    return detail::combine(parts);
}

inline Outcome baseline_failures(Runs& runs) {
    std::vector<Outcome> parts;
    auto expect = [&](const std::string& name, const std::set<std::size_t>& rho,
                      const std::set<std::size_t>& eta) {
        const RunResult& r = runs.get(name, ControllerMode::Baseline);
        const std::set<std::size_t> got_rho = detail::breaching(r.log, true);
        const std::set<std::size_t> got_eta = detail::breaching(r.log, false);
        bool ok = !r.abort;
        std::string missing;
        for (std::size_t id : rho) {
            if (!got_rho.count(id)) {
                ok = false;
                missing += fmt::format(" d_rho of {}", id);
            }
        }
        for (std::size_t id : eta) {
            if (!got_eta.count(id)) {
                ok = false;
                missing += fmt::format(" d_eta of {}", id);
            }
        }
        parts.push_back({ok, fmt::format("{} baseline breaches d_rho {{{}}}, d_eta {{{}}}{}", name,
                                         detail::list(got_rho), detail::list(got_eta),
                                         missing.empty() ? "" : ", missing" + missing)});
        const RunResult& s = runs.get(name, ControllerMode::Safe);
        const std::size_t safe_breaches = s.log.summary.breaches.size();
        parts.push_back({!s.abort && safe_breaches == 0,
                         fmt::format("{} safe breaches {}{}", name, safe_breaches, s.abort ? " (aborted)" : "")});
    };
    expect("scenario_A", {4}, {});
    expect("scenario_B", {2, 4}, {2, 4, 5});
    return detail::combine(parts);
}

inline Outcome lyapunov_monotonicity(Runs& runs, double slack = 1e-6) {
    std::vector<Outcome> parts;
    for (const char* name : {"scenario_A", "scenario_B", "scenario_C"}) {
        const RunResult& r = runs.get(name, ControllerMode::Safe);
        double lat = -std::numeric_limits<double>::infinity();
        double lon = -std::numeric_limits<double>::infinity();
        for (const VehicleSummary& v : r.log.summary.vehicles) {
            if (v.max_lyap_lat_increase) lat = std::max(lat, *v.max_lyap_lat_increase);
            if (v.max_lyap_lon_increase) lon = std::max(lon, *v.max_lyap_lon_increase);
        }
        parts.push_back({!r.abort && lat <= slack && lon <= slack,
                         fmt::format("{} max increase lateral {:.3g}, longitudinal {:.3g}", name, lat, lon)});
    }
    return detail::combine(parts);
}

inline Outcome barrier_ode() {
    std::vector<Outcome> parts;
    {
        const auto trace = barrier_ode_check(2.0, [](double) { return 0.5; }, 1.0, 0.0, 50.0, 1000);
        double min_d = std::numeric_limits<double>::infinity();
        for (const BarrierSample& s : trace) min_d = std::min(min_d, s.d);
        const double ratio = trace.back().d_dot / trace.back().d;
        parts.push_back({min_d > 0.0 && detail::within(ratio, -0.25, 0.02 * 0.25),
                         fmt::format("constant forcing: d_dot/d = {:.5f} at t = 50", ratio)});
    }
    // alpha = a + b sin(w t + p). The mean a stays at most slightly positive:
    // a clearly positive mean shrinks d like exp(-a t / k_o), which leaves
    // double range (and any affordable step size) well before t = 100.
    std::mt19937_64 rng(20240517);
    std::uniform_real_distribution<double> offset(-0.5, 0.1), amplitude(0.0, 2.0), omega(0.05, 3.0),
        phase(0.0, 2.0 * std::numbers::pi), d0(0.1, 10.0), dd0(-5.0, 5.0), gain(1.0, 4.0);
    double worst = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 20; ++k) {
        const double a = offset(rng), b = amplitude(rng), w = omega(rng), p = phase(rng);
        const double d = d0(rng), dd = dd0(rng), k_o = gain(rng);
        const auto trace = barrier_ode_check(
            k_o, [=](double t) { return a + b * std::sin(w * t + p); }, d, dd / d, 100.0, 100);
        for (const BarrierSample& s : trace) worst = std::min(worst, s.d);
    }
    parts.push_back({worst > 0.0, fmt::format("20 randomized runs: min d = {:.3g}", worst)});
    return detail::combine(parts);
}

inline Outcome constraint_recovery() {
    const ReferencePath path = ReferencePath::straight({0, 0}, 0.0, 1000.0);
    const Gains gains;
    const double k = 1.0, dt = 1e-3, v_r = 10.0;
    VehicleState st = from_frenet(path, 10.0, 1.0, 0.05, 0.0);
    FrenetState fs = to_frenet(path, st);
    fs.v_r = v_r;
    st.v = constrained_velocity(fs, 0.0) + 0.5;
    auto residual = [&](FrenetState f) {
        f.v_r = v_r;
        return constrained_velocity(f, 0.0) - st.v;
    };
    const double r0 = residual(fs);
    double worst_ratio = 0.0;
    double r10 = 0.0;
    const auto steps = static_cast<int>(std::lround(10.0 / dt));
    for (int n = 1; n <= steps; ++n) {
        fs = to_frenet(path, st, fs.s);
        fs.v_r = v_r;
        const double chi = lateral_nominal(fs, st.v, 0.0, gains);
        const double a = recover_acceleration(fs, st.v, 0.0, chi, 0.0, 0.0, k);
        st = integrate_step(st, {a, chi}, dt);
        fs = to_frenet(path, st, fs.s);
        const double t = n * dt;
        const double r = residual(fs);
        if (t <= 3.0 + 1e-12) worst_ratio = std::max(worst_ratio, std::abs(r / (r0 * std::exp(-k * t)) - 1.0));
        r10 = r;
    }
    const bool ok = std::abs(r0 + 0.5) < 1e-12 && worst_ratio <= 0.05 && std::abs(r10) < 1e-3;
    return {ok, fmt::format("residual {:.3g} -> {:.3g} m/s after 10 s; worst deviation from exp(-kt) over 3 s {:.3g}",
                            r0, r10, worst_ratio)};
}

inline Outcome numerical_oracles() {
    std::vector<Outcome> parts;
    std::vector<Vec2> pts;
    for (int k = 0; k <= 32; ++k) {
        const double x = 25.0 * k;
        pts.push_back({x, 40.0 * std::sin(2.0 * std::numbers::pi * x / 400.0)});
    }
    const ReferencePath path = ReferencePath::from_waypoints(pts, false);

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> pick_s(1.0, path.length() - 1.0), pick_y(-10.0, 10.0);
    double round_trip = 0.0;
    for (int k = 0; k < 1000; ++k) {
        const double s = pick_s(rng), y = pick_y(rng);
        const PathPose at = path.pose(s);
        const Projection pr = path.project(at.position + y * at.normal());
        round_trip = std::max({round_trip, std::abs(pr.s - s), std::abs(pr.y_tilde - y)});
    }
    parts.push_back({round_trip <= 1e-6, fmt::format("projection round trip {:.2g} m", round_trip)});

    const VehicleState start{0, 0, 0.2, 8.0};
    auto integrate = [&](double dt) {
        VehicleState st = start;
        const auto n = static_cast<int>(std::lround(4.0 / dt));
        for (int i = 0; i < n; ++i) st = integrate_step(st, {0.7, 0.1}, dt);
        return st;
    };
    const VehicleState ref = integrate(1e-5);
    auto err = [&](const VehicleState& s) {
        return std::hypot(s.x - ref.x, s.y - ref.y) + std::abs(wrap_angle(s.theta - ref.theta)) +
               std::abs(s.v - ref.v);
    };
    const double order = err(integrate(0.2)) / err(integrate(0.1));
    parts.push_back({order >= 8.0 && order <= 32.0, fmt::format("RK4 halving factor {:.1f}", order)});

    std::uniform_real_distribution<double> pick_c(1.0, path.length() - 1.0);
    double curvature = 0.0;
    constexpr double h = 1e-4;
    for (int k = 0; k < 1000; ++k) {
        const double s = pick_c(rng);
        const double fd = wrap_angle(path.pose(s + h).heading - path.pose(s - h).heading) / (2.0 * h);
        curvature = std::max(curvature, std::abs(fd - path.pose(s).curvature));
    }
    parts.push_back({curvature <= 1e-3, fmt::format("curvature vs heading differences {:.2g}", curvature)});

    const ReferencePath circle = ReferencePath::circle({0, 0}, 20.0, 64);
    const double closure = norm(circle.pose(std::nextafter(circle.length(), 0.0)).position - circle.pose(0.0).position);
    parts.push_back({closure <= 1e-4, fmt::format("circle closure {:.2g} m", closure)});
    return detail::combine(parts);
}

inline Outcome formula_checks() {
    std::vector<Outcome> parts;
    auto check = [&](const std::string& what, double got, double expected, double tol) {
        parts.push_back({detail::within(got, expected, tol), fmt::format("{} {:.7g}", what, got)});
    };
    const Gains g;
    const RoadSpec road{std::make_shared<const ReferencePath>(ReferencePath::straight({0, 0}, 0, 100)), 10.0,
                        10.0, 1.2};
    const FrenetState fs{10.0, 4.0, 0.2, 10.0};
    check("lateral", lateral_control(fs, 10.0, 0.0, lateral_safety(road, 4.0), g, ControllerMode::Safe),
          -0.065425, 1e-5);
    check("longitudinal", longitudinal_control(2.0, 1.0, 11.0, 1.0, 0.0, g, ControllerMode::Safe), 1.081818,
          1e-6);

    const ReferencePath bend = ReferencePath::circle({0, 0}, 50.0, 256);
    check("v_r on curve", to_frenet(bend, from_frenet(bend, 20.0, 2.0, 0.1, 10.0), 20.0).v_r, 10.3646, 1e-4);
    const ReferencePath line = ReferencePath::straight({0, 0}, 0.0, 100.0);
    check("v_r on straight", to_frenet(line, from_frenet(line, 20.0, 0.0, 0.2, 10.0), 20.0).v_r, 9.8007, 1e-4);

    check("L_lat", lyapunov_lateral(4.0, 0.0, 0.01), 0.08, 1e-12);
    check("L_lat", lyapunov_lateral(0.0, 0.2, 0.01), 0.02, 1e-12);
    check("L_lon", lyapunov_longitudinal(2.0, 1.0, 0.4), 1.3, 1e-12);
    Outcome out = detail::combine(parts);
    if (out.pass) out.detail = fmt::format("{} example values reproduced", parts.size());
    return out;
}

inline Outcome determinism(Runs& runs) {
    const PlatoonConfig cfg = runs.config("scenario_A", ControllerMode::Safe);
    auto csv = [&] {
        std::ostringstream out;
        write_csv(out, run_simulation(cfg));
        return out.str();
    };
    const std::string first = csv();
    const std::string second = csv();
    return {first == second, fmt::format("two scenario_A safe runs, {} bytes, {}", first.size(),
                                         first == second ? "identical" : "different")};
}

struct Criterion {
    int id;
    std::string name;
    std::function<Outcome(Runs&)> run;
};

inline std::vector<Criterion> criteria() {
    return {
        {1, "safety invariance", safety_invariance},
        {2, "convergence", [](Runs& r) { return convergence(r); }},
        {3, "baseline failure reproduction", baseline_failures},
        {4, "Lyapunov monotonicity", [](Runs& r) { return lyapunov_monotonicity(r); }},
        {5, "barrier ODE", [](Runs&) { return barrier_ode(); }},
        {6, "constraint recovery", [](Runs&) { return constraint_recovery(); }},
        {7, "numerical oracles", [](Runs&) { return numerical_oracles(); }},
        {8, "unit formula checks", [](Runs&) { return formula_checks(); }},
        {9, "determinism", determinism},
    };
}

inline std::string report_line(const Criterion& c, const Outcome& o) {
    return fmt::format("{} {} {}: {}", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail);
}

}  // namespace platoon::acceptance
