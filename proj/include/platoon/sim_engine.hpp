#pragma once

// Closed-loop platoon simulation: per control tick every vehicle is mapped to
// its lane's Frenet frame, controllers run leader-first along the predecessor
// chain, and the resulting inputs are held while the plants are integrated.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "platoon/controllers.hpp"
#include "platoon/error.hpp"
#include "platoon/frenet_bridge.hpp"
#include "platoon/path_geometry.hpp"
#include "platoon/vehicle_model.hpp"

namespace platoon {

inline double lyapunov_lateral(double y_tilde, double theta_tilde, double k1) {
    return 0.5 * k1 * y_tilde * y_tilde + 0.5 * theta_tilde * theta_tilde;
}

inline double lyapunov_longitudinal(double e_tilde, double nu, double k4) {
    return 0.5 * k4 * e_tilde * e_tilde + 0.5 * nu * nu;
}

// ---------------------------------------------------------------------------
// Configuration

/// How a lane's reference path is generated. Kept alongside the built path so
/// a configuration can be written back out unchanged.
struct PathSource {
    enum class Kind { Straight, Circle, Waypoints };

    Kind kind = Kind::Waypoints;
    Vec2 start{};          // straight
    double heading = 0.0;  // straight, rad
    double length = 0.0;   // straight, m
    Vec2 center{};         // circle
    double radius = 0.0;   // circle, m
    int samples = 64;      // circle
    std::vector<Vec2> points;  // waypoints
    bool closed = false;       // waypoints

    ReferencePath build() const {
        switch (kind) {
            case Kind::Straight: return ReferencePath::straight(start, heading, length);
            case Kind::Circle: return ReferencePath::circle(center, radius, samples);
            case Kind::Waypoints: return ReferencePath::from_waypoints(points, closed);
        }
        throw Error(ErrorKind::ValidationError, "unknown path kind");
    }

    friend bool operator==(const PathSource&, const PathSource&) = default;
};

struct Lane {
    std::string id;
    PathSource source;
    double w_left = 0.0;
    double w_right = 0.0;
    double eps_w = 0.0;

    RoadSpec build() const {
        RoadSpec road{std::make_shared<const ReferencePath>(source.build()), w_left, w_right, eps_w};
        road.validate();
        return road;
    }

    friend bool operator==(const Lane&, const Lane&) = default;
};

struct VehicleConfig {
    std::size_t lane = 0;
    double s = 0.0;
    double y_tilde = 0.0;
    double theta_tilde = 0.0;
    double v = 0.0;
    double wheelbase = 4.0;
    std::optional<std::size_t> predecessor;  // index into vehicles; none means cruise

    friend bool operator==(const VehicleConfig&, const VehicleConfig&) = default;
};

/// Scripted lane change: once `vehicle`, projected onto `lane`, is less than
/// `gap_below` behind `ahead`, it switches to that lane and follows `ahead`;
/// `successor`, if given, then follows `vehicle`.
struct MergeEvent {
    std::size_t vehicle = 0;
    std::size_t ahead = 0;
    std::size_t lane = 0;
    double gap_below = 0.0;
    std::optional<std::size_t> successor;

    friend bool operator==(const MergeEvent&, const MergeEvent&) = default;
};

/// ZeroOrder evaluates the controllers once per control tick and holds the
/// inputs; Continuous re-evaluates them at every integrator stage, so
/// dt_control only sets the logging rate.
enum class InputHold { ZeroOrder, Continuous };

constexpr std::string_view to_string(InputHold hold) {
    return hold == InputHold::ZeroOrder ? "zoh" : "continuous";
}

/// Vehicle 0 is the platoon leader and drives its lane exactly at v_star.
struct PlatoonConfig {
    std::string name = "scenario";
    std::vector<Lane> lanes;
    std::vector<VehicleConfig> vehicles;
    std::vector<MergeEvent> merges;
    Gains gains;
    ControllerMode mode = ControllerMode::Safe;
    InputHold hold = InputHold::ZeroOrder;
    double e_star = 14.0;
    double v_star = 10.0;
    double eps = 5.0;
    double eps1 = 0.01;
    double dt_control = 0.1;
    double dt_sim = 0.01;
    double duration = 60.0;

    std::size_t tick_count() const {
        return static_cast<std::size_t>(std::llround(duration / dt_control));
    }
    std::size_t substeps() const {
        return static_cast<std::size_t>(std::llround(dt_control / dt_sim));
    }

    void validate() const;

    friend bool operator==(const PlatoonConfig&, const PlatoonConfig&) = default;
};

namespace detail {

inline bool is_multiple(double total, double step) {
    const double r = total / step;
    return std::llround(r) >= 1 && std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r);
}

/// Vehicle indices with every predecessor before its followers.
inline std::vector<std::size_t> chain_order(const std::vector<std::optional<std::size_t>>& pred) {
    const std::size_t n = pred.size();
    std::vector<int> state(n, 0);
    std::vector<std::size_t> order;
    order.reserve(n);
    for (std::size_t start = 0; start < n; ++start) {
        std::vector<std::size_t> stack;
        std::size_t i = start;
        while (state[i] == 0) {
            state[i] = 1;
            stack.push_back(i);
            if (!pred[i]) break;
            i = *pred[i];
            if (state[i] == 1) {
                throw Error(ErrorKind::ValidationError,
                            fmt::format("predecessor cycle through vehicle {}", i + 1));
            }
        }
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            state[*it] = 2;
            order.push_back(*it);
        }
    }
    return order;
}

}  // namespace detail

inline void PlatoonConfig::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::ValidationError, msg); };
    gains.validate();
    if (lanes.empty()) fail("at least one road is required");
    if (vehicles.size() < 2) fail("a platoon needs a leader and at least one follower");
    if (!(v_star > 0.0)) fail("v_star must be positive");
    if (!(eps > 0.0)) fail("eps must be positive");
    if (!(eps1 > 0.0) || !(eps1 < 1.0)) fail("eps1 must lie in (0, 1)");
    if (!(dt_sim > 0.0) || !(dt_control > 0.0) || !(duration > 0.0))
        fail("dt_sim, dt_control and duration must be positive");
    if (!detail::is_multiple(dt_control, dt_sim)) fail("dt_control must be a multiple of dt_sim");
    if (!detail::is_multiple(duration, dt_control)) fail("duration must be a multiple of dt_control");

    double longest = 0.0;
    std::vector<std::optional<std::size_t>> pred;
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        const VehicleConfig& v = vehicles[i];
        if (v.lane >= lanes.size()) fail(fmt::format("vehicle {}: unknown road", i + 1));
        if (!(v.wheelbase > 0.0)) fail(fmt::format("vehicle {}: wheelbase must be positive", i + 1));
        if (v.predecessor && *v.predecessor >= vehicles.size())
            fail(fmt::format("vehicle {}: unknown predecessor", i + 1));
        if (v.predecessor && *v.predecessor == i)
            fail(fmt::format("vehicle {}: cannot follow itself", i + 1));
        if (v.predecessor && vehicles[*v.predecessor].lane != v.lane)
            fail(fmt::format("vehicle {}: predecessor drives on another road", i + 1));
        longest = std::max(longest, v.wheelbase);
        pred.push_back(v.predecessor);
    }
    if (!(e_star > longest + eps))
        fail(fmt::format("e_star = {} must exceed the longest wheelbase plus eps ({})", e_star,
                         longest + eps));
    detail::chain_order(pred);

    const VehicleConfig& leader = vehicles.front();
    if (leader.predecessor) fail("vehicle 1 is the leader and cannot have a predecessor");
    if (leader.y_tilde != 0.0 || leader.theta_tilde != 0.0 || leader.v != v_star)
        fail("the leader must start on its path at v_star");

    // Arc lengths must decrease along each predecessor link.
    std::vector<RoadSpec> roads;
    for (const Lane& lane : lanes) roads.push_back(lane.build());
    for (std::size_t i = 0; i < vehicles.size(); ++i) {
        const VehicleConfig& v = vehicles[i];
        const ReferencePath& path = *roads[v.lane].path;
        path.normalize(v.s);
        if (v.predecessor) {
            const double gap = path.arc_difference(vehicles[*v.predecessor].s, v.s);
            if (!(gap > 0.0))
                fail(fmt::format("vehicle {} must start behind its predecessor {}", i + 1,
                                 *v.predecessor + 1));
        }
    }

    for (const MergeEvent& m : merges) {
        const std::size_t n = vehicles.size();
        if (m.vehicle >= n || m.ahead >= n || m.lane >= lanes.size() ||
            (m.successor && *m.successor >= n))
            fail("merge refers to an unknown vehicle or road");
        if (m.vehicle == 0) fail("the leader cannot merge");
        if (m.vehicle == m.ahead || (m.successor && (*m.successor == m.vehicle || *m.successor == m.ahead)))
            fail("merge vehicles must be distinct");
        if (!(m.gap_below > 0.0)) fail("merge gap_below must be positive");
    }
}

// ---------------------------------------------------------------------------
// Log

struct BreachEvent {
    double t = 0.0;
    std::size_t vehicle = 0;
    std::string which;  // d_rho, d_eta_L or d_eta_R
    double value = 0.0;

    friend bool operator==(const BreachEvent&, const BreachEvent&) = default;
};

struct VehicleRecord {
    VehicleState state;
    FrenetState frenet;
    ControlInput input;
    double a_r = 0.0;
    double delta = 0.0;
    double v_error = 0.0;  // v - v_star
    std::optional<double> e_tilde;
    std::optional<double> nu;
    SafetyDistances safety;
    double lyap_lat = 0.0;
    std::optional<double> lyap_lon;
    std::size_t lane = 0;
    std::optional<std::size_t> predecessor;
    bool breach = false;

    friend bool operator==(const VehicleRecord&, const VehicleRecord&) = default;
};

struct StepRecord {
    double t = 0.0;
    std::vector<VehicleRecord> vehicles;
    std::vector<BreachEvent> breaches;

    friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct ConvergenceThresholds {
    double y_tilde = 0.1;
    double theta_tilde = 0.02;
    double v = 0.1;
    double e_tilde = 0.2;
};

struct VehicleSummary {
    double min_d_eta_L = std::numeric_limits<double>::infinity();
    double min_d_eta_R = std::numeric_limits<double>::infinity();
    std::optional<double> min_d_rho;
    double max_abs_theta_tilde = 0.0;
    double max_abs_chi = 0.0;
    double max_abs_a = 0.0;
    std::optional<double> converged_at;  // first t after which every channel stays in bounds
    std::optional<double> max_lyap_lat_increase;
    std::optional<double> max_lyap_lon_increase;
    std::size_t breach_count = 0;

    double min_d_eta() const { return std::min(min_d_eta_L, min_d_eta_R); }

    friend bool operator==(const VehicleSummary&, const VehicleSummary&) = default;
};

struct MergeRecord {
    double t = 0.0;
    std::size_t vehicle = 0;
    std::size_t lane = 0;
    std::size_t ahead = 0;

    friend bool operator==(const MergeRecord&, const MergeRecord&) = default;
};

struct SimSummary {
    std::vector<VehicleSummary> vehicles;
    std::vector<BreachEvent> breaches;
    std::vector<MergeRecord> merges;

    friend bool operator==(const SimSummary&, const SimSummary&) = default;
};

struct SimLog {
    PlatoonConfig config;
    std::vector<StepRecord> records;
    SimSummary summary;

    friend bool operator==(const SimLog&, const SimLog&) = default;
};

/// Safe-mode abort: a safety distance reached zero, or the state left the
/// controllers' domain. Carries the log up to and including the failing tick.
class SimulationAborted : public Error {
public:
    SimulationAborted(ErrorKind kind, const std::string& what, SimLog partial)
        : Error(kind, what), log_(std::make_shared<const SimLog>(std::move(partial))) {}

    const SimLog& log() const { return *log_; }

private:
    std::shared_ptr<const SimLog> log_;
};

inline SimSummary summarize(const PlatoonConfig& config, const std::vector<StepRecord>& records,
                            std::vector<MergeRecord> merges,
                            const ConvergenceThresholds& thr = {}) {
    const std::size_t n = config.vehicles.size();
    SimSummary out;
    out.vehicles.resize(n);
    out.merges = std::move(merges);
    constexpr double half_pi = std::numbers::pi / 2.0;
    const double lat_limit = half_pi - config.eps1;

    for (std::size_t k = 0; k < records.size(); ++k) {
        const StepRecord& rec = records[k];
        for (const BreachEvent& b : rec.breaches) {
            out.breaches.push_back(b);
            ++out.vehicles[b.vehicle].breach_count;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const VehicleRecord& r = rec.vehicles[i];
            VehicleSummary& sum = out.vehicles[i];
            sum.min_d_eta_L = std::min(sum.min_d_eta_L, r.safety.d_eta_L);
            sum.min_d_eta_R = std::min(sum.min_d_eta_R, r.safety.d_eta_R);
            if (r.safety.d_rho)
                sum.min_d_rho = sum.min_d_rho ? std::min(*sum.min_d_rho, *r.safety.d_rho) : *r.safety.d_rho;
            sum.max_abs_theta_tilde = std::max(sum.max_abs_theta_tilde, std::abs(r.frenet.theta_tilde));
            sum.max_abs_chi = std::max(sum.max_abs_chi, std::abs(r.input.chi));
            sum.max_abs_a = std::max(sum.max_abs_a, std::abs(r.input.a));

            if (k == 0 || i == 0) continue;
            const VehicleRecord& p = records[k - 1].vehicles[i];
            if (p.lane != r.lane || p.predecessor != r.predecessor) continue;
            auto lat_ok = [&](const VehicleRecord& x) {
                return x.safety.d_eta_L > 0.0 && x.safety.d_eta_R > 0.0 &&
                       std::abs(x.frenet.theta_tilde) < lat_limit;
            };
            if (lat_ok(p) && lat_ok(r)) {
                const double inc = r.lyap_lat - p.lyap_lat;
                sum.max_lyap_lat_increase =
                    sum.max_lyap_lat_increase ? std::max(*sum.max_lyap_lat_increase, inc) : inc;
            }
            if (p.lyap_lon && r.lyap_lon && *p.safety.d_rho > 0.0 && *r.safety.d_rho > 0.0) {
                const double inc = *r.lyap_lon - *p.lyap_lon;
                sum.max_lyap_lon_increase =
                    sum.max_lyap_lon_increase ? std::max(*sum.max_lyap_lon_increase, inc) : inc;
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        std::optional<double> since;
        for (std::size_t k = records.size(); k-- > 0;) {
            const VehicleRecord& r = records[k].vehicles[i];
            const bool inside = std::abs(r.frenet.y_tilde) < thr.y_tilde &&
                                std::abs(r.frenet.theta_tilde) < thr.theta_tilde &&
                                std::abs(r.v_error) < thr.v &&
                                (!r.e_tilde || std::abs(*r.e_tilde) < thr.e_tilde);
            if (!inside) break;
            since = records[k].t;
        }
        out.vehicles[i].converged_at = since;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Simulation

namespace detail {

struct VehicleRuntime {
    VehicleState state;
    double v_r = 0.0;
    double a_r = 0.0;
    std::optional<double> s_hint;
    bool fresh = true;  // v_r is taken from the next projection
    std::size_t lane = 0;
    std::optional<std::size_t> predecessor;
};

struct Evaluation {
    std::vector<VehicleRecord> vehicles;
    std::optional<std::string> failure;
    ErrorKind failure_kind = ErrorKind::BarrierDomainError;
};

/// One pass of every controller at time t, leader first. `tick` marks a
/// logged control instant: hints and fresh virtual speeds are committed and
/// the initial-state precondition is checked at t = 0.
inline Evaluation evaluate(const PlatoonConfig& config, const std::vector<RoadSpec>& roads,
                           std::vector<VehicleRuntime>& rt, const std::vector<std::size_t>& order,
                           double t, bool tick, bool first) {
    const std::size_t n = rt.size();
    const Gains& g = config.gains;
    const bool safe = config.mode == ControllerMode::Safe;
    Evaluation ev;
    ev.vehicles.resize(n);

    for (std::size_t i : order) {
        VehicleRuntime& v = rt[i];
        const RoadSpec& road = roads[v.lane];
        const ReferencePath& path = *road.path;
        VehicleRecord& out = ev.vehicles[i];
        out.lane = v.lane;
        out.predecessor = v.predecessor;

        if (i == 0) {
            const FrenetState fs = leader_policy(t, config.v_star, config.vehicles.front().s, path);
            const PathPose at = path.pose(fs.s);
            v.state = from_frenet(path, fs.s, 0.0, 0.0, config.v_star);
            v.v_r = config.v_star;
            v.a_r = 0.0;
            if (tick) v.s_hint = fs.s;
            out.state = v.state;
            out.frenet = fs;
            out.input = {0.0, at.curvature};
            const LateralSafety lat = lateral_safety(road, 0.0);
            out.safety = {lat.d_eta_L, lat.d_eta_R, std::nullopt};
            out.delta = steering_angle(at.curvature, config.vehicles[i].wheelbase);
            continue;
        }

        auto fail = [&](ErrorKind kind, const std::string& what) {
            ev.failure_kind = kind;
            ev.failure = fmt::format("t = {}: vehicle {}: {}", t, i + 1, what);
        };

        FrenetState fs;
        PathPose at;
        try {
            fs = to_frenet(path, v.state, v.s_hint);
            at = path.pose(fs.s);
        } catch (const Error& e) {
            fail(e.kind(), e.what());
            return ev;
        }
        if (tick) {
            if (v.fresh) v.v_r = fs.v_r;
            v.fresh = false;
            v.s_hint = fs.s;
        }
        fs.v_r = v.v_r;

        const LateralSafety lat = lateral_safety(road, fs.y_tilde);
        SafetyDistances dist{lat.d_eta_L, lat.d_eta_R, std::nullopt};
        std::optional<double> e_tilde, nu;
        if (v.predecessor) {
            const VehicleRuntime& p = rt[*v.predecessor];
            const double s_pred = ev.vehicles[*v.predecessor].frenet.s;
            const double e = path.arc_difference(s_pred, fs.s);
            e_tilde = e - config.e_star;
            nu = p.v_r - v.v_r;
            dist.d_rho = longitudinal_safety(e, config.eps);
        }

        const bool breached = !(dist.d_eta_L > 0.0) || !(dist.d_eta_R > 0.0) ||
                              (dist.d_rho && !(*dist.d_rho > 0.0));

        if (first && safe) {
            const double bound = std::numbers::pi / 2.0 - config.eps1;
            const double lyap0 = g.k1 * fs.y_tilde * fs.y_tilde + fs.theta_tilde * fs.theta_tilde;
            if (breached || !(lyap0 < bound * bound)) {
                throw Error(ErrorKind::PreconditionViolation,
                            fmt::format("vehicle {}: initial state outside the safe set "
                                        "(d_eta_L = {}, d_eta_R = {}, d_rho = {}, k1 y^2 + theta^2 = {})",
                                        i + 1, dist.d_eta_L, dist.d_eta_R,
                                        dist.d_rho ? fmt::format("{}", *dist.d_rho) : "n/a", lyap0));
            }
        }

        out.state = v.state;
        out.frenet = fs;
        out.safety = dist;
        out.e_tilde = e_tilde;
        out.nu = nu;
        out.v_error = v.state.v - config.v_star;
        out.lyap_lat = lyapunov_lateral(fs.y_tilde, fs.theta_tilde, g.k1);
        if (e_tilde) out.lyap_lon = lyapunov_longitudinal(*e_tilde, *nu, g.k4);

        if (safe && breached) {
            fail(ErrorKind::BarrierDomainError,
                 fmt::format("safety distance reached zero (d_eta_L = {}, d_eta_R = {}, d_rho = {})",
                             dist.d_eta_L, dist.d_eta_R,
                             dist.d_rho ? fmt::format("{}", *dist.d_rho) : "n/a"));
            return ev;
        }

        try {
            const double chi = lateral_control(fs, v.state.v, at.curvature, lat, g, config.mode);
            double a_r = 0.0;
            if (v.predecessor) {
                a_r = longitudinal_control(*e_tilde, *nu, *dist.d_rho, *nu, rt[*v.predecessor].a_r,
                                           g, config.mode);
            }
            const double a = recover_acceleration(fs, v.state.v, a_r, chi, at.curvature,
                                                  at.curvature_rate, g.k_constraint);
            v.a_r = a_r;
            out.a_r = a_r;
            out.input = {a, chi};
            out.delta = steering_angle(chi, config.vehicles[i].wheelbase);
        } catch (const Error& e) {
            fail(e.kind(), e.what());
            return ev;
        }
    }
    return ev;
}

/// Safety distances of every follower at the current states, without
/// touching any controller state. Used between logged ticks.
inline std::vector<std::optional<SafetyDistances>> safety_snapshot(
    const PlatoonConfig& config, const std::vector<RoadSpec>& roads,
    const std::vector<VehicleRuntime>& rt, double t) {
    const std::size_t n = rt.size();
    std::vector<double> s(n, 0.0);
    std::vector<std::optional<SafetyDistances>> out(n);
    const ReferencePath& lead_path = *roads[rt[0].lane].path;
    s[0] = lead_path.normalize(config.vehicles.front().s + config.v_star * t);
    for (std::size_t i = 1; i < n; ++i) {
        const RoadSpec& road = roads[rt[i].lane];
        const Projection pr = road.path->project(rt[i].state.position(), rt[i].s_hint);
        s[i] = pr.s;
        const LateralSafety lat = lateral_safety(road, pr.y_tilde);
        out[i] = SafetyDistances{lat.d_eta_L, lat.d_eta_R, std::nullopt};
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (!rt[i].predecessor) continue;
        const ReferencePath& path = *roads[rt[i].lane].path;
        out[i]->d_rho = longitudinal_safety(path.arc_difference(s[*rt[i].predecessor], s[i]), config.eps);
    }
    return out;
}

/// Tracks breach episodes: one event when a distance first drops to zero or
/// below, and a per-vehicle flag covering everything since the last tick.
struct BreachMonitor {
    std::vector<std::array<bool, 3>> active;
    std::vector<bool> flagged;
    std::vector<BreachEvent> pending;

    explicit BreachMonitor(std::size_t n) : active(n, {false, false, false}), flagged(n, false) {}

    bool observe(double t, std::size_t i, const SafetyDistances& d) {
        const std::array<std::optional<double>, 3> values{d.d_eta_L, d.d_eta_R, d.d_rho};
        static constexpr std::array<const char*, 3> names{"d_eta_L", "d_eta_R", "d_rho"};
        bool any = false;
        for (std::size_t c = 0; c < 3; ++c) {
            if (!values[c] || *values[c] > 0.0) {
                active[i][c] = false;
                continue;
            }
            any = true;
            flagged[i] = true;
            if (!active[i][c]) pending.push_back({t, i, names[c], *values[c]});
            active[i][c] = true;
        }
        return any;
    }
};

}  // namespace detail

/// Deterministic closed-loop run over [0, duration], one record per control
/// tick. Safety distances are also checked after every integration substep;
/// a breach between ticks is flagged on the next record. Safe mode throws
/// SimulationAborted on the first non-positive distance, baseline mode logs
/// breaches and keeps going.
inline SimLog run_simulation(const PlatoonConfig& config) {
    config.validate();
    const std::size_t n = config.vehicles.size();
    const bool safe = config.mode == ControllerMode::Safe;

    std::vector<RoadSpec> roads;
    for (const Lane& lane : config.lanes) roads.push_back(lane.build());

    std::vector<detail::VehicleRuntime> rt(n);
    for (std::size_t i = 0; i < n; ++i) {
        const VehicleConfig& vc = config.vehicles[i];
        const ReferencePath& path = *roads[vc.lane].path;
        rt[i].state = from_frenet(path, vc.s, vc.y_tilde, vc.theta_tilde, vc.v);
        rt[i].lane = vc.lane;
        rt[i].predecessor = vc.predecessor;
        rt[i].s_hint = path.normalize(vc.s);
    }

    SimLog log;
    log.config = config;
    std::vector<MergeRecord> merges;
    std::vector<bool> merged(config.merges.size(), false);
    detail::BreachMonitor monitor(n);
    const std::size_t ticks = config.tick_count();
    const std::size_t substeps = config.substeps();
    const double h = config.dt_sim;

    std::vector<std::size_t> order;

    // `at` is set when the failure happens between ticks: the log then ends
    // with an extra record at that instant, evaluated without barrier terms
    // since they are undefined there.
    auto abort = [&](ErrorKind kind, const std::string& what, std::optional<double> at = std::nullopt) {
        if (at) {
            PlatoonConfig nominal = config;
            nominal.mode = ControllerMode::Baseline;
            std::vector<detail::VehicleRuntime> probe = rt;
            detail::Evaluation tail = detail::evaluate(nominal, roads, probe, order, *at, false, false);
            if (!tail.failure) {
                StepRecord rec;
                rec.t = *at;
                rec.vehicles = std::move(tail.vehicles);
                for (std::size_t i = 1; i < n; ++i) rec.vehicles[i].breach = monitor.flagged[i];
                rec.breaches = std::move(monitor.pending);
                monitor.pending.clear();
                log.records.push_back(std::move(rec));
            }
        }
        if (!monitor.pending.empty() && !log.records.empty()) {
            StepRecord& last = log.records.back();
            for (const BreachEvent& b : monitor.pending) {
                last.vehicles[b.vehicle].breach = true;
                last.breaches.push_back(b);
            }
        }
        log.summary = summarize(config, log.records, merges);
        throw SimulationAborted(kind, what, std::move(log));
    };

    // Between ticks: project every follower and watch the safety distances.
    auto watch = [&](double t) {
        std::vector<std::optional<SafetyDistances>> snap;
        try {
            snap = detail::safety_snapshot(config, roads, rt, t);
        } catch (const Error& e) {
            abort(e.kind(), fmt::format("t = {}: {}", t, e.what()), t);
        }
        for (std::size_t i = 1; i < n; ++i) {
            if (monitor.observe(t, i, *snap[i]) && safe) {
                const BreachEvent& b = monitor.pending.back();
                abort(ErrorKind::BarrierDomainError,
                      fmt::format("t = {}: vehicle {}: {} = {}", t, i + 1, b.which, b.value), t);
            }
        }
    };

    for (std::size_t k = 0; k <= ticks; ++k) {
        const double t = static_cast<double>(k) * config.dt_control;

        for (std::size_t m = 0; m < config.merges.size(); ++m) {
            const MergeEvent& ev = config.merges[m];
            if (merged[m] || rt[ev.ahead].lane != ev.lane) continue;
            const ReferencePath& path = *roads[ev.lane].path;
            const Projection pr = path.project(rt[ev.vehicle].state.position());
            const double gap = path.arc_difference(*rt[ev.ahead].s_hint, pr.s);
            if (gap > 0.0 && gap < ev.gap_below) {
                merged[m] = true;
                rt[ev.vehicle].lane = ev.lane;
                rt[ev.vehicle].predecessor = ev.ahead;
                rt[ev.vehicle].s_hint = pr.s;
                rt[ev.vehicle].fresh = true;
                if (ev.successor) rt[*ev.successor].predecessor = ev.vehicle;
                merges.push_back({t, ev.vehicle, ev.lane, ev.ahead});
            }
        }

        std::vector<std::optional<std::size_t>> preds(n);
        for (std::size_t i = 0; i < n; ++i) preds[i] = rt[i].predecessor;
        order = detail::chain_order(preds);

        detail::Evaluation ev = detail::evaluate(config, roads, rt, order, t, true, k == 0);
        StepRecord rec;
        rec.t = t;
        rec.vehicles = std::move(ev.vehicles);
        for (std::size_t i = 1; i < n; ++i) {
            if (!ev.failure || rec.vehicles[i].frenet != FrenetState{})
                monitor.observe(t, i, rec.vehicles[i].safety);
            rec.vehicles[i].breach = monitor.flagged[i];
            monitor.flagged[i] = false;
        }
        rec.breaches = std::move(monitor.pending);
        monitor.pending.clear();
        log.records.push_back(std::move(rec));
        if (ev.failure) abort(ev.failure_kind, *ev.failure);
        if (k == ticks) break;

        if (config.hold == InputHold::ZeroOrder) {
            std::vector<ControlInput> held(n);
            for (std::size_t i = 1; i < n; ++i) held[i] = log.records.back().vehicles[i].input;
            for (std::size_t step = 0; step < substeps; ++step) {
                for (std::size_t i = 1; i < n; ++i) rt[i].state = integrate_step(rt[i].state, held[i], h);
                if (step + 1 < substeps) watch(t + static_cast<double>(step + 1) * h);
            }
            for (std::size_t i = 1; i < n; ++i) rt[i].v_r += rt[i].a_r * config.dt_control;
            continue;
        }

        // Continuous hold: the whole platoon (plants and virtual speeds) is one
        // ODE and every RK4 stage re-evaluates the controllers.
        struct Rate {
            StateDerivative plant;
            double v_r_dot = 0.0;
        };
        for (std::size_t step = 0; step < substeps; ++step) {
            const double t0 = t + static_cast<double>(step) * h;
            const std::vector<detail::VehicleRuntime> base = rt;
            auto rates = [&](double ts) {
                const detail::Evaluation e = detail::evaluate(config, roads, rt, order, ts, false, false);
                if (e.failure) abort(e.failure_kind, *e.failure, ts);
                std::vector<Rate> out(n);
                for (std::size_t i = 1; i < n; ++i)
                    out[i] = {derivatives(rt[i].state, e.vehicles[i].input), e.vehicles[i].a_r};
                return out;
            };
            auto shift = [&](const std::vector<Rate>& r, double dt) {
                for (std::size_t i = 1; i < n; ++i) {
                    const VehicleState& s = base[i].state;
                    const StateDerivative& d = r[i].plant;
                    rt[i].state = {s.x + dt * d.x_dot, s.y + dt * d.y_dot, s.theta + dt * d.theta_dot,
                                   s.v + dt * d.v_dot};
                    rt[i].v_r = base[i].v_r + dt * r[i].v_r_dot;
                }
            };
            const std::vector<Rate> k1 = rates(t0);
            shift(k1, 0.5 * h);
            const std::vector<Rate> k2 = rates(t0 + 0.5 * h);
            shift(k2, 0.5 * h);
            const std::vector<Rate> k3 = rates(t0 + 0.5 * h);
            shift(k3, h);
            const std::vector<Rate> k4 = rates(t0 + h);
            for (std::size_t i = 1; i < n; ++i) {
                auto blend = [&](auto field) {
                    return h / 6.0 *
                           (field(k1[i]) + 2.0 * field(k2[i]) + 2.0 * field(k3[i]) + field(k4[i]));
                };
                const VehicleState& s = base[i].state;
                rt[i].state.x = s.x + blend([](const Rate& r) { return r.plant.x_dot; });
                rt[i].state.y = s.y + blend([](const Rate& r) { return r.plant.y_dot; });
                rt[i].state.theta =
                    wrap_angle(s.theta + blend([](const Rate& r) { return r.plant.theta_dot; }));
                rt[i].state.v = s.v + blend([](const Rate& r) { return r.plant.v_dot; });
                rt[i].v_r = base[i].v_r + blend([](const Rate& r) { return r.v_r_dot; });
            }
            if (step + 1 < substeps) watch(t0 + h);
        }
    }

    log.summary = summarize(config, log.records, std::move(merges));
    return log;
}

// ---------------------------------------------------------------------------
// Barrier ODE

struct BarrierSample {
    double t = 0.0;
    double d = 0.0;
    double d_dot = 0.0;
};

/// Integrates d'' = -k_o d'/d - alpha(t) from d(0) = d0, d'(0) = phi0 d0 with
/// RK4 at dt = 1e-4. Near d = 0 the damping term is stiff, so each step is
/// split until k_o h / d stays below 0.5. Every `stride`-th step is kept.
inline std::vector<BarrierSample> barrier_ode_check(double k_o,
                                                    const std::function<double(double)>& alpha,
                                                    double d0, double phi0, double duration,
                                                    std::size_t stride = 1) {
    constexpr double dt = 1e-4;
    const auto steps = static_cast<std::size_t>(std::llround(duration / dt));
    stride = std::max<std::size_t>(stride, 1);
    double d = d0;
    double dd = phi0 * d0;
    std::vector<BarrierSample> trace;
    trace.reserve(steps / stride + 2);
    trace.push_back({0.0, d, dd});

    auto rhs = [&](double t, double x, double xd) { return -k_o * xd / x - alpha(t); };
    for (std::size_t k = 0; k < steps; ++k) {
        const double t0 = static_cast<double>(k) * dt;
        const double ratio = d > 0.0 ? k_o * dt / (0.5 * d) : 1.0;
        const auto pieces = static_cast<std::size_t>(std::clamp(std::ceil(ratio), 1.0, 1e7));
        const double h = dt / static_cast<double>(pieces);
        for (std::size_t p = 0; p < pieces; ++p) {
            const double t = t0 + static_cast<double>(p) * h;
            const double k1x = dd;
            const double k1v = rhs(t, d, dd);
            const double k2x = dd + 0.5 * h * k1v;
            const double k2v = rhs(t + 0.5 * h, d + 0.5 * h * k1x, k2x);
            const double k3x = dd + 0.5 * h * k2v;
            const double k3v = rhs(t + 0.5 * h, d + 0.5 * h * k2x, k3x);
            const double k4x = dd + h * k3v;
            const double k4v = rhs(t + h, d + h * k3x, k4x);
            d += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
            dd += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        }
        if ((k + 1) % stride == 0 || k + 1 == steps)
            trace.push_back({static_cast<double>(k + 1) * dt, d, dd});
    }
    return trace;
}

}  // namespace platoon
