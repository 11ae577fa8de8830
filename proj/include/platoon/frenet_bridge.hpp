#pragma once

// Path-relative (Frenet) view of a vehicle: projection point s, lateral
// offset, heading error, and the speed of the virtual vehicle riding the path.

#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "platoon/error.hpp"
#include "platoon/path_geometry.hpp"
#include "platoon/vehicle_model.hpp"

namespace platoon {

struct FrenetState {
    double s = 0.0;            // m, arc length of the virtual vehicle
    double y_tilde = 0.0;      // m, positive left of the path
    double theta_tilde = 0.0;  // rad, theta - theta_r
    double v_r = 0.0;          // m/s, virtual vehicle speed

    friend bool operator==(const FrenetState&, const FrenetState&) = default;
};

/// Heading errors at or beyond this magnitude abort instead of being clamped.
inline constexpr double kHeadingLimit = std::numbers::pi / 2.0 - 1e-3;

struct ErrorRates {
    double y_tilde_dot = 0.0;
    double theta_tilde_dot = 0.0;
};

namespace detail {

inline void check_heading(double theta_tilde) {
    if (!(std::abs(theta_tilde) < kHeadingLimit)) {
        throw Error(ErrorKind::HeadingDomainViolation,
                    "|theta_tilde| = " + std::to_string(std::abs(theta_tilde)) +
                        " is not below pi/2 - 1e-3");
    }
}

inline double tube_factor(double chi_r, double y_tilde) {
    const double f = 1.0 - chi_r * y_tilde;
    if (!(f > 0.0)) {
        throw Error(ErrorKind::TubeViolation, "1 - chi_r * y_tilde = " + std::to_string(f));
    }
    return f;
}

}  // namespace detail

inline FrenetState to_frenet(const ReferencePath& path, const VehicleState& state,
                             std::optional<double> s_hint = std::nullopt) {
    Projection pr;
    try {
        pr = path.project(state.position(), s_hint);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ProjectionAmbiguous) throw Error(ErrorKind::TubeViolation, e.what());
        throw;
    }
    const PathPose at = path.pose(pr.s);
    FrenetState fs;
    fs.s = pr.s;
    fs.y_tilde = pr.y_tilde;
    fs.theta_tilde = wrap_angle(state.theta - at.heading);
    detail::check_heading(fs.theta_tilde);
    fs.v_r = state.v * std::cos(fs.theta_tilde) / detail::tube_factor(at.curvature, fs.y_tilde);
    return fs;
}

/// World pose of a vehicle at the given path-relative coordinates.
inline VehicleState from_frenet(const ReferencePath& path, double s, double y_tilde,
                                double theta_tilde, double v) {
    const PathPose at = path.pose(s);
    const Vec2 p = at.position + y_tilde * at.normal();
    return {p.x, p.y, wrap_angle(at.heading + theta_tilde), v};
}

inline ErrorRates error_dynamics(const FrenetState& fs, double v, double chi, double chi_r) {
    const double f = detail::tube_factor(chi_r, fs.y_tilde);
    return {v * std::sin(fs.theta_tilde),
            v * (chi - chi_r * std::cos(fs.theta_tilde) / f)};
}

/// Actual-vehicle speed implied by the virtual speed.
inline double constrained_velocity(const FrenetState& fs, double chi_r) {
    detail::check_heading(fs.theta_tilde);
    return fs.v_r * detail::tube_factor(chi_r, fs.y_tilde) / std::cos(fs.theta_tilde);
}

/// Actual acceleration realizing the virtual acceleration `a_r`, plus a
/// proportional term pulling v back onto the speed constraint: with
/// residual r = v_r (1 - chi_r y) / cos(theta) - v, the correction is +k r so
/// that r decays like exp(-k t).
inline double recover_acceleration(const FrenetState& fs, double v, double a_r, double chi,
                                   double chi_r, double chi_r_rate, double k) {
    detail::check_heading(fs.theta_tilde);
    const double f = detail::tube_factor(chi_r, fs.y_tilde);
    const ErrorRates rates = error_dynamics(fs, v, chi, chi_r);
    const double chi_r_dot = chi_r_rate * fs.v_r;
    const double cos_t = std::cos(fs.theta_tilde);
    const double feed = (a_r * f + v * std::sin(fs.theta_tilde) * rates.theta_tilde_dot -
                         fs.v_r * (chi_r_dot * fs.y_tilde + chi_r * rates.y_tilde_dot)) /
                        cos_t;
    const double residual = fs.v_r * f / cos_t - v;
    return feed + k * residual;
}

}  // namespace platoon
