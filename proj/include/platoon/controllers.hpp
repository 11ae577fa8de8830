#pragma once

// Lateral (curvature) and longitudinal (virtual acceleration) platoon
// controllers. Each is a nominal tracking law plus an additive barrier term
// proportional to the divergent flow of a safety distance; the barrier is
// dropped entirely in Baseline mode.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>

#include "platoon/error.hpp"
#include "platoon/frenet_bridge.hpp"
#include "platoon/path_geometry.hpp"

namespace platoon {

struct Gains {
    double k1 = 0.01;  // lateral position, 1/m^2
    double k2 = 0.1;   // lateral heading, 1/m
    double k3 = 0.1;   // lateral barrier
    double k4 = 0.4;   // longitudinal position, 1/s^2
    double k5 = 0.1;   // longitudinal velocity, 1/s
    double k6 = 2.0;   // longitudinal barrier, 1/s
    double k_constraint = 1.0;  // speed-constraint correction, 1/s

    void validate() const {
        const double all[] = {k1, k2, k3, k4, k5, k6, k_constraint};
        for (double g : all) {
            if (!(g > 0.0) || !std::isfinite(g))
                throw Error(ErrorKind::ValidationError, "all gains must be positive and finite");
        }
    }

    friend bool operator==(const Gains&, const Gains&) = default;
};

enum class ControllerMode { Safe, Baseline };

constexpr std::string_view to_string(ControllerMode mode) {
    return mode == ControllerMode::Safe ? "safe" : "baseline";
}

struct LateralSafety {
    double d_eta_L = 0.0;
    double d_eta_R = 0.0;

    double min() const { return std::min(d_eta_L, d_eta_R); }
};

struct SafetyDistances {
    double d_eta_L = 0.0;
    double d_eta_R = 0.0;
    std::optional<double> d_rho;  // absent for vehicles without a predecessor

    friend bool operator==(const SafetyDistances&, const SafetyDistances&) = default;
};

inline LateralSafety lateral_safety(const RoadSpec& road, double y_tilde) {
    return {road.w_left - y_tilde - road.eps_w, road.w_right + y_tilde - road.eps_w};
}

/// sin(x)/x, continuous through zero.
inline double sinc(double x) {
    if (std::abs(x) < 1e-6) return 1.0 - x * x / 6.0;
    return std::sin(x) / x;
}

/// sign(v) with sign(0) = +1.
inline double drive_sign(double v) { return v < 0.0 ? -1.0 : 1.0; }

inline double lateral_nominal(const FrenetState& fs, double v, double chi_r, const Gains& g) {
    const double f = 1.0 - chi_r * fs.y_tilde;
    if (!(f > 0.0)) throw Error(ErrorKind::TubeViolation, "1 - chi_r * y_tilde <= 0");
    return -g.k1 * sinc(fs.theta_tilde) * fs.y_tilde - g.k2 * drive_sign(v) * fs.theta_tilde +
           chi_r * std::cos(fs.theta_tilde) / f;
}

inline double lateral_barrier(const FrenetState& fs, double v, const LateralSafety& d,
                              const Gains& g) {
    if (!(d.d_eta_L > 0.0) || !(d.d_eta_R > 0.0)) {
        throw Error(ErrorKind::BarrierDomainError,
                    "lateral safety distances must be positive (d_eta_L = " +
                        std::to_string(d.d_eta_L) + ", d_eta_R = " + std::to_string(d.d_eta_R) + ")");
    }
    return -g.k3 * (1.0 / d.d_eta_L + 1.0 / d.d_eta_R) * drive_sign(v) * std::sin(fs.theta_tilde);
}

/// Input curvature for a follower.
inline double lateral_control(const FrenetState& fs, double v, double chi_r,
                              const LateralSafety& d, const Gains& g, ControllerMode mode) {
    const double nominal = lateral_nominal(fs, v, chi_r, g);
    if (mode == ControllerMode::Baseline) return nominal;
    return nominal + lateral_barrier(fs, v, d, g);
}

/// Longitudinal safety distance from the arc-length gap e to the predecessor.
inline double longitudinal_safety(double e, double eps) { return e - eps; }

inline double longitudinal_nominal(double e_tilde, double nu, double a_r_pred, const Gains& g) {
    return g.k4 * e_tilde + g.k5 * nu + a_r_pred;
}

inline double longitudinal_barrier(double d_rho, double d_rho_dot, const Gains& g) {
    if (!(d_rho > 0.0)) {
        throw Error(ErrorKind::BarrierDomainError,
                    "longitudinal safety distance must be positive (d_rho = " +
                        std::to_string(d_rho) + ")");
    }
    return g.k6 * d_rho_dot / d_rho;
}

/// Virtual acceleration for a follower. `d_rho_dot` equals the relative
/// virtual speed nu.
inline double longitudinal_control(double e_tilde, double nu, double d_rho, double d_rho_dot,
                                   double a_r_pred, const Gains& g, ControllerMode mode) {
    const double nominal = longitudinal_nominal(e_tilde, nu, a_r_pred, g);
    if (mode == ControllerMode::Baseline) return nominal;
    return nominal + longitudinal_barrier(d_rho, d_rho_dot, g);
}

/// The leader rides the path exactly at constant speed.
inline FrenetState leader_policy(double t, double v_star, double s0) {
    return {s0 + v_star * t, 0.0, 0.0, v_star};
}

inline FrenetState leader_policy(double t, double v_star, double s0, const ReferencePath& path) {
    FrenetState fs = leader_policy(t, v_star, s0);
    fs.s = path.normalize(fs.s);
    return fs;
}

}  // namespace platoon
