#pragma once

// Kinematic bicycle plant: rear-axle position, heading and speed driven by
// acceleration and path curvature.

#include <cmath>
#include <limits>
#include <optional>
#include <string>

#include "platoon/error.hpp"
#include "platoon/path_geometry.hpp"

namespace platoon {

struct VehicleState {
    double x = 0.0;      // m
    double y = 0.0;      // m
    double theta = 0.0;  // rad, (-pi, pi]
    double v = 0.0;      // m/s

    Vec2 position() const { return {x, y}; }
    friend bool operator==(const VehicleState&, const VehicleState&) = default;
};

struct ControlInput {
    double a = 0.0;    // m/s^2
    double chi = 0.0;  // 1/m

    friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

struct StateDerivative {
    double x_dot = 0.0;
    double y_dot = 0.0;
    double v_dot = 0.0;
    double theta_dot = 0.0;
};

inline StateDerivative derivatives(const VehicleState& state, const ControlInput& input) {
    return {state.v * std::cos(state.theta), state.v * std::sin(state.theta), input.a,
            state.v * input.chi};
}

/// One classical RK4 step with the input held over [0, dt].
inline VehicleState integrate_step(const VehicleState& state, const ControlInput& input,
                                   double dt) {
    if (!(dt > 0.0)) throw Error(ErrorKind::NonPositiveDt, "dt = " + std::to_string(dt));
    auto shifted = [&](const StateDerivative& k, double h) {
        return VehicleState{state.x + h * k.x_dot, state.y + h * k.y_dot,
                            state.theta + h * k.theta_dot, state.v + h * k.v_dot};
    };
    const StateDerivative k1 = derivatives(state, input);
    const StateDerivative k2 = derivatives(shifted(k1, 0.5 * dt), input);
    const StateDerivative k3 = derivatives(shifted(k2, 0.5 * dt), input);
    const StateDerivative k4 = derivatives(shifted(k3, dt), input);
    const double w = dt / 6.0;
    VehicleState next;
    next.x = state.x + w * (k1.x_dot + 2.0 * k2.x_dot + 2.0 * k3.x_dot + k4.x_dot);
    next.y = state.y + w * (k1.y_dot + 2.0 * k2.y_dot + 2.0 * k3.y_dot + k4.y_dot);
    next.theta = wrap_angle(state.theta +
                            w * (k1.theta_dot + 2.0 * k2.theta_dot + 2.0 * k3.theta_dot + k4.theta_dot));
    next.v = state.v + w * (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot);
    return next;
}

/// Optional actuator limits; absent bounds mean unconstrained.
struct ActuatorLimits {
    std::optional<double> a_max;
    std::optional<double> delta_max;
};

/// Front-wheel steering angle producing curvature `chi` on a bicycle with
/// the given wheelbase. Exceeding `delta_max` is reported, never clipped.
inline double steering_angle(double chi, double wheelbase,
                             std::optional<double> delta_max = std::nullopt) {
    const double delta = std::atan(chi * wheelbase);
    if (delta_max && std::abs(delta) > *delta_max) {
        throw Error(ErrorKind::SteeringSaturated,
                    "steering " + std::to_string(delta) + " rad exceeds " +
                        std::to_string(*delta_max));
    }
    return delta;
}

}  // namespace platoon
