#include "platoon/frenet_bridge.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace platoon {
namespace {

constexpr double kPi = std::numbers::pi;

// Left-turning circle of radius 50 (curvature 0.02).
const ReferencePath& Circle50() {
    static const ReferencePath path = ReferencePath::circle({0, 0}, 50.0, 256);
    return path;
}

const ReferencePath& Straight() {
    static const ReferencePath path = ReferencePath::straight({0, 0}, 0.0, 200.0);
    return path;
}

TEST(ToFrenet, AlignedOnPath) {
    const VehicleState st = from_frenet(Straight(), 30.0, 0.0, 0.0, 10.0);
    const FrenetState fs = to_frenet(Straight(), st, 30.0);
    EXPECT_NEAR(fs.s, 30.0, 1e-12);
    EXPECT_NEAR(fs.y_tilde, 0.0, 1e-12);
    EXPECT_NEAR(fs.theta_tilde, 0.0, 1e-12);
    EXPECT_DOUBLE_EQ(fs.v_r, 10.0);
}

TEST(ToFrenet, VirtualSpeedOnCurve) {
    const VehicleState st = from_frenet(Circle50(), 20.0, 2.0, 0.1, 10.0);
    const FrenetState fs = to_frenet(Circle50(), st, 20.0);
    const long double oracle = 10.0L * std::cos(0.1L) / (1.0L - 0.02L * 2.0L);
    EXPECT_NEAR(fs.v_r, static_cast<double>(oracle), 1e-4);
    EXPECT_NEAR(fs.v_r, 10.3646, 1e-4);
}

TEST(ToFrenet, VirtualSpeedOnStraight) {
    const VehicleState st = from_frenet(Straight(), 50.0, 1.0, 0.2, 10.0);
    const FrenetState fs = to_frenet(Straight(), st, 50.0);
    EXPECT_NEAR(fs.v_r, 9.8007, 1e-4);
    EXPECT_NEAR(fs.theta_tilde, 0.2, 1e-12);
    EXPECT_NEAR(fs.y_tilde, 1.0, 1e-12);
}

TEST(ToFrenet, HeadingDomainViolation) {
    const VehicleState st = from_frenet(Straight(), 50.0, 0.0, kPi / 2.0, 10.0);
    try {
        to_frenet(Straight(), st, 50.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::HeadingDomainViolation);
    }
}

TEST(ToFrenet, TubeViolationAtCircleCenter) {
    try {
        to_frenet(Circle50(), {0.0, 0.0, 0.0, 1.0});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::TubeViolation);
    }
}

TEST(ToFrenet, WorldRoundTrip) {
    const auto pts = testing::s_curve_waypoints();
    const ReferencePath path = build_path(pts, false);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> pick_s(1.0, path.length() - 1.0);
    std::uniform_real_distribution<double> pick_y(-8.0, 8.0);
    std::uniform_real_distribution<double> pick_t(-1.2, 1.2);
    for (int k = 0; k < 200; ++k) {
        const double s = pick_s(rng);
        const VehicleState st = from_frenet(path, s, pick_y(rng), pick_t(rng), 7.5);
        const FrenetState fs = to_frenet(path, st, s);
        const VehicleState back = from_frenet(path, fs.s, fs.y_tilde, fs.theta_tilde, st.v);
        EXPECT_LT(std::hypot(back.x - st.x, back.y - st.y), 1e-6);
        EXPECT_LT(std::abs(wrap_angle(back.theta - st.theta)), 1e-6);
    }
}

TEST(ErrorDynamics, Examples) {
    ErrorRates r = error_dynamics({0, 0, 0, 0}, 7.0, 0.05, 0.02);
    EXPECT_DOUBLE_EQ(r.y_tilde_dot, 0.0);
    EXPECT_NEAR(r.theta_tilde_dot, 7.0 * (0.05 - 0.02), 1e-15);

    r = error_dynamics({0, 2.0, 0.1, 0}, 10.0, 0.03, 0.02);
    const long double yd = 10.0L * std::sin(0.1L);
    const long double td = 10.0L * (0.03L - 0.02L * std::cos(0.1L) / 0.96L);
    EXPECT_NEAR(r.y_tilde_dot, static_cast<double>(yd), 1e-12);
    EXPECT_NEAR(r.theta_tilde_dot, static_cast<double>(td), 1e-12);
    EXPECT_NEAR(r.y_tilde_dot, 0.99833, 1e-5);
    EXPECT_NEAR(r.theta_tilde_dot, 0.092708, 1e-5);

    r = error_dynamics({0, 1.0, 0.3, 0}, 0.0, 0.1, 0.02);
    EXPECT_DOUBLE_EQ(r.y_tilde_dot, 0.0);
    EXPECT_DOUBLE_EQ(r.theta_tilde_dot, 0.0);
}

TEST(ErrorDynamics, TubeViolation) {
    EXPECT_THROW(error_dynamics({0, 60.0, 0.0, 0}, 1.0, 0.0, 0.02), Error);
}

TEST(ConstrainedVelocity, InvertsVirtualSpeed) {
    EXPECT_DOUBLE_EQ(constrained_velocity({0, 0, 0, 10.0}, 0.0), 10.0);
    EXPECT_NEAR(constrained_velocity({0, 2.0, 0.1, 10.3646}, 0.02), 10.0, 1e-3);
    EXPECT_NEAR(constrained_velocity({0, 0.0, 0.2, 9.8007}, 0.0), 10.0, 1e-3);
    EXPECT_THROW(constrained_velocity({0, 0.0, 1.6, 1.0}, 0.0), Error);
}

TEST(RecoverAcceleration, NoCorrectionOnPath) {
    EXPECT_DOUBLE_EQ(recover_acceleration({10, 0, 0, 10}, 10.0, 0.8, 0.0, 0.01, 0.0, 1.0), 0.8);
    EXPECT_DOUBLE_EQ(recover_acceleration({10, 0, 0, 10}, 10.0, 1.5, 0.0, 0.0, 0.0, 1.0), 1.5);
}

TEST(RecoverAcceleration, ResidualDecaysExponentially) {
    // straight path, a_r = 0, v starts 0.5 m/s above the constrained speed
    const double k = 1.0;
    FrenetState fs{20.0, 0.0, 0.0, 10.0};
    VehicleState st = from_frenet(Straight(), fs.s, 0.0, 0.0, 10.5);
    const double dt = 1e-3;
    for (int step = 0; step <= 3000; ++step) {
        const double t = step * dt;
        const double residual = constrained_velocity(fs, 0.0) - st.v;
        if (step % 100 == 0) {
            const double expected = -0.5 * std::exp(-k * t);
            EXPECT_NEAR(residual / expected, 1.0, 0.05) << t;
        }
        const double a = recover_acceleration(fs, st.v, 0.0, 0.0, 0.0, 0.0, k);
        st = integrate_step(st, {a, 0.0}, dt);
        const FrenetState next = to_frenet(Straight(), st, fs.s);
        fs = {next.s, next.y_tilde, next.theta_tilde, fs.v_r};
    }
}

TEST(RecoverAcceleration, TracksConstraintDerivativeWithoutCorrection) {
    // With k = 0 and the state on the constraint, the recovered acceleration
    // is the time derivative of the constrained speed: after a short step the
    // residual stays second order in the step length.
    const auto pts = testing::s_curve_waypoints();
    const ReferencePath path = build_path(pts, false);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> pick_s(50.0, 700.0);
    std::uniform_real_distribution<double> pick_y(-6.0, 6.0);
    std::uniform_real_distribution<double> pick_t(-0.6, 0.6);
    std::uniform_real_distribution<double> pick_u(-0.05, 0.05);
    for (int trial = 0; trial < 20; ++trial) {
        const double s = pick_s(rng);
        const double y = pick_y(rng);
        const double th = pick_t(rng);
        const double chi = pick_u(rng);
        const double a_r = pick_u(rng) * 20.0;
        const PathPose at = path.pose(s);
        FrenetState fs{s, y, th, 9.0};
        const double v = constrained_velocity(fs, at.curvature);
        const VehicleState st = from_frenet(path, s, y, th, v);
        const double a = recover_acceleration(fs, v, a_r, chi, at.curvature, at.curvature_rate, 0.0);
        auto residual_after = [&](double h) {
            VehicleState next = st;
            const int sub = 10;
            for (int k = 0; k < sub; ++k) next = integrate_step(next, {a, chi}, h / sub);
            FrenetState nfs = to_frenet(path, next, s);
            nfs.v_r = fs.v_r + a_r * h;
            return constrained_velocity(nfs, path.pose(nfs.s).curvature) - next.v;
        };
        const double r1 = residual_after(1e-2);
        const double r2 = residual_after(5e-3);
        EXPECT_LT(std::abs(r1), 1e-3);
        // second order: halving the step quarters the residual
        if (std::abs(r1) > 1e-9) {
            EXPECT_NEAR(r1 / r2, 4.0, 0.5) << trial;
        }
    }
}

}  // namespace
}  // namespace platoon
