#pragma once

// Independent oracles used only by the test suites.

#include <cmath>
#include <numbers>
#include <vector>

#include "platoon/path_geometry.hpp"

namespace platoon::testing {

/// Gentle S-curve: y = 40 sin(2 pi x / 400) sampled every 25 m on [0, 800].
inline std::vector<Vec2> s_curve_waypoints() {
    std::vector<Vec2> pts;
    for (int k = 0; k <= 32; ++k) {
        const double x = 25.0 * k;
        pts.push_back({x, 40.0 * std::sin(2.0 * std::numbers::pi * x / 400.0)});
    }
    return pts;
}

/// Natural cubic spline in chord length, solved by dense Gaussian elimination
/// and sampled densely in the spline parameter; arc length is accumulated
/// from polyline chords. Shares no code with ReferencePath.
class DenseSplineOracle {
public:
    explicit DenseSplineOracle(const std::vector<Vec2>& pts, int samples_per_segment = 20000) {
        const std::size_t n = pts.size();
        std::vector<double> u(n, 0.0);
        for (std::size_t i = 1; i < n; ++i)
            u[i] = u[i - 1] + std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
        mx_ = moments(u, pts, true);
        my_ = moments(u, pts, false);
        u_ = u;
        pts_ = pts;
        double s = 0.0;
        Vec2 prev = pts.front();
        samples_.push_back({0.0, prev});
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (int k = 1; k <= samples_per_segment; ++k) {
                const double uu = u[i] + (u[i + 1] - u[i]) * k / samples_per_segment;
                const Vec2 q = eval(i, uu);
                s += std::hypot(q.x - prev.x, q.y - prev.y);
                samples_.push_back({s, q});
                prev = q;
            }
        }
    }

    double length() const { return samples_.back().s; }

    /// Position at arc length s by linear interpolation in the dense table.
    Vec2 at(double s) const {
        std::size_t lo = 0, hi = samples_.size() - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            (samples_[mid].s <= s ? lo : hi) = mid;
        }
        const auto& a = samples_[lo];
        const auto& b = samples_[hi];
        const double t = (s - a.s) / (b.s - a.s);
        return {a.p.x + t * (b.p.x - a.p.x), a.p.y + t * (b.p.y - a.p.y)};
    }

private:
    struct Sample {
        double s;
        Vec2 p;
    };

    static std::vector<double> moments(const std::vector<double>& u, const std::vector<Vec2>& pts,
                                       bool use_x) {
        const std::size_t n = pts.size();
        auto val = [&](std::size_t i) { return use_x ? pts[i].x : pts[i].y; };
        // Full (n x n) system with natural end rows.
        std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
        a[0][0] = 1.0;
        a[n - 1][n - 1] = 1.0;
        for (std::size_t i = 1; i + 1 < n; ++i) {
            const double h0 = u[i] - u[i - 1];
            const double h1 = u[i + 1] - u[i];
            a[i][i - 1] = h0;
            a[i][i] = 2.0 * (h0 + h1);
            a[i][i + 1] = h1;
            a[i][n] = 6.0 * ((val(i + 1) - val(i)) / h1 - (val(i) - val(i - 1)) / h0);
        }
        for (std::size_t c = 0; c < n; ++c) {
            std::size_t piv = c;
            for (std::size_t r = c + 1; r < n; ++r)
                if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
            std::swap(a[c], a[piv]);
            for (std::size_t r = 0; r < n; ++r) {
                if (r == c) continue;
                const double f = a[r][c] / a[c][c];
                for (std::size_t k = c; k <= n; ++k) a[r][k] -= f * a[c][k];
            }
        }
        std::vector<double> m(n);
        for (std::size_t i = 0; i < n; ++i) m[i] = a[i][n] / a[i][i];
        return m;
    }

    Vec2 eval(std::size_t i, double uu) const {
        const double h = u_[i + 1] - u_[i];
        const double A = (u_[i + 1] - uu) / h;
        const double B = (uu - u_[i]) / h;
        auto f = [&](const std::vector<double>& m, double y0, double y1) {
            return A * y0 + B * y1 + ((A * A * A - A) * m[i] + (B * B * B - B) * m[i + 1]) * h * h / 6.0;
        };
        return {f(mx_, pts_[i].x, pts_[i + 1].x), f(my_, pts_[i].y, pts_[i + 1].y)};
    }

    std::vector<double> u_;
    std::vector<Vec2> pts_;
    std::vector<double> mx_, my_;
    std::vector<Sample> samples_;
};

}  // namespace platoon::testing
