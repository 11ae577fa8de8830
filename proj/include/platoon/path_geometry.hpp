#pragma once

// Arc-length parameterized reference paths built from waypoints.
//
// A path is a C2 cubic spline in a chord-length parameter u (natural end
// conditions for open paths, periodic for closed ones). Queries are made in
// arc length s; the map s -> u goes through a ~1 cm lookup table followed by a
// few Newton steps on the Gauss-Legendre arc-length integral.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "platoon/error.hpp"

namespace platoon {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(double k, Vec2 a) { return {k * a.x, k * a.y}; }
    friend constexpr bool operator==(Vec2, Vec2) = default;
};

constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double pi = std::numbers::pi;
    constexpr double two_pi = 2.0 * std::numbers::pi;
    double r = std::remainder(a, two_pi);  // [-pi, pi]
    if (r <= -pi) r += two_pi;
    return r;
}

struct PathPose {
    Vec2 position;
    double heading = 0.0;         // tangent angle, (-pi, pi]
    double curvature = 0.0;       // 1/m, positive when turning left
    double curvature_rate = 0.0;  // d(curvature)/ds, 1/m^2

    Vec2 tangent() const { return {std::cos(heading), std::sin(heading)}; }
    /// Left normal: tangent rotated by +90 degrees.
    Vec2 normal() const { return {-std::sin(heading), std::cos(heading)}; }
};

struct Projection {
    double s = 0.0;
    double y_tilde = 0.0;  // positive to the left of the tangent
};

namespace detail {

// Cubic pieces f(t) = a + b t + c t^2 + d t^3 with t = u - knot[i].
struct CubicPiece {
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;

    double value(double t) const { return a + t * (b + t * (c + t * d)); }
    double d1(double t) const { return b + t * (2.0 * c + 3.0 * d * t); }
    double d2(double t) const { return 2.0 * c + 6.0 * d * t; }
    double d3() const { return 6.0 * d; }
};

// Thomas algorithm; sub/sup have the same length as diag (sub[0], sup[n-1] unused).
inline std::vector<double> solve_tridiagonal(std::vector<double> sub, std::vector<double> diag,
                                             std::vector<double> sup, std::vector<double> rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - sup[i] * x[i + 1]) / diag[i];
    return x;
}

// Cyclic tridiagonal system (corner terms sub[0] and sup[n-1]) via Sherman-Morrison.
inline std::vector<double> solve_cyclic_tridiagonal(const std::vector<double>& sub,
                                                    const std::vector<double>& diag,
                                                    const std::vector<double>& sup,
                                                    const std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    const double alpha = sup[n - 1];  // A[n-1][0]
    const double beta = sub[0];       // A[0][n-1]
    const double gamma = -diag[0];
    std::vector<double> d = diag;
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    std::vector<double> x = solve_tridiagonal(sub, d, sup, rhs);
    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = alpha;
    std::vector<double> z = solve_tridiagonal(sub, d, sup, u);
    const double fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i) x[i] -= fact * z[i];
    return x;
}

// Second derivatives of an interpolating cubic spline at the knots.
inline std::vector<double> spline_moments(std::span<const double> h, std::span<const double> y,
                                          bool periodic) {
    const std::size_t segs = h.size();
    std::vector<double> m(segs + 1, 0.0);
    if (periodic) {
        const std::size_t n = segs;  // unknowns M_0..M_{n-1}, M_n = M_0
        std::vector<double> sub(n), diag(n), sup(n), rhs(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t prev = (i + n - 1) % n;
            const double hp = h[prev];
            const double hi = h[i];
            const double y_prev = y[prev];
            const double y_next = y[i + 1];
            sub[i] = hp;
            diag[i] = 2.0 * (hp + hi);
            sup[i] = hi;
            rhs[i] = 6.0 * ((y_next - y[i]) / hi - (y[i] - y_prev) / hp);
        }
        std::vector<double> sol = solve_cyclic_tridiagonal(sub, diag, sup, rhs);
        for (std::size_t i = 0; i < n; ++i) m[i] = sol[i];
        m[n] = m[0];
        return m;
    }
    if (segs < 2) return m;
    const std::size_t n = segs - 1;  // interior knots
    std::vector<double> sub(n), diag(n), sup(n), rhs(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = k + 1;
        sub[k] = h[i - 1];
        diag[k] = 2.0 * (h[i - 1] + h[i]);
        sup[k] = h[i];
        rhs[k] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    std::vector<double> sol = solve_tridiagonal(sub, diag, sup, rhs);
    for (std::size_t k = 0; k < n; ++k) m[k + 1] = sol[k];
    return m;
}

inline std::vector<CubicPiece> spline_pieces(std::span<const double> h, std::span<const double> y,
                                             bool periodic) {
    const std::vector<double> m = spline_moments(h, y, periodic);
    std::vector<CubicPiece> pieces(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double hi = h[i];
        pieces[i].a = y[i];
        pieces[i].b = (y[i + 1] - y[i]) / hi - hi * (2.0 * m[i] + m[i + 1]) / 6.0;
        pieces[i].c = 0.5 * m[i];
        pieces[i].d = (m[i + 1] - m[i]) / (6.0 * hi);
    }
    return pieces;
}

constexpr std::array<double, 5> kGaussNodes = {-0.9061798459386640, -0.5384693101056831, 0.0,
                                               0.5384693101056831, 0.9061798459386640};
constexpr std::array<double, 5> kGaussWeights = {0.2369268850561891, 0.4786286704993665,
                                                 0.5688888888888889, 0.4786286704993665,
                                                 0.2369268850561891};

}  // namespace detail

/// Immutable, arc-length parameterized planar curve. Safe for concurrent reads.
class ReferencePath {
public:
    /// Natural (open) or periodic (closed) cubic spline through the waypoints.
    static ReferencePath from_waypoints(std::span<const Vec2> waypoints, bool closed) {
        const std::size_t min_points = closed ? 3 : 2;
        if (waypoints.size() < min_points) {
            throw Error(ErrorKind::TooFewWaypoints,
                        "need at least " + std::to_string(min_points) + " waypoints, got " +
                            std::to_string(waypoints.size()));
        }
        std::vector<Vec2> pts(waypoints.begin(), waypoints.end());
        if (closed) pts.push_back(pts.front());
        const std::size_t segs = pts.size() - 1;
        std::vector<double> h(segs), xs(pts.size()), ys(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            xs[i] = pts[i].x;
            ys[i] = pts[i].y;
        }
        for (std::size_t i = 0; i < segs; ++i) {
            h[i] = norm(pts[i + 1] - pts[i]);
            if (!(h[i] > 1e-9)) {
                throw Error(ErrorKind::DuplicateWaypoint,
                            "waypoints " + std::to_string(i) + " and " +
                                std::to_string((i + 1) % waypoints.size()) + " coincide");
            }
        }
        ReferencePath path;
        path.closed_ = closed;
        path.waypoints_.assign(waypoints.begin(), waypoints.end());
        path.px_ = detail::spline_pieces(h, xs, closed);
        path.py_ = detail::spline_pieces(h, ys, closed);
        path.knots_.resize(pts.size());
        path.knots_[0] = 0.0;
        for (std::size_t i = 0; i < segs; ++i) path.knots_[i + 1] = path.knots_[i] + h[i];
        path.build_arc_table();
        return path;
    }

    static ReferencePath straight(Vec2 start, double heading, double length) {
        const std::array<Vec2, 2> pts = {
            start, start + length * Vec2{std::cos(heading), std::sin(heading)}};
        return from_waypoints(pts, false);
    }

    /// Counter-clockwise circle starting at center + (radius, 0).
    static ReferencePath circle(Vec2 center, double radius, int samples = 64) {
        std::vector<Vec2> pts;
        pts.reserve(static_cast<std::size_t>(samples));
        for (int k = 0; k < samples; ++k) {
            const double phi = 2.0 * std::numbers::pi * k / samples;
            pts.push_back(center + radius * Vec2{std::cos(phi), std::sin(phi)});
        }
        return from_waypoints(pts, true);
    }

    double length() const { return length_; }
    bool closed() const { return closed_; }
    const std::vector<Vec2>& waypoints() const { return waypoints_; }

    /// Maps s into [0, length) on closed paths; range-checks on open ones.
    double normalize(double s) const {
        if (closed_) {
            double r = std::fmod(s, length_);
            if (r < 0.0) r += length_;
            return r;
        }
        constexpr double slack = 1e-9;
        if (!(s >= -slack && s <= length_ + slack)) {
            throw Error(ErrorKind::OutOfRange, "arc length " + std::to_string(s) +
                                                   " outside [0, " + std::to_string(length_) + "]");
        }
        return std::clamp(s, 0.0, length_);
    }

    /// Signed difference a - b; on closed paths the representative in (-L/2, L/2].
    double arc_difference(double a, double b) const {
        double d = a - b;
        if (!closed_) return d;
        d = std::fmod(d, length_);
        if (d <= -0.5 * length_) d += length_;
        if (d > 0.5 * length_) d -= length_;
        return d;
    }

    /// Forward gap from b to a, in [0, L) on closed paths.
    double arc_gap(double a, double b) const {
        if (!closed_) return a - b;
        double d = std::fmod(a - b, length_);
        if (d < 0.0) d += length_;
        return d;
    }

    PathPose pose(double s) const {
        const auto [seg, u] = locate(normalize(s));
        const double t = u - knots_[seg];
        const auto& cx = px_[seg];
        const auto& cy = py_[seg];
        const double x1 = cx.d1(t), y1 = cy.d1(t);
        const double x2 = cx.d2(t), y2 = cy.d2(t);
        const double x3 = cx.d3(), y3 = cy.d3();
        const double sp2 = x1 * x1 + y1 * y1;
        const double sp = std::sqrt(sp2);
        const double cross12 = x1 * y2 - y1 * x2;
        const double cross13 = x1 * y3 - y1 * x3;
        const double dot12 = x1 * x2 + y1 * y2;
        PathPose out;
        out.position = {cx.value(t), cy.value(t)};
        out.heading = wrap_angle(std::atan2(y1, x1));
        out.curvature = cross12 / (sp2 * sp);
        // d(curvature)/du divided by ds/du
        const double dk_du = (cross13 * sp2 - 3.0 * cross12 * dot12) / (sp2 * sp2 * sp);
        out.curvature_rate = dk_du / sp;
        return out;
    }

    /// Orthogonal projection. With a hint the search starts in
    /// [hint - 10 m, hint + 10 m] and widens to the whole path only when the
    /// nearest point there sits on the window edge; without a hint the whole
    /// path is scanned and equidistant distinct minima are reported as ambiguous.
    Projection project(Vec2 p, std::optional<double> s_hint = std::nullopt) const {
        constexpr double window = 10.0;
        if (s_hint) {
            double lo = *s_hint - window;
            double hi = *s_hint + window;
            if (!closed_) {
                lo = std::max(lo, 0.0);
                hi = std::min(hi, length_);
            }
            if (hi - lo < length_) {
                const Projection local = search(p, lo, hi, false);
                if (is_orthogonal(p, local.s)) return finish(p, local);
            }
            return finish(p, search(p, 0.0, length_, false));
        }
        return finish(p, search(p, 0.0, length_, true));
    }

    /// Sampled s values (knots plus uniform points at `step`), useful for checks and drawing.
    std::vector<double> sample_s(double step) const {
        std::vector<double> out;
        const int n = std::max(1, static_cast<int>(std::ceil(length_ / step)));
        for (int k = 0; k <= n; ++k) out.push_back(length_ * k / n);
        if (closed_) out.pop_back();
        return out;
    }

private:
    struct TableEntry {
        double s;
        std::size_t seg;
        double u;
    };

    double speed(std::size_t seg, double u) const {
        const double t = u - knots_[seg];
        return std::hypot(px_[seg].d1(t), py_[seg].d1(t));
    }

    double gauss(std::size_t seg, double u0, double u1) const {
        const double half = 0.5 * (u1 - u0);
        const double mid = 0.5 * (u1 + u0);
        double sum = 0.0;
        for (std::size_t k = 0; k < detail::kGaussNodes.size(); ++k)
            sum += detail::kGaussWeights[k] * speed(seg, mid + half * detail::kGaussNodes[k]);
        return half * sum;
    }

    double adaptive_gauss(std::size_t seg, double u0, double u1, double whole, int depth) const {
        const double mid = 0.5 * (u0 + u1);
        const double left = gauss(seg, u0, mid);
        const double right = gauss(seg, mid, u1);
        if (depth >= 20 || std::abs(left + right - whole) <= 1e-14 * std::max(1.0, whole))
            return left + right;
        return adaptive_gauss(seg, u0, mid, left, depth + 1) +
               adaptive_gauss(seg, mid, u1, right, depth + 1);
    }

    void build_arc_table() {
        constexpr double resolution = 0.01;
        table_.clear();
        double s = 0.0;
        for (std::size_t seg = 0; seg < px_.size(); ++seg) {
            const double u0 = knots_[seg];
            const double u1 = knots_[seg + 1];
            const double seg_len = adaptive_gauss(seg, u0, u1, gauss(seg, u0, u1), 0);
            const auto pieces = static_cast<std::size_t>(std::max(1.0, std::ceil(seg_len / resolution)));
            for (std::size_t k = 0; k < pieces; ++k) {
                const double ua = u0 + (u1 - u0) * static_cast<double>(k) / pieces;
                const double ub = u0 + (u1 - u0) * static_cast<double>(k + 1) / pieces;
                table_.push_back({s, seg, ua});
                s += adaptive_gauss(seg, ua, ub, gauss(seg, ua, ub), 0);
            }
        }
        length_ = s;
        table_.push_back({s, px_.size() - 1, knots_.back()});
    }

    struct Located {
        std::size_t seg;
        double u;
    };

    Located locate(double s) const {
        auto it = std::upper_bound(table_.begin(), table_.end(), s,
                                   [](double v, const TableEntry& e) { return v < e.s; });
        if (it == table_.begin()) it = std::next(it);
        const TableEntry& e = *std::prev(it);
        if (std::prev(it) == std::prev(table_.end())) return {e.seg, e.u};
        double u = e.u + (s - e.s) / speed(e.seg, e.u);
        for (int iter = 0; iter < 8; ++iter) {
            const double f = e.s + gauss(e.seg, e.u, u) - s;
            const double step = f / speed(e.seg, u);
            u -= step;
            if (std::abs(step) < 1e-14 * std::max(1.0, std::abs(u))) break;
        }
        u = std::clamp(u, knots_[e.seg], knots_[e.seg + 1]);
        return {e.seg, u};
    }

    // Newton on d/ds |p - c(s)|^2 / 2 = -(p - c) . t, with steps capped at the grid spacing.
    Projection refine(Vec2 p, double s, double lo, double hi, bool wraps) const {
        for (int iter = 0; iter < 60; ++iter) {
            const PathPose at = pose(s);
            const Vec2 diff = p - at.position;
            const double along = dot(diff, at.tangent());
            const double lateral = dot(diff, at.normal());
            double denom = 1.0 - at.curvature * lateral;
            if (denom < 0.1) denom = 0.1;
            const double step = std::clamp(along / denom, -0.5, 0.5);
            double next = s + step;
            if (!wraps) next = std::clamp(next, lo, hi);
            const double moved = std::abs(next - s);
            s = next;
            if (moved < 1e-12) break;
        }
        const PathPose at = pose(s);
        return {closed_ ? normalize(s) : s, dot(p - at.position, at.normal())};
    }

    bool is_orthogonal(Vec2 p, double s) const {
        const PathPose at = pose(s);
        const Vec2 diff = p - at.position;
        return std::abs(dot(diff, at.tangent())) <= 1e-6 * std::max(1.0, norm(diff));
    }

    Projection search(Vec2 p, double lo, double hi, bool check_ambiguity) const {
        constexpr double grid_step = 0.5;
        const bool full_loop = closed_ && hi - lo >= length_;
        const int cells = std::max(2, static_cast<int>(std::ceil((hi - lo) / grid_step)));
        const int count = full_loop ? cells : cells + 1;
        std::vector<double> grid_s(static_cast<std::size_t>(count));
        std::vector<double> grid_d(static_cast<std::size_t>(count));
        for (int k = 0; k < count; ++k) {
            const double s = lo + (hi - lo) * k / cells;
            grid_s[k] = s;
            const Vec2 diff = p - pose(s).position;
            grid_d[k] = dot(diff, diff);
        }

        struct Candidate {
            double dist2;
            Projection proj;
        };
        std::vector<Candidate> found;
        for (int k = 0; k < count; ++k) {
            const bool has_prev = full_loop || k > 0;
            const bool has_next = full_loop || k + 1 < count;
            const double prev = has_prev ? grid_d[(k + count - 1) % count] : grid_d[k] + 1.0;
            const double next = has_next ? grid_d[(k + 1) % count] : grid_d[k] + 1.0;
            if (grid_d[k] <= prev && grid_d[k] <= next) {
                const Projection pr = refine(p, grid_s[k], lo, hi, full_loop);
                const Vec2 diff = p - pose(pr.s).position;
                found.push_back({dot(diff, diff), pr});
            }
        }
        if (found.empty()) {
            throw Error(ErrorKind::ProjectionAmbiguous, "no local distance minimum found");
        }
        std::sort(found.begin(), found.end(),
                  [](const Candidate& a, const Candidate& b) { return a.dist2 < b.dist2; });
        const Candidate& best = found.front();
        if (check_ambiguity) {
            for (std::size_t k = 1; k < found.size(); ++k) {
                const bool distinct = std::abs(arc_difference(found[k].proj.s, best.proj.s)) > 1e-4;
                const bool tie = found[k].dist2 - best.dist2 <= 1e-9 * std::max(1.0, best.dist2);
                if (distinct && tie) {
                    throw Error(ErrorKind::ProjectionAmbiguous,
                                "multiple equidistant nearest points on path");
                }
            }
        }
        return best.proj;
    }

    Projection finish(Vec2 p, Projection proj) const {
        const PathPose at = pose(proj.s);
        if (std::abs(at.curvature * proj.y_tilde) >= 1.0) {
            throw Error(ErrorKind::ProjectionAmbiguous,
                        "point outside the projection uniqueness tube");
        }
        if (!closed_ && !is_orthogonal(p, proj.s)) {
            throw Error(ErrorKind::OutOfRange, "point projects beyond the path ends");
        }
        return proj;
    }

    bool closed_ = false;
    double length_ = 0.0;
    std::vector<Vec2> waypoints_;
    std::vector<double> knots_;
    std::vector<detail::CubicPiece> px_;
    std::vector<detail::CubicPiece> py_;
    std::vector<TableEntry> table_;
};

inline ReferencePath build_path(std::span<const Vec2> waypoints, bool closed) {
    return ReferencePath::from_waypoints(waypoints, closed);
}

inline PathPose point_at(const ReferencePath& path, double s) { return path.pose(s); }

inline Projection project(const ReferencePath& path, Vec2 point,
                          std::optional<double> s_hint = std::nullopt) {
    return path.project(point, s_hint);
}

/// A road: reference path plus edge offsets and lateral safety margin.
struct RoadSpec {
    std::shared_ptr<const ReferencePath> path;
    double w_left = 0.0;
    double w_right = 0.0;
    double eps_w = 0.0;

    /// Checks the width ordering and that each edge stays inside the local
    /// radius of curvature on the side the path bends toward.
    void validate() const {
        if (!path) throw Error(ErrorKind::ValidationError, "road has no reference path");
        if (!(eps_w > 0.0))
            throw Error(ErrorKind::ValidationError, "eps_w must be positive");
        if (!(w_left > eps_w) || !(w_right > eps_w))
            throw Error(ErrorKind::ValidationError, "road widths must exceed eps_w");
        for (double s : path->sample_s(0.1)) {
            const double k = path->pose(s).curvature;
            const double inner = k > 0.0 ? w_left : w_right;
            if (std::abs(k) * inner >= 1.0) {
                throw Error(ErrorKind::ValidationError,
                            "road edge exceeds the radius of curvature at s = " + std::to_string(s));
            }
        }
    }
};

}  // namespace platoon
