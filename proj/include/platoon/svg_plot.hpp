#pragma once

// Self-contained SVG line plots of simulation logs. Every figure uses a fixed
// 800x600 viewBox, a grid of panels and one legend entry per vehicle.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "platoon/error.hpp"
#include "platoon/sim_engine.hpp"

namespace platoon::svg {

struct Series {
    std::string color;
    bool dashed = false;
    std::vector<Vec2> points;  // a non-finite coordinate breaks the line
    double width = 1.5;
};

struct Panel {
    std::string title;
    std::string x_label;
    std::vector<Series> series;
    bool equal_aspect = false;
    bool zero_line = false;
};

struct LegendEntry {
    std::string label;
    std::string color;
    bool dashed = false;
};

struct Figure {
    std::string title;
    int cols = 2;
    std::vector<Panel> panels;
    std::vector<LegendEntry> legend;
};

inline constexpr double kWidth = 800.0;
inline constexpr double kHeight = 600.0;

inline const std::string& vehicle_color(std::size_t i) {
    static const std::vector<std::string> palette{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                                  "#9467bd", "#8c564b", "#e377c2", "#17becf"};
    return palette[i % palette.size()];
}

inline std::string escape(std::string_view text) {
    std::string out;
    for (char c : text) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

/// Round step (1, 2 or 5 times a power of ten) giving about `target` ticks.
inline double nice_step(double span, int target = 5) {
    if (!(span > 0.0) || !std::isfinite(span)) return 1.0;
    const double raw = span / target;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double r = raw / mag;
    const double m = r < 1.5 ? 1.0 : r < 3.0 ? 2.0 : r < 7.0 ? 5.0 : 10.0;
    return m * mag;
}

struct Range {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();

    void add(double v) {
        if (!std::isfinite(v)) return;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    bool empty() const { return lo > hi; }
    double span() const { return hi - lo; }

    void pad() {
        if (empty()) {
            lo = -1.0;
            hi = 1.0;
        } else if (span() <= 1e-12 * std::max(1.0, std::abs(lo))) {
            const double d = std::max(1.0, std::abs(lo)) * 0.05;
            lo -= d;
            hi += d;
        } else {
            const double d = 0.04 * span();
            lo -= d;
            hi += d;
        }
    }
};

namespace detail {

struct Box {
    double x0, y0, w, h;
};

inline std::string fmt_tick(double v, double step) {
    if (std::abs(v) < step * 1e-9) v = 0.0;
    return fmt::format("{:g}", v);
}

inline void render_panel(std::string& out, const Panel& panel, Box box) {
    Range xr, yr;
    for (const Series& s : panel.series) {
        for (const Vec2& p : s.points) {
            if (std::isfinite(p.x) && std::isfinite(p.y)) {
                xr.add(p.x);
                yr.add(p.y);
            }
        }
    }
    if (panel.zero_line) yr.add(0.0);
    xr.pad();
    yr.pad();
    if (panel.equal_aspect) {
        const double sx = xr.span() / box.w;
        const double sy = yr.span() / box.h;
        if (sx > sy) {
            const double extra = (sx * box.h - yr.span()) / 2.0;
            yr.lo -= extra;
            yr.hi += extra;
        } else {
            const double extra = (sy * box.w - xr.span()) / 2.0;
            xr.lo -= extra;
            xr.hi += extra;
        }
    }
    auto px = [&](double x) { return box.x0 + (x - xr.lo) / xr.span() * box.w; };
    auto py = [&](double y) { return box.y0 + box.h - (y - yr.lo) / yr.span() * box.h; };

    out += fmt::format(
        R"(<rect x="{:.1f}" y="{:.1f}" width="{:.1f}" height="{:.1f}" fill="white" stroke="#444" stroke-width="1"/>)"
        "\n",
        box.x0, box.y0, box.w, box.h);
    out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="13" text-anchor="middle">{}</text>)"
                       "\n",
                       box.x0 + box.w / 2.0, box.y0 - 6.0, escape(panel.title));

    const double xs = nice_step(xr.span());
    for (double v = std::ceil(xr.lo / xs) * xs; v <= xr.hi; v += xs) {
        out += fmt::format(
            R"(<line x1="{0:.1f}" y1="{1:.1f}" x2="{0:.1f}" y2="{2:.1f}" stroke="#ddd" stroke-width="0.5"/>)"
            R"(<text x="{0:.1f}" y="{3:.1f}" font-size="10" text-anchor="middle">{4}</text>)"
            "\n",
            px(v), box.y0, box.y0 + box.h, box.y0 + box.h + 12.0, fmt_tick(v, xs));
    }
    const double ys = nice_step(yr.span());
    for (double v = std::ceil(yr.lo / ys) * ys; v <= yr.hi; v += ys) {
        out += fmt::format(
            R"(<line x1="{0:.1f}" y1="{1:.1f}" x2="{2:.1f}" y2="{1:.1f}" stroke="#ddd" stroke-width="0.5"/>)"
            R"(<text x="{3:.1f}" y="{4:.1f}" font-size="10" text-anchor="end">{5}</text>)"
            "\n",
            box.x0, py(v), box.x0 + box.w, box.x0 - 4.0, py(v) + 3.5, fmt_tick(v, ys));
    }
    if (panel.zero_line) {
        out += fmt::format(
            R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="#000" stroke-width="1"/>)"
            "\n",
            box.x0, py(0.0), box.x0 + box.w, py(0.0));
    }
    if (!panel.x_label.empty()) {
        out += fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="11" text-anchor="middle">{}</text>)"
                           "\n",
                           box.x0 + box.w / 2.0, box.y0 + box.h + 25.0, escape(panel.x_label));
    }

    for (const Series& s : panel.series) {
        std::string pts;
        auto flush = [&] {
            if (pts.empty()) return;
            out += fmt::format(R"(<polyline fill="none" stroke="{}" stroke-width="{}"{} points="{}"/>)"
                               "\n",
                               s.color, s.width, s.dashed ? R"( stroke-dasharray="6,4")" : "", pts);
            pts.clear();
        };
        for (const Vec2& p : s.points) {
            if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
                flush();
                continue;
            }
            if (!pts.empty()) pts += ' ';
            pts += fmt::format("{:.2f},{:.2f}", px(p.x), py(p.y));
        }
        flush();
    }
}

}  // namespace detail

inline std::string render(const Figure& fig) {
    std::string out = fmt::format(
        R"(<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {0} {1}" width="{0}" height="{1}" font-family="sans-serif">)"
        "\n"
        R"(<rect width="{0}" height="{1}" fill="white"/>)"
        "\n"
        R"(<text x="{2}" y="22" font-size="16" text-anchor="middle">{3}</text>)"
        "\n",
        kWidth, kHeight, kWidth / 2.0, escape(fig.title));

    const int cols = std::max(1, fig.cols);
    const int rows = std::max<int>(1, (static_cast<int>(fig.panels.size()) + cols - 1) / cols);
    const double top = 36.0, bottom = 34.0;
    const double cell_w = kWidth / cols;
    const double cell_h = (kHeight - top - bottom) / rows;
    for (std::size_t k = 0; k < fig.panels.size(); ++k) {
        const int r = static_cast<int>(k) / cols;
        const int c = static_cast<int>(k) % cols;
        const detail::Box box{c * cell_w + 52.0, top + r * cell_h + 18.0, cell_w - 64.0, cell_h - 50.0};
        detail::render_panel(out, fig.panels[k], box);
    }

    double x = 20.0;
    const double y = kHeight - 14.0;
    for (const LegendEntry& e : fig.legend) {
        out += fmt::format(
            R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="{}" stroke-width="2"{}/>)"
            R"(<text x="{:.1f}" y="{:.1f}" font-size="12">{}</text>)"
            "\n",
            x, y - 4.0, x + 22.0, y - 4.0, e.color, e.dashed ? R"( stroke-dasharray="6,4")" : "",
            x + 26.0, y, escape(e.label));
        x += 36.0 + 7.0 * static_cast<double>(e.label.size());
    }
    out += "</svg>\n";
    return out;
}

inline void write(const std::filesystem::path& path, const Figure& fig) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot write {}", path.string()));
    out << render(fig);
    if (!out) throw Error(ErrorKind::IoError, fmt::format("write to {} failed", path.string()));
}

// Figures built from logs. Each log is drawn solid, or dashed when several
// are overlaid (the second and later logs).

struct Trace {
    const SimLog* log = nullptr;
    std::string label;  // "safe", "baseline", ...
};

using Channel = std::function<std::optional<double>(const VehicleRecord&)>;

namespace detail {

inline Panel channel_panel(const std::vector<Trace>& traces, std::string title, const Channel& value,
                           bool followers_only, bool zero_line = false) {
    Panel panel{std::move(title), "t [s]", {}, false, zero_line};
    for (std::size_t k = 0; k < traces.size(); ++k) {
        const SimLog& log = *traces[k].log;
        const std::size_t n = log.config.vehicles.size();
        for (std::size_t i = followers_only ? 1 : 0; i < n; ++i) {
            Series s{vehicle_color(i), k > 0, {}};
            s.points.reserve(log.records.size());
            for (const StepRecord& step : log.records) {
                const std::optional<double> v = value(step.vehicles[i]);
                s.points.push_back({step.t, v.value_or(std::numeric_limits<double>::quiet_NaN())});
            }
            panel.series.push_back(std::move(s));
        }
    }
    return panel;
}

inline std::vector<LegendEntry> legend(const std::vector<Trace>& traces, bool followers_only) {
    std::vector<LegendEntry> out;
    const std::size_t n = traces.front().log->config.vehicles.size();
    for (std::size_t i = followers_only ? 1 : 0; i < n; ++i)
        out.push_back({fmt::format("vehicle {}", i + 1), vehicle_color(i), false});
    if (traces.size() > 1) {
        for (std::size_t k = 0; k < traces.size(); ++k)
            out.push_back({traces[k].label, "#444", k > 0});
    }
    return out;
}

inline std::string figure_title(const std::vector<Trace>& traces, std::string_view what) {
    std::string modes;
    for (const Trace& t : traces) modes += (modes.empty() ? "" : " vs ") + t.label;
    return fmt::format("{}: {} ({})", traces.front().log->config.name, what, modes);
}

}  // namespace detail

inline Figure errors_figure(const std::vector<Trace>& traces) {
    Figure fig{detail::figure_title(traces, "tracking errors"), 2, {}, detail::legend(traces, true)};
    fig.panels.push_back(detail::channel_panel(
        traces, "lateral offset y~ [m]", [](const VehicleRecord& r) { return r.frenet.y_tilde; }, true, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "heading error theta~ [rad]", [](const VehicleRecord& r) { return r.frenet.theta_tilde; }, true, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "speed error v - v* [m/s]", [](const VehicleRecord& r) { return r.v_error; }, true, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "spacing error e~ [m]", [](const VehicleRecord& r) { return r.e_tilde; }, true, true));
    return fig;
}

inline Figure safety_figure(const std::vector<Trace>& traces) {
    Figure fig{detail::figure_title(traces, "safety distances"), 2, {}, detail::legend(traces, false)};
    fig.panels.push_back(detail::channel_panel(
        traces, "d_rho [m]", [](const VehicleRecord& r) { return r.safety.d_rho; }, true, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "d_eta_L [m]", [](const VehicleRecord& r) { return r.safety.d_eta_L; }, false, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "d_eta_R [m]", [](const VehicleRecord& r) { return r.safety.d_eta_R; }, false, true));
    return fig;
}

inline Figure inputs_figure(const std::vector<Trace>& traces) {
    Figure fig{detail::figure_title(traces, "inputs"), 2, {}, detail::legend(traces, false)};
    fig.panels.push_back(detail::channel_panel(
        traces, "acceleration a [m/s^2]", [](const VehicleRecord& r) { return r.input.a; }, false, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "curvature chi [1/m]", [](const VehicleRecord& r) { return r.input.chi; }, false, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "steering angle delta [rad]", [](const VehicleRecord& r) { return r.delta; }, false, true));
    fig.panels.push_back(detail::channel_panel(
        traces, "virtual speed v_r [m/s]", [](const VehicleRecord& r) { return r.frenet.v_r; }, false));
    return fig;
}

inline Figure trajectory_figure(const std::vector<Trace>& traces) {
    Figure fig{detail::figure_title(traces, "trajectories"), 1, {}, detail::legend(traces, false)};
    Panel panel{"x-y [m]", "", {}, true, false};
    const PlatoonConfig& cfg = traces.front().log->config;
    for (const Lane& lane : cfg.lanes) {
        const ReferencePath path = lane.source.build();
        Series center{"#999", true, {}, 0.8};
        Series left{"#555", false, {}, 1.0};
        Series right{"#555", false, {}, 1.0};
        const double step = path.length() / 600.0;
        std::vector<double> samples = path.sample_s(step);
        if (path.closed()) samples.push_back(path.length());
        for (double s : samples) {
            const PathPose at = path.pose(s);
            center.points.push_back(at.position);
            left.points.push_back(at.position + lane.w_left * at.normal());
            right.points.push_back(at.position - lane.w_right * at.normal());
        }
        panel.series.push_back(std::move(center));
        panel.series.push_back(std::move(left));
        panel.series.push_back(std::move(right));
    }
    for (std::size_t k = 0; k < traces.size(); ++k) {
        const SimLog& log = *traces[k].log;
        for (std::size_t i = 0; i < log.config.vehicles.size(); ++i) {
            Series s{vehicle_color(i), k > 0, {}};
            for (const StepRecord& step : log.records) s.points.push_back(step.vehicles[i].state.position());
            panel.series.push_back(std::move(s));
        }
    }
    fig.panels.push_back(std::move(panel));
    return fig;
}

}  // namespace platoon::svg
