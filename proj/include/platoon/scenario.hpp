#pragma once

// Scenario files: line-oriented `key = value` text with [road], [vehicle] and
// [merge] sections. See README.md for the grammar.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

#include "platoon/error.hpp"
#include "platoon/sim_engine.hpp"

namespace platoon {

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

struct Entry {
    std::string value;
    int line = 0;
};

struct Section {
    std::string kind;  // "", "road", "vehicle" or "merge"
    int line = 0;
    std::map<std::string, Entry> values;
    std::vector<Entry> points;  // repeated `point` lines, roads only

    const Entry* find(const std::string& key) const {
        const auto it = values.find(key);
        return it == values.end() ? nullptr : &it->second;
    }
};

[[noreturn]] inline void parse_fail(int line, const std::string& msg) {
    throw Error(ErrorKind::ParseError, fmt::format("line {}: {}", line, msg));
}

inline double to_number(const Entry& e, const std::string& key) {
    const std::string_view text = trim(e.value);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        parse_fail(e.line, fmt::format("'{}' is not a number for {}", e.value, key));
    return out;
}

inline bool to_bool(const Entry& e, const std::string& key) {
    if (e.value == "true") return true;
    if (e.value == "false") return false;
    parse_fail(e.line, fmt::format("{} must be true or false", key));
}

inline Vec2 to_point(const Entry& e, const std::string& key) {
    const auto comma = e.value.find(',');
    if (comma == std::string::npos) parse_fail(e.line, fmt::format("{} needs 'x, y'", key));
    const Entry x{std::string(trim(std::string_view(e.value).substr(0, comma))), e.line};
    const Entry y{std::string(trim(std::string_view(e.value).substr(comma + 1))), e.line};
    return {to_number(x, key), to_number(y, key)};
}

inline const std::set<std::string>& allowed_keys(const std::string& kind) {
    static const std::map<std::string, std::set<std::string>> keys{
        {"",
         {"name", "mode", "hold", "duration", "dt_control", "dt_sim", "e_star", "v_star", "eps",
          "eps1", "k1", "k2", "k3", "k4", "k5", "k6", "k_constraint"}},
        {"road",
         {"id", "path", "start", "heading", "length", "center", "radius", "samples", "closed",
          "point", "w_left", "w_right", "eps_w"}},
        {"vehicle", {"road", "s", "y_tilde", "theta_tilde", "v", "wheelbase", "predecessor"}},
        {"merge", {"vehicle", "ahead", "road", "gap_below", "successor"}},
    };
    return keys.at(kind);
}

inline std::vector<Section> split_sections(std::istream& in) {
    std::vector<Section> sections(1);
    std::string raw;
    int line = 0;
    while (std::getline(in, raw)) {
        ++line;
        std::string_view text = raw;
        if (const auto hash = text.find('#'); hash != std::string_view::npos) text = text.substr(0, hash);
        text = trim(text);
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') parse_fail(line, "unterminated section header");
            const std::string kind(trim(text.substr(1, text.size() - 2)));
            if (kind != "road" && kind != "vehicle" && kind != "merge")
                parse_fail(line, fmt::format("unknown section [{}]", kind));
            sections.push_back({kind, line, {}, {}});
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string_view::npos) parse_fail(line, "expected 'key = value'");
        const std::string key(trim(text.substr(0, eq)));
        const std::string value(trim(text.substr(eq + 1)));
        Section& sec = sections.back();
        if (!allowed_keys(sec.kind).count(key)) {
            parse_fail(line, sec.kind.empty() ? fmt::format("unknown key '{}'", key)
                                              : fmt::format("unknown key '{}' in [{}]", key, sec.kind));
        }
        if (value.empty()) parse_fail(line, fmt::format("{} has no value", key));
        if (key == "point") {
            sec.points.push_back({value, line});
            continue;
        }
        if (!sec.values.emplace(key, Entry{value, line}).second)
            parse_fail(line, fmt::format("duplicate key '{}'", key));
    }
    return sections;
}

}  // namespace detail

inline PlatoonConfig parse_scenario(std::istream& in) {
    using detail::Entry;
    using detail::Section;
    const std::vector<Section> sections = detail::split_sections(in);

    auto required = [](const Section& sec, const std::string& key) -> const Entry& {
        if (const Entry* e = sec.find(key)) return *e;
        detail::parse_fail(sec.line, fmt::format("[{}] is missing '{}'", sec.kind, key));
    };
    auto number_or = [](const Section& sec, const std::string& key, double fallback) {
        const Entry* e = sec.find(key);
        return e ? detail::to_number(*e, key) : fallback;
    };

    PlatoonConfig cfg;
    const Section& top = sections.front();
    if (const Entry* e = top.find("name")) cfg.name = e->value;
    if (const Entry* e = top.find("mode")) {
        if (e->value == "safe") cfg.mode = ControllerMode::Safe;
        else if (e->value == "baseline") cfg.mode = ControllerMode::Baseline;
        else detail::parse_fail(e->line, "mode must be safe or baseline");
    }
    if (const Entry* e = top.find("hold")) {
        if (e->value == "zoh") cfg.hold = InputHold::ZeroOrder;
        else if (e->value == "continuous") cfg.hold = InputHold::Continuous;
        else detail::parse_fail(e->line, "hold must be zoh or continuous");
    }
    cfg.duration = number_or(top, "duration", cfg.duration);
    cfg.dt_control = number_or(top, "dt_control", cfg.dt_control);
    cfg.dt_sim = number_or(top, "dt_sim", cfg.dt_sim);
    cfg.e_star = number_or(top, "e_star", cfg.e_star);
    cfg.v_star = number_or(top, "v_star", cfg.v_star);
    cfg.eps = number_or(top, "eps", cfg.eps);
    cfg.eps1 = number_or(top, "eps1", cfg.eps1);
    cfg.gains.k1 = number_or(top, "k1", cfg.gains.k1);
    cfg.gains.k2 = number_or(top, "k2", cfg.gains.k2);
    cfg.gains.k3 = number_or(top, "k3", cfg.gains.k3);
    cfg.gains.k4 = number_or(top, "k4", cfg.gains.k4);
    cfg.gains.k5 = number_or(top, "k5", cfg.gains.k5);
    cfg.gains.k6 = number_or(top, "k6", cfg.gains.k6);
    cfg.gains.k_constraint = number_or(top, "k_constraint", cfg.gains.k_constraint);

    std::map<std::string, std::size_t> road_index;
    std::size_t vehicle_count = 0;
    for (const Section& sec : sections) vehicle_count += sec.kind == "vehicle";

    auto vehicle_ref = [&](const Entry& e, const std::string& key) -> std::optional<std::size_t> {
        if (e.value == "none") return std::nullopt;
        const double id = detail::to_number(e, key);
        if (id != std::floor(id) || id < 1 || id > static_cast<double>(vehicle_count))
            detail::parse_fail(e.line, fmt::format("{} must be a vehicle number 1..{} or none", key,
                                                   vehicle_count));
        return static_cast<std::size_t>(id) - 1;
    };
    auto road_ref = [&](const Entry& e) {
        const auto it = road_index.find(e.value);
        if (it == road_index.end()) detail::parse_fail(e.line, fmt::format("unknown road '{}'", e.value));
        return it->second;
    };

    for (const Section& sec : sections) {
        if (sec.kind == "road") {
            Lane lane;
            lane.id = required(sec, "id").value;
            if (road_index.count(lane.id))
                detail::parse_fail(sec.line, fmt::format("road '{}' defined twice", lane.id));
            const Entry& kind = required(sec, "path");
            PathSource& src = lane.source;
            const std::set<std::string>* own = nullptr;
            static const std::set<std::string> straight_keys{"start", "heading", "length"};
            static const std::set<std::string> circle_keys{"center", "radius", "samples"};
            static const std::set<std::string> waypoint_keys{"closed", "point"};
            if (kind.value == "straight") {
                src.kind = PathSource::Kind::Straight;
                src.start = detail::to_point(required(sec, "start"), "start");
                src.heading = number_or(sec, "heading", 0.0);
                src.length = detail::to_number(required(sec, "length"), "length");
                own = &straight_keys;
            } else if (kind.value == "circle") {
                src.kind = PathSource::Kind::Circle;
                src.center = detail::to_point(required(sec, "center"), "center");
                src.radius = detail::to_number(required(sec, "radius"), "radius");
                const double samples = number_or(sec, "samples", 64.0);
                if (samples != std::floor(samples) || samples < 3)
                    detail::parse_fail(sec.find("samples")->line, "samples must be an integer >= 3");
                src.samples = static_cast<int>(samples);
                own = &circle_keys;
            } else if (kind.value == "waypoints") {
                src.kind = PathSource::Kind::Waypoints;
                if (const Entry* e = sec.find("closed")) src.closed = detail::to_bool(*e, "closed");
                for (const Entry& p : sec.points) src.points.push_back(detail::to_point(p, "point"));
                own = &waypoint_keys;
            } else {
                detail::parse_fail(kind.line, "path must be straight, circle or waypoints");
            }
            for (const auto& [key, entry] : sec.values) {
                const bool shape_key = straight_keys.count(key) || circle_keys.count(key) ||
                                       waypoint_keys.count(key);
                if (shape_key && !own->count(key))
                    detail::parse_fail(entry.line, fmt::format("'{}' does not apply to {} roads", key, kind.value));
            }
            if (!sec.points.empty() && src.kind != PathSource::Kind::Waypoints)
                detail::parse_fail(sec.points.front().line, "'point' only applies to waypoint roads");
            lane.w_left = detail::to_number(required(sec, "w_left"), "w_left");
            lane.w_right = detail::to_number(required(sec, "w_right"), "w_right");
            lane.eps_w = detail::to_number(required(sec, "eps_w"), "eps_w");
            road_index[lane.id] = cfg.lanes.size();
            cfg.lanes.push_back(std::move(lane));
        }
    }

    for (const Section& sec : sections) {
        if (sec.kind == "vehicle") {
            VehicleConfig v;
            const std::size_t index = cfg.vehicles.size();
            if (const Entry* e = sec.find("road")) {
                v.lane = road_ref(*e);
            } else if (cfg.lanes.size() != 1) {
                detail::parse_fail(sec.line, "[vehicle] must name its road when several are defined");
            }
            v.s = detail::to_number(required(sec, "s"), "s");
            v.y_tilde = number_or(sec, "y_tilde", 0.0);
            v.theta_tilde = number_or(sec, "theta_tilde", 0.0);
            v.v = detail::to_number(required(sec, "v"), "v");
            v.wheelbase = number_or(sec, "wheelbase", v.wheelbase);
            if (const Entry* e = sec.find("predecessor")) {
                v.predecessor = vehicle_ref(*e, "predecessor");
            } else if (index > 0) {
                v.predecessor = index - 1;
            }
            cfg.vehicles.push_back(v);
        } else if (sec.kind == "merge") {
            MergeEvent m;
            const auto vehicle = vehicle_ref(required(sec, "vehicle"), "vehicle");
            const auto ahead = vehicle_ref(required(sec, "ahead"), "ahead");
            if (!vehicle || !ahead) detail::parse_fail(sec.line, "[merge] vehicle and ahead are required");
            m.vehicle = *vehicle;
            m.ahead = *ahead;
            m.lane = road_ref(required(sec, "road"));
            m.gap_below = detail::to_number(required(sec, "gap_below"), "gap_below");
            if (const Entry* e = sec.find("successor")) m.successor = vehicle_ref(*e, "successor");
            cfg.merges.push_back(m);
        }
    }

    cfg.validate();
    return cfg;
}

inline PlatoonConfig parse_scenario(const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in);
}

inline PlatoonConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, fmt::format("cannot open {}", path.string()));
    try {
        return parse_scenario(in);
    } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("{}: {}", path.string(), e.what()));
    }
}

/// Text that parse_scenario reads back into an equal configuration.
inline std::string serialize_scenario(const PlatoonConfig& cfg) {
    std::string out;
    auto line = [&](std::string_view key, const auto& value) {
        out += fmt::format("{} = {}\n", key, value);
    };
    line("name", cfg.name);
    line("mode", to_string(cfg.mode));
    line("hold", to_string(cfg.hold));
    line("duration", cfg.duration);
    line("dt_control", cfg.dt_control);
    line("dt_sim", cfg.dt_sim);
    line("e_star", cfg.e_star);
    line("v_star", cfg.v_star);
    line("eps", cfg.eps);
    line("eps1", cfg.eps1);
    line("k1", cfg.gains.k1);
    line("k2", cfg.gains.k2);
    line("k3", cfg.gains.k3);
    line("k4", cfg.gains.k4);
    line("k5", cfg.gains.k5);
    line("k6", cfg.gains.k6);
    line("k_constraint", cfg.gains.k_constraint);

    for (const Lane& lane : cfg.lanes) {
        out += "\n[road]\n";
        line("id", lane.id);
        const PathSource& src = lane.source;
        switch (src.kind) {
            case PathSource::Kind::Straight:
                line("path", "straight");
                out += fmt::format("start = {}, {}\n", src.start.x, src.start.y);
                line("heading", src.heading);
                line("length", src.length);
                break;
            case PathSource::Kind::Circle:
                line("path", "circle");
                out += fmt::format("center = {}, {}\n", src.center.x, src.center.y);
                line("radius", src.radius);
                line("samples", src.samples);
                break;
            case PathSource::Kind::Waypoints:
                line("path", "waypoints");
                line("closed", src.closed ? "true" : "false");
                for (const Vec2& p : src.points) out += fmt::format("point = {}, {}\n", p.x, p.y);
                break;
        }
        line("w_left", lane.w_left);
        line("w_right", lane.w_right);
        line("eps_w", lane.eps_w);
    }

    for (const VehicleConfig& v : cfg.vehicles) {
        out += "\n[vehicle]\n";
        line("road", cfg.lanes[v.lane].id);
        line("s", v.s);
        line("y_tilde", v.y_tilde);
        line("theta_tilde", v.theta_tilde);
        line("v", v.v);
        line("wheelbase", v.wheelbase);
        line("predecessor", v.predecessor ? fmt::format("{}", *v.predecessor + 1) : "none");
    }

    for (const MergeEvent& m : cfg.merges) {
        out += "\n[merge]\n";
        line("vehicle", m.vehicle + 1);
        line("ahead", m.ahead + 1);
        line("road", cfg.lanes[m.lane].id);
        line("gap_below", m.gap_below);
        if (m.successor) line("successor", *m.successor + 1);
    }
    return out;
}

}  // namespace platoon
