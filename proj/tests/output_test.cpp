#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "platoon/acceptance.hpp"
#include "platoon/csv_log.hpp"
#include "platoon/report.hpp"
#include "platoon/scenario.hpp"
#include "platoon/svg_plot.hpp"

namespace platoon {
namespace {

const std::string kDir = PLATOON_SCENARIO_DIR;

// Bundled runs are shared across the tests in this file.
acceptance::Runs& runs() {
    static acceptance::Runs r(kDir);
    return r;
}

const SimLog& bundled(const std::string& name, ControllerMode mode) {
    const acceptance::RunResult& r = runs().get(name, mode);
    EXPECT_FALSE(r.abort.has_value()) << name << ": " << r.abort.value_or("");
    return r.log;
}

std::vector<std::string> split(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, sep)) out.push_back(item);
    if (!text.empty() && text.back() == sep) out.emplace_back();
    return out;
}

std::string csv_text(const SimLog& log) {
    std::ostringstream out;
    write_csv(out, log);
    return out.str();
}

std::size_t count(const std::string& text, const std::string& what) {
    std::size_t n = 0;
    for (auto pos = text.find(what); pos != std::string::npos; pos = text.find(what, pos + 1)) ++n;
    return n;
}

TEST(Csv, ShapeOfScenarioA) {
    const SimLog& log = bundled("scenario_A", ControllerMode::Safe);
    const std::string text = csv_text(log);
    EXPECT_EQ(text.find('\r'), std::string::npos);
    ASSERT_EQ(text.back(), '\n');
    std::vector<std::string> lines = split(text, '\n');
    lines.pop_back();
    ASSERT_EQ(lines.size(), 1u + 601u * 5u);
    EXPECT_EQ(lines.front(), kCsvHeader);
    for (const std::string& line : lines) ASSERT_EQ(split(line, ',').size(), 21u) << line;
    EXPECT_EQ(lines[1].substr(0, 4), "0,1,");
    EXPECT_EQ(lines.back().substr(0, 5), "60,5,");
}

TEST(Csv, ValuesRoundTripAtNineDigits) {
    const SimLog& log = bundled("scenario_A", ControllerMode::Safe);
    const StepRecord& step = log.records[123];
    for (std::size_t i = 0; i < step.vehicles.size(); ++i) {
        const VehicleRecord& r = step.vehicles[i];
        const std::vector<std::string> f = split(csv_row(step.t, i + 1, r), ',');
        auto near = [](const std::string& text, double want) {
            const double got = std::stod(text);
            EXPECT_LE(std::abs(got - want), 1e-8 * std::max(1.0, std::abs(want))) << text << " vs " << want;
        };
        near(f[0], step.t);
        EXPECT_EQ(f[1], std::to_string(i + 1));
        near(f[2], r.state.x);
        near(f[5], r.state.v);
        near(f[6], r.frenet.s);
        near(f[7], r.frenet.y_tilde);
        near(f[18], r.lyap_lat);
        if (i == 0) {
            EXPECT_EQ(f[13], "nan");
            EXPECT_EQ(f[14], "nan");
            EXPECT_EQ(f[17], "nan");
            EXPECT_EQ(f[19], "nan");
        } else {
            near(f[13], *r.e_tilde);
            near(f[17], *r.safety.d_rho);
        }
        EXPECT_EQ(f[20], "0");
    }
}

TEST(Csv, BaselineBreachesAreFlagged) {
    const SimLog& log = bundled("scenario_A", ControllerMode::Baseline);
    ASSERT_FALSE(log.summary.breaches.empty());
    for (const BreachEvent& b : log.summary.breaches) {
        const auto it = std::lower_bound(log.records.begin(), log.records.end(), b.t - 1e-9,
                                         [](const StepRecord& s, double t) { return s.t < t; });
        ASSERT_NE(it, log.records.end());
        EXPECT_TRUE(it->vehicles[b.vehicle].breach) << "t = " << b.t << " vehicle " << b.vehicle + 1;
    }
    std::size_t flagged = 0;
    for (const std::string& line : split(csv_text(log), '\n'))
        if (line.size() > 2 && line.substr(line.size() - 2) == ",1") ++flagged;
    EXPECT_GT(flagged, 0u);
    for (const std::string& line : split(csv_text(log), '\n')) {
        if (line.size() > 2 && line.substr(line.size() - 2) == ",1") {
            EXPECT_EQ(split(line, ',')[1], "4") << line;
        }
    }
}

TEST(Csv, Deterministic) {
    const PlatoonConfig cfg = load_scenario(kDir + "/scenario_C.cfg");
    EXPECT_EQ(csv_text(run_simulation(cfg)), csv_text(run_simulation(cfg)));
}

TEST(Svg, NiceSteps) {
    EXPECT_DOUBLE_EQ(svg::nice_step(10.0), 2.0);
    EXPECT_DOUBLE_EQ(svg::nice_step(1.0), 0.2);
    EXPECT_DOUBLE_EQ(svg::nice_step(0.037), 0.01);
    EXPECT_DOUBLE_EQ(svg::nice_step(60.0), 10.0);
    EXPECT_DOUBLE_EQ(svg::nice_step(230.0), 50.0);
    EXPECT_DOUBLE_EQ(svg::nice_step(0.0), 1.0);
}

TEST(Svg, RenderBasics) {
    svg::Figure fig;
    fig.title = "a < b & c";
    svg::Panel panel;
    panel.title = "p";
    svg::Series s;
    s.color = "#000000";
    s.points = {{0, 0}, {1, 1}, {2, NAN}, {3, 2}, {4, 3}};
    panel.series.push_back(s);
    fig.panels.push_back(panel);
    fig.legend.push_back({"solid", "#000000", false});
    fig.legend.push_back({"dashed", "#000000", true});
    const std::string text = svg::render(fig);
    EXPECT_EQ(text.rfind("<svg", 0), 0u);
    EXPECT_NE(text.find(R"(viewBox="0 0 800 600")"), std::string::npos);
    EXPECT_NE(text.find("a &lt; b &amp; c"), std::string::npos);
    EXPECT_EQ(count(text, "<polyline"), 2u);
    EXPECT_EQ(count(text, "stroke-dasharray"), 1u);
    EXPECT_EQ(text.substr(text.size() - 7), "</svg>\n");
    EXPECT_EQ(text.find("nan"), std::string::npos);
}

TEST(Svg, OverlayDashesBaseline) {
    const SimLog& safe = bundled("scenario_A", ControllerMode::Safe);
    const SimLog& base = bundled("scenario_A", ControllerMode::Baseline);
    const std::string single = svg::render(svg::safety_figure({{&safe, "safe"}}));
    const std::string overlay = svg::render(svg::safety_figure({{&safe, "safe"}, {&base, "baseline"}}));
    EXPECT_EQ(count(single, "stroke-dasharray"), 0u);
    EXPECT_GT(count(overlay, "stroke-dasharray"), 0u);
    EXPECT_NE(overlay.find(">baseline<"), std::string::npos);
    for (const auto& fig : {svg::errors_figure({{&safe, "safe"}}), svg::inputs_figure({{&safe, "safe"}}),
                            svg::trajectory_figure({{&safe, "safe"}, {&base, "baseline"}})}) {
        const std::string text = svg::render(fig);
        EXPECT_NE(text.find(R"(viewBox="0 0 800 600")"), std::string::npos);
        EXPECT_GT(count(text, "<polyline"), 0u);
        EXPECT_EQ(text.find("nan"), std::string::npos);
        EXPECT_EQ(text.find("inf"), std::string::npos);
    }
}

TEST(Report, AlignedTable) {
    const SimLog& safe = bundled("scenario_A", ControllerMode::Safe);
    const SimLog& base = bundled("scenario_A", ControllerMode::Baseline);
    const std::string table = summary_table({{"safe", &safe, false}, {"baseline", &base, false}});
    std::vector<std::string> lines = split(table, '\n');
    lines.pop_back();
    ASSERT_EQ(lines.size(), 2u + 10u);
    EXPECT_EQ(lines[0].rfind("vehicle", 0), 0u);
    // right-aligned columns end at the same offset on every row
    const std::size_t end_of_breaches = lines[0].find("breaches") + std::string("breaches").size();
    for (std::size_t k = 2; k < lines.size(); ++k) {
        EXPECT_NE(lines[k][end_of_breaches - 1], ' ') << lines[k];
        EXPECT_EQ(lines[k][end_of_breaches], ' ') << lines[k];
    }
    EXPECT_NE(lines[2].find(" - "), std::string::npos) << lines[2];
    // vehicle 4 baseline row marks its spacing breach
    const std::string& v4_base = lines[2 + 7];
    EXPECT_EQ(v4_base.rfind("4", 0), 0u);
    EXPECT_NE(v4_base.find("baseline"), std::string::npos);
    EXPECT_NE(v4_base.find('*'), std::string::npos);
    EXPECT_EQ(std::count(table.begin(), table.end(), '*'), 1);
}

TEST(Report, MarksAbortedRuns) {
    const SimLog& safe = bundled("scenario_C", ControllerMode::Safe);
    const std::string table = summary_table({{"safe", &safe, true}});
    EXPECT_NE(table.find("safe (aborted)"), std::string::npos);
}

TEST(BundledRuns, ScenarioCMergeSequence) {
    const SimLog& log = bundled("scenario_C", ControllerMode::Safe);
    ASSERT_EQ(log.summary.merges.size(), 1u);
    const MergeRecord& m = log.summary.merges.front();
    EXPECT_EQ(m.vehicle, 2u);
    EXPECT_EQ(m.ahead, 1u);
    EXPECT_EQ(m.lane, 0u);
    for (const StepRecord& step : log.records) {
        const VehicleRecord& merging = step.vehicles[2];
        const VehicleRecord& behind = step.vehicles[3];
        if (step.t < m.t) {
            EXPECT_EQ(merging.lane, 1u);
            EXPECT_FALSE(merging.predecessor.has_value());
            EXPECT_EQ(behind.predecessor, std::optional<std::size_t>(1));
        } else {
            EXPECT_EQ(merging.lane, 0u);
            EXPECT_EQ(merging.predecessor, std::optional<std::size_t>(1));
            EXPECT_EQ(behind.predecessor, std::optional<std::size_t>(2));
        }
    }
    EXPECT_TRUE(log.summary.breaches.empty());
}

TEST(BundledRuns, SafeModeNeverBreaches) {
    for (const char* name : {"scenario_A", "scenario_B", "scenario_C"}) {
        const SimLog& log = bundled(name, ControllerMode::Safe);
        EXPECT_TRUE(log.summary.breaches.empty()) << name;
        EXPECT_TRUE(acceptance::safety_verdict(name, runs().get(name, ControllerMode::Safe)).pass) << name;
    }
}

TEST(BundledRuns, BaselineSpacingBreaches) {
    auto breached = [](const SimLog& log, const std::string& which) {
        std::vector<std::size_t> ids;
        for (const BreachEvent& b : log.summary.breaches)
            if (b.which.rfind(which, 0) == 0) ids.push_back(b.vehicle + 1);
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        return ids;
    };
    const SimLog& a = bundled("scenario_A", ControllerMode::Baseline);
    EXPECT_EQ(breached(a, "d_rho"), (std::vector<std::size_t>{4}));
    EXPECT_TRUE(breached(a, "d_eta").empty());
    const SimLog& b = bundled("scenario_B", ControllerMode::Baseline);
    EXPECT_EQ(breached(b, "d_rho"), (std::vector<std::size_t>{2, 4}));
    const std::vector<std::size_t> eta = breached(b, "d_eta");
    EXPECT_TRUE(std::count(eta.begin(), eta.end(), 2));
    EXPECT_TRUE(std::count(eta.begin(), eta.end(), 4));
}

// A barrier gain close to zero leaves only the nominal lateral law, which is
// what lets Scenario B's baseline cross the road edge. The safety check must
// notice.
TEST(BundledRuns, WeakBarrierFailsSafetyCheck) {
    PlatoonConfig cfg = runs().config("scenario_B", ControllerMode::Safe);
    cfg.gains.k3 = 1e-9;
    cfg.gains.k6 = 1e-9;
    const acceptance::RunResult r = acceptance::run_timed(cfg);
    const acceptance::Outcome o = acceptance::safety_verdict("scenario_B", r);
    EXPECT_FALSE(o.pass) << o.detail;
}

TEST(BundledRuns, ZeroGainIsRejected) {
    PlatoonConfig cfg = runs().config("scenario_A", ControllerMode::Safe);
    cfg.gains.k3 = 0.0;
    try {
        cfg.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ValidationError);
    }
}

}  // namespace
}  // namespace platoon
