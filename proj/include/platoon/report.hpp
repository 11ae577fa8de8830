#pragma once

// Plain-text summary table of one or more runs, one row per vehicle per run.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "platoon/sim_engine.hpp"

namespace platoon {

struct LabeledLog {
    std::string label;  // e.g. "safe" or "baseline"
    const SimLog* log = nullptr;
    bool aborted = false;
};

/// Minimum safety distances, breach counts and convergence time per vehicle;
/// a trailing `*` marks a distance that reached zero.
inline std::string summary_table(const std::vector<LabeledLog>& runs) {
    const std::vector<std::string> head{"vehicle", "mode", "min d_rho", "min d_eta_L", "min d_eta_R",
                                        "breaches", "converged at"};
    std::vector<std::vector<std::string>> rows;
    auto distance = [](const std::optional<double>& v) {
        if (!v) return std::string("-");
        return fmt::format("{:.3f}{}", *v, *v <= 0.0 ? "*" : "");
    };
    std::size_t n = 0;
    for (const LabeledLog& r : runs) n = std::max(n, r.log->summary.vehicles.size());
    for (std::size_t i = 0; i < n; ++i) {
        for (const LabeledLog& r : runs) {
            if (i >= r.log->summary.vehicles.size()) continue;
            const VehicleSummary& v = r.log->summary.vehicles[i];
            rows.push_back({std::to_string(i + 1), r.label + (r.aborted ? " (aborted)" : ""),
                            distance(v.min_d_rho), distance(v.min_d_eta_L), distance(v.min_d_eta_R),
                            std::to_string(v.breach_count),
                            v.converged_at ? fmt::format("{:.1f} s", *v.converged_at) : "never"});
        }
    }
    std::vector<std::size_t> width(head.size());
    for (std::size_t c = 0; c < head.size(); ++c) {
        width[c] = head[c].size();
        for (const auto& row : rows) width[c] = std::max(width[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& row) {
        std::string out;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) out += "  ";
            // text columns left-aligned, numbers right-aligned
            out += c < 2 ? fmt::format("{:<{}}", row[c], width[c]) : fmt::format("{:>{}}", row[c], width[c]);
        }
        while (!out.empty() && out.back() == ' ') out.pop_back();
        return out + '\n';
    };
    std::string out = line(head);
    std::string rule;
    for (std::size_t c = 0; c < head.size(); ++c) rule += (c ? "  " : "") + std::string(width[c], '-');
    out += rule + '\n';
    for (const auto& row : rows) out += line(row);
    return out;
}

}  // namespace platoon
