#pragma once

// CSV export of a simulation log: one row per control tick per vehicle.

#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>

#include <fmt/format.h>

#include "platoon/error.hpp"
#include "platoon/sim_engine.hpp"

namespace platoon {

inline constexpr std::string_view kCsvHeader =
    "t,vehicle_id,x,y,theta,v,s,y_tilde,theta_tilde,v_r,a,chi,delta,e_tilde,nu,"
    "d_eta_L,d_eta_R,d_rho,lyap_lat,lyap_lon,breach_flag";

namespace detail {

inline void append_number(std::string& row, double value) {
    row += ',';
    fmt::format_to(std::back_inserter(row), "{:.9g}", value);
}

inline void append_number(std::string& row, const std::optional<double>& value) {
    if (value) append_number(row, *value);
    else row += ",nan";
}

}  // namespace detail

inline std::string csv_row(double t, std::size_t vehicle_id, const VehicleRecord& r) {
    std::string row = fmt::format("{:.9g},{}", t, vehicle_id);
    const double fields[] = {r.state.x,        r.state.y,          r.state.theta,
                             r.state.v,        r.frenet.s,         r.frenet.y_tilde,
                             r.frenet.theta_tilde, r.frenet.v_r,   r.input.a,
                             r.input.chi,      r.delta};
    for (double f : fields) detail::append_number(row, f);
    detail::append_number(row, r.e_tilde);
    detail::append_number(row, r.nu);
    detail::append_number(row, r.safety.d_eta_L);
    detail::append_number(row, r.safety.d_eta_R);
    detail::append_number(row, r.safety.d_rho);
    detail::append_number(row, r.lyap_lat);
    detail::append_number(row, r.lyap_lon);
    row += r.breach ? ",1" : ",0";
    return row;
}

/// Vehicle ids are 1-based, matching scenario files.
inline void write_csv(std::ostream& out, const SimLog& log) {
    out << kCsvHeader << '\n';
    for (const StepRecord& step : log.records) {
        for (std::size_t i = 0; i < step.vehicles.size(); ++i)
            out << csv_row(step.t, i + 1, step.vehicles[i]) << '\n';
    }
}

inline void write_csv(const std::filesystem::path& path, const SimLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::IoError, fmt::format("cannot write {}", path.string()));
    write_csv(out, log);
    if (!out) throw Error(ErrorKind::IoError, fmt::format("write to {} failed", path.string()));
}

}  // namespace platoon
