#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <utility>

#include "json.hpp"

#include "benney/reconstruction.hpp"
#include "benney/transport.hpp"
#include "benney/verifier.hpp"

namespace benney::io {

using json = nlohmann::ordered_json;

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shortest decimal string that parses back to the exact double. Keeps data
/// files byte-identical across runs without rounding anything away.
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc())
        throw IoError("format_double: conversion failed");
    return std::string(buf, res.ptr);
}

inline void write_fields_csv(std::ostream& os, const SolutionFields& fields) {
    os << "t,x,y,v,u,h,mask\n";
    for (const auto& s : fields.samples) {
        os << format_double(s.t) << ',' << format_double(s.x) << ',' << format_double(s.y)
           << ',' << format_double(s.v) << ',' << format_double(s.u) << ','
           << format_double(s.h) << ',' << (s.masked ? '1' : '0') << '\n';
    }
}

inline json signs_json(const SignConvention& c) {
    return json{{"s_h", c.s_h}, {"s_phi", c.s_phi}};
}

inline json grid_json(const GridSpec& grid) {
    json out = json::object();
    for (const auto& ax : grid.axes) out[ax.name] = json::array({ax.min, ax.max, ax.count});
    return out;
}

inline json residual_json(const ResidualReport& rep) {
    json eqs = json::object();
    for (const auto& e : rep.equations)
        eqs[e.name] = json{
            {"linf", e.linf}, {"l2", e.l2}, {"samples", e.samples}, {"masked", e.masked}};
    return json{{"equations", std::move(eqs)},
                {"max_linf", rep.max_linf()},
                {"masked_fraction", rep.masked_fraction()}};
}

inline json ladder_json(const ConvergenceReport& rep) {
    json rungs = json::array();
    for (const auto& e : rep.ladder)
        rungs.push_back(json{{"spacing", e.spacing},
                             {"linf", e.linf},
                             {"samples", e.samples},
                             {"masked", e.masked}});
    return json{{"ladder", std::move(rungs)},
                {"order", rep.order ? json(*rep.order) : json(nullptr)},
                {"monotone", rep.monotone},
                {"at_floor", rep.at_floor}};
}

inline json transport_json(const TransportLadder& lad) {
    return json{{"dts", lad.dts},
                {"deviations", lad.deviations},
                {"order", lad.order ? json(*lad.order) : json(nullptr)},
                {"at_floor", lad.at_floor},
                {"floor", lad.floor}};
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << text;
    os.flush();
    if (!os) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace benney::io
