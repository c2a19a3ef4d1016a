#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "benney/expr.hpp"
#include "benney/numerics.hpp"
#include "benney/reconstruction.hpp"

namespace benney {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace config_detail {

using json = nlohmann::ordered_json;

inline const json& require(const json& j, const std::string& key, const std::string& ctx) {
    const auto it = j.find(key);
    if (it == j.end()) throw ConfigError(ctx + "." + key + ": missing");
    return *it;
}

template <class T>
T as(const json& j, const std::string& ctx) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(ctx + ": wrong type");
    }
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback, const std::string& ctx) {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    return as<T>(*it, ctx + "." + key);
}

/// Grids are objects mapping an axis name to [min, max, count]; axis order
/// follows the document.
inline GridSpec parse_grid(const json& j, const std::string& ctx) {
    if (!j.is_object() || j.empty())
        throw ConfigError(ctx + ": expected an object of axes {name: [min, max, count]}");
    GridSpec grid;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string actx = ctx + "." + it.key();
        const auto& arr = it.value();
        if (!arr.is_array() || arr.size() != 3)
            throw ConfigError(actx + ": expected [min, max, count]");
        grid.axes.push_back(AxisSpec{it.key(), as<double>(arr[0], actx), as<double>(arr[1], actx),
                                     as<std::size_t>(arr[2], actx)});
    }
    try {
        grid.validate();
    } catch (const std::exception& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    return grid;
}

inline expr::Ast parse_expr(const std::string& source, const std::vector<std::string>& vars,
                            const std::string& ctx) {
    try {
        return expr::Ast::parse(source, vars);
    } catch (const std::exception& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
}

}  // namespace config_detail

struct VerifyConfig {
    GridSpec benney_base;  // axes t, x, y
    std::size_t levels = 3;
    std::optional<GridSpec> kinetic;  // axes t, x, lam
    std::optional<GridSpec> monge;    // axes t, x
    std::optional<GridSpec> cr;       // axes t, x
    std::optional<GridSpec> hj;       // axes t, x, g
    double hj_x0 = 0.0;
    std::vector<double> g_probes{0.25, 0.5, 0.75};
    double order_min = 1.9;
    double exact_tol = 1e-8;
};

struct TransportConfig {
    double t0 = 0.0;
    double t1 = 1.0;
    std::vector<double> dts;
    GridSpec seeds;  // axes x, lam
    std::optional<std::string> forcing;  // expression in (t, x); default: family forcing
    double x_min = -std::numeric_limits<double>::infinity();
    double x_max = std::numeric_limits<double>::infinity();
    double floor = 1e-9;
    double order_min = 3.9;
};

struct OutputNames {
    std::string fields = "fields.csv";
    std::string metadata = "metadata.json";
    std::string report = "report.json";
    std::string transport_report = "transport.json";
};

struct RunConfig {
    std::string family;  // freestream | const_theta | rational

    // freestream parameters
    std::string G0;
    double g_lo = 0.0;
    double bracket_seed = 0.0;

    // const_theta parameters
    double A = 1.0;
    std::pair<double, double> corner_seed{0.0, 1.0};

    // rational parameters
    std::string U;
    std::string V;
    double g_hi = 1.0;

    GridSpec domain;    // family construction window, axes t, x
    GridSpec generate;  // sampling grid, axes t, x, y

    std::string sign_mode = "auto";
    SignConvention signs{};

    std::optional<VerifyConfig> verify;
    std::optional<TransportConfig> transport;

    unsigned threads = 1;
    OutputNames output;
};

inline RunConfig load_config(const config_detail::json& doc) {
    using namespace config_detail;
    if (!doc.is_object()) throw ConfigError("config: expected a JSON object");

    RunConfig cfg;
    cfg.family = as<std::string>(require(doc, "family", "config"), "config.family");
    if (cfg.family != "freestream" && cfg.family != "const_theta" && cfg.family != "rational")
        throw ConfigError("config.family: must be freestream, const_theta, or rational");

    const auto& params = require(doc, "parameters", "config");
    if (cfg.family == "freestream") {
        cfg.G0 = as<std::string>(require(params, "G0", "config.parameters"),
                                 "config.parameters.G0");
        parse_expr(cfg.G0, {"xi", "lam"}, "config.parameters.G0");
        cfg.g_lo = as<double>(require(params, "g_lo", "config.parameters"),
                              "config.parameters.g_lo");
        cfg.bracket_seed = get_or<double>(params, "bracket_seed", 0.0, "config.parameters");
    } else if (cfg.family == "const_theta") {
        const std::string theta = get_or<std::string>(params, "theta", "sigma",
                                                      "config.parameters");
        if (theta != "sigma")
            throw ConfigError("config.parameters.theta: only the sigma potential is built in");
        cfg.A = as<double>(require(params, "A", "config.parameters"), "config.parameters.A");
        if (cfg.A == 0) throw ConfigError("config.parameters.A: must be nonzero");
        const auto seed = get_or<std::vector<double>>(params, "corner_seed", {0.0, 1.0},
                                                      "config.parameters");
        if (seed.size() != 2)
            throw ConfigError("config.parameters.corner_seed: expected [S, R]");
        cfg.corner_seed = {seed[0], seed[1]};
    } else {
        cfg.U = as<std::string>(require(params, "U", "config.parameters"),
                                "config.parameters.U");
        cfg.V = as<std::string>(require(params, "V", "config.parameters"),
                                "config.parameters.V");
        parse_expr(cfg.U, {"g"}, "config.parameters.U");
        parse_expr(cfg.V, {"g"}, "config.parameters.V");
        cfg.g_lo = as<double>(require(params, "g_lo", "config.parameters"),
                              "config.parameters.g_lo");
        cfg.g_hi = as<double>(require(params, "g_hi", "config.parameters"),
                              "config.parameters.g_hi");
        if (!(cfg.g_lo < cfg.g_hi))
            throw ConfigError("config.parameters.g_lo: must be less than parameters.g_hi");
    }

    cfg.domain = parse_grid(require(doc, "domain", "config"), "config.domain");
    if (!cfg.domain.has_axis("t") || !cfg.domain.has_axis("x"))
        throw ConfigError("config.domain: needs axes t and x");
    cfg.generate = parse_grid(require(doc, "generate", "config"), "config.generate");
    for (const char* name : {"t", "x", "y"})
        if (!cfg.generate.has_axis(name))
            throw ConfigError(std::string("config.generate: needs axis ") + name);

    cfg.sign_mode = get_or<std::string>(doc, "sign_mode", "auto", "config");
    if (cfg.sign_mode == "forced") {
        const auto& signs = require(doc, "signs", "config");
        cfg.signs.s_h = as<int>(require(signs, "s_h", "config.signs"), "config.signs.s_h");
        cfg.signs.s_phi = as<int>(require(signs, "s_phi", "config.signs"),
                                  "config.signs.s_phi");
        if (std::abs(cfg.signs.s_h) != 1 || std::abs(cfg.signs.s_phi) != 1)
            throw ConfigError("config.signs: s_h and s_phi must be +1 or -1");
    } else if (cfg.sign_mode != "auto") {
        throw ConfigError("config.sign_mode: must be auto or forced");
    }

    if (const auto it = doc.find("verify"); it != doc.end()) {
        VerifyConfig v;
        v.benney_base = parse_grid(require(*it, "benney", "config.verify"),
                                   "config.verify.benney");
        for (const char* name : {"t", "x", "y"})
            if (!v.benney_base.has_axis(name))
                throw ConfigError(std::string("config.verify.benney: needs axis ") + name);
        v.levels = get_or<std::size_t>(*it, "levels", 3, "config.verify");
        if (v.levels < 2) throw ConfigError("config.verify.levels: need at least 2");
        if (const auto g = it->find("kinetic"); g != it->end())
            v.kinetic = parse_grid(*g, "config.verify.kinetic");
        if (const auto g = it->find("monge"); g != it->end())
            v.monge = parse_grid(*g, "config.verify.monge");
        if (const auto g = it->find("cr"); g != it->end())
            v.cr = parse_grid(*g, "config.verify.cr");
        if (const auto g = it->find("hj"); g != it->end())
            v.hj = parse_grid(*g, "config.verify.hj");
        v.hj_x0 = get_or<double>(*it, "hj_x0", 0.0, "config.verify");
        v.g_probes = get_or<std::vector<double>>(*it, "g_probes", v.g_probes, "config.verify");
        if (v.g_probes.empty()) throw ConfigError("config.verify.g_probes: must be nonempty");
        v.order_min = get_or<double>(*it, "order_min", 1.9, "config.verify");
        v.exact_tol = get_or<double>(*it, "exact_tol", 1e-8, "config.verify");
        cfg.verify = std::move(v);
    }

    if (const auto it = doc.find("transport"); it != doc.end()) {
        TransportConfig tr;
        tr.t0 = as<double>(require(*it, "t0", "config.transport"), "config.transport.t0");
        tr.t1 = as<double>(require(*it, "t1", "config.transport"), "config.transport.t1");
        tr.dts = as<std::vector<double>>(require(*it, "dts", "config.transport"),
                                         "config.transport.dts");
        if (tr.dts.size() < 2)
            throw ConfigError("config.transport.dts: need at least two step sizes to fit an order");
        for (double dt : tr.dts)
            if (!(dt > 0)) throw ConfigError("config.transport.dts: steps must be positive");
        tr.seeds = parse_grid(require(*it, "seeds", "config.transport"),
                              "config.transport.seeds");
        for (const char* name : {"x", "lam"})
            if (!tr.seeds.has_axis(name))
                throw ConfigError(std::string("config.transport.seeds: needs axis ") + name);
        if (const auto f = it->find("forcing"); f != it->end()) {
            tr.forcing = as<std::string>(*f, "config.transport.forcing");
            parse_expr(*tr.forcing, {"t", "x"}, "config.transport.forcing");
        }
        tr.x_min = get_or<double>(*it, "x_min", tr.x_min, "config.transport");
        tr.x_max = get_or<double>(*it, "x_max", tr.x_max, "config.transport");
        tr.floor = get_or<double>(*it, "floor", tr.floor, "config.transport");
        tr.order_min = get_or<double>(*it, "order_min", 3.9, "config.transport");
        cfg.transport = std::move(tr);
    }

    cfg.threads = get_or<unsigned>(doc, "threads", 1, "config");
    if (cfg.threads == 0) throw ConfigError("config.threads: must be positive");

    if (const auto it = doc.find("output"); it != doc.end()) {
        cfg.output.fields = get_or<std::string>(*it, "fields", cfg.output.fields,
                                                "config.output");
        cfg.output.metadata = get_or<std::string>(*it, "metadata", cfg.output.metadata,
                                                  "config.output");
        cfg.output.report = get_or<std::string>(*it, "report", cfg.output.report,
                                                "config.output");
        cfg.output.transport_report = get_or<std::string>(
            *it, "transport_report", cfg.output.transport_report, "config.output");
    }

    return cfg;
}

inline RunConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
    std::stringstream buf;
    buf << is.rdbuf();
    config_detail::json doc;
    try {
        doc = config_detail::json::parse(buf.str());
    } catch (const config_detail::json::exception& e) {
        throw ConfigError("config '" + path.string() + "': " + e.what());
    }
    return load_config(doc);
}

}  // namespace benney
