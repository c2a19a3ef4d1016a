#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "benney/config.hpp"
#include "benney/io.hpp"
#include "benney/sign_resolution.hpp"
#include "benney/transport.hpp"
#include "benney/verifier.hpp"

namespace benney {

struct RunnerOptions {
    std::filesystem::path out_dir = ".";
    bool quiet = false;
    std::optional<unsigned> threads;
    std::ostream* log = &std::cout;
};

/// Everything a command needs from a configured family: the distribution,
/// its boundary pair, the acceleration field driving the characteristics,
/// and the closed-form ingredients of family-specific checks.
struct FamilyBundle {
    DistributionG G;
    BoundaryPair boundary;
    std::shared_ptr<const LambdaFamily> lambda;  // set for the rational family
    std::function<double(double, double)> forcing = [](double, double) { return 0.0; };
    double A = 0.0;  // set for const_theta
};

inline FamilyBundle build_family(const RunConfig& cfg, int phi_sign) {
    FamilyBundle b;
    if (cfg.family == "freestream") {
        auto fam = freestream_family(expr::Ast::parse(cfg.G0, {"xi", "lam"}), cfg.g_lo,
                                     cfg.domain, cfg.bracket_seed);
        b.G = std::move(fam.G);
        b.boundary = std::move(fam.boundary);
    } else if (cfg.family == "const_theta") {
        auto fam = const_family(theta_sigma(cfg.A), cfg.domain, cfg.corner_seed);
        b.G = std::move(fam.G);
        b.boundary = std::move(fam.boundary);
        b.A = fam.A;
    } else {
        auto rat = rational_family(
            RationalParams{expr::Ast::parse(cfg.U, {"g"}), expr::Ast::parse(cfg.V, {"g"}),
                           cfg.g_lo, cfg.g_hi, phi_sign},
            cfg.domain);
        b.forcing = rat.family.forcing;
        b.lambda = rat.G.source;
        b.G = std::move(rat.G);
        b.boundary = std::move(rat.boundary);
    }
    return b;
}

/// Forced mode returns the configured convention; auto mode lets the Benney
/// residual ladder pick the unique converging one. Only the rational family
/// consumes the drift sign, so only there both values are tried.
inline SignConvention determine_signs(const RunConfig& cfg, unsigned threads) {
    if (cfg.sign_mode == "forced") return cfg.signs;
    FamilyBuilder builder = [&cfg](const SignConvention& c) {
        auto b = build_family(cfg, c.s_phi);
        return std::pair{b.G, b.boundary};
    };
    ProbeOptions probe;
    probe.threads = threads;
    const bool sigma_observable = cfg.family == "rational";
    return resolve_signs(builder, cfg.generate, sigma_observable, {}, probe).chosen;
}

namespace runner_detail {

struct CheckRow {
    std::string name;
    std::string detail;
    bool pass;
};

inline void say(const RunnerOptions& opts, const std::string& line) {
    if (!opts.quiet && opts.log) (*opts.log) << line << '\n';
}

inline std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

inline std::string order_detail(const ConvergenceReport& rep, double need) {
    if (rep.at_floor) return "at noise floor";
    if (!rep.order) return "no fitted order (need >= " + num(need) + ")";
    std::string s = "order " + num(*rep.order) + " (need >= " + num(need) + ")";
    if (!rep.monotone) s += ", not monotone";
    return s;
}

inline void print_table(const RunnerOptions& opts, const std::vector<CheckRow>& rows) {
    for (const auto& r : rows) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "  %-22s %-4s  %s", r.name.c_str(),
                      r.pass ? "ok" : "FAIL", r.detail.c_str());
        say(opts, buf);
    }
}

inline double rung_masked_fraction(const ConvergenceReport& rep) {
    if (rep.ladder.empty()) return 0.0;
    const auto& e = rep.ladder.front();
    const std::size_t total = e.samples + e.masked;
    return total == 0 ? 0.0 : static_cast<double>(e.masked) / static_cast<double>(total);
}

}  // namespace runner_detail

inline int run_generate(const RunConfig& cfg, const RunnerOptions& opts) {
    using runner_detail::say;
    const unsigned threads = opts.threads.value_or(cfg.threads);
    try {
        const SignConvention signs = determine_signs(cfg, threads);
        const auto bundle = build_family(cfg, signs.s_phi);
        SolveOptions sopts;
        sopts.threads = threads;
        const auto fields =
            evaluate_fields(bundle.G, bundle.boundary, signs, cfg.generate, sopts, cfg.family);

        std::filesystem::create_directories(opts.out_dir);
        std::ostringstream csv;
        io::write_fields_csv(csv, fields);
        io::write_text_file(opts.out_dir / cfg.output.fields, csv.str());

        const io::json meta{{"family", cfg.family},
                            {"sign_mode", cfg.sign_mode},
                            {"signs", io::signs_json(signs)},
                            {"grid", io::grid_json(cfg.generate)},
                            {"samples", fields.samples.size()},
                            {"masked_fraction", fields.masked_fraction()}};
        io::write_text_file(opts.out_dir / cfg.output.metadata, io::dump_json(meta));

        say(opts, "generate: family " + cfg.family + ", signs s_h=" +
                      std::to_string(signs.s_h) + " s_phi=" + std::to_string(signs.s_phi) +
                      " (" + cfg.sign_mode + ")");
        say(opts, "generate: " + std::to_string(fields.samples.size()) +
                      " samples, masked fraction " + runner_detail::num(fields.masked_fraction()));
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "generate: " << e.what() << '\n';
        return 3;
    }
}

inline int run_verify(const RunConfig& cfg, const RunnerOptions& opts) {
    using runner_detail::CheckRow;
    using runner_detail::say;
    if (!cfg.verify) {
        std::cerr << "verify: config has no verify section\n";
        return 2;
    }
    const auto& vc = *cfg.verify;
    const unsigned threads = opts.threads.value_or(cfg.threads);
    try {
        const SignConvention signs = determine_signs(cfg, threads);
        const auto bundle = build_family(cfg, signs.s_phi);
        const auto fields = make_fields(bundle.G, bundle.boundary, signs, {}, cfg.family);
        ProbeOptions probe;
        probe.threads = threads;

        std::vector<CheckRow> rows;
        io::json residuals = io::json::object();
        io::json orders = io::json::object();
        double masked_fraction = 0.0;

        auto add_ladder = [&](const std::string& name, const ConvergenceReport& rep) {
            residuals[name] = io::ladder_json(rep);
            orders[name] = rep.order ? io::json(*rep.order) : io::json(nullptr);
            rows.push_back({name, runner_detail::order_detail(rep, vc.order_min),
                            rep.passes(vc.order_min)});
        };
        auto add_exact = [&](const std::string& name, const ResidualReport& rep) {
            residuals[name] = io::residual_json(rep);
            rows.push_back({name,
                            "linf " + runner_detail::num(rep.max_linf()) + " (need <= " +
                                runner_detail::num(vc.exact_tol) + ")",
                            rep.max_linf() <= vc.exact_tol && rep.total_samples() > 0});
        };

        const auto levels = refinement_levels(vc.benney_base, vc.levels);
        {
            const auto rep = convergence_order(
                [&](const GridSpec& g) { return benney_residual(fields, g, probe); }, levels);
            masked_fraction = runner_detail::rung_masked_fraction(rep);
            add_ladder("benney", rep);
        }
        add_ladder("substituted",
                   convergence_order(
                       [&](const GridSpec& g) { return substituted_residual(fields, g, probe); },
                       levels));
        if (vc.kinetic)
            add_ladder("kinetic",
                       convergence_order(
                           [&](const GridSpec& g) {
                               return kinetic_residual(bundle.G, bundle.forcing, g, probe);
                           },
                           refinement_levels(*vc.kinetic, vc.levels)));
        if (vc.monge)
            add_ladder("monge",
                       convergence_order(
                           [&](const GridSpec& g) {
                               return monge_residual(bundle.boundary, bundle.forcing, g, probe);
                           },
                           refinement_levels(*vc.monge, vc.levels)));

        if (cfg.family == "const_theta") {
            // the depth-linear velocity profile and its integral in closed form
            EquationResidual ev{"closed_form.v"}, eu{"closed_form.u"}, eh{"closed_form.h"};
            const auto& ta = cfg.generate.axis("t");
            const auto& xa = cfg.generate.axis("x");
            const auto& ya = cfg.generate.axis("y");
            for (std::size_t i = 0; i < ta.count; ++i)
                for (std::size_t j = 0; j < xa.count; ++j) {
                    const double t = ta.coord(i), x = xa.coord(j);
                    const double nu = bundle.boundary.nu(t, x);
                    const double mu = bundle.boundary.mu(t, x);
                    eh.add(fields.h(t, x) - (mu - nu) / (2 * bundle.A));
                    for (std::size_t k = 0; k < ya.count; ++k) {
                        const double y = ya.coord(k);
                        ev.add(fields.v(t, x, y) - (-2 * bundle.A * y - nu));
                        eu.add(fields.u(t, x, y) - (-bundle.A * y * y - nu * y));
                    }
                }
            ev.finish();
            eu.finish();
            eh.finish();
            add_exact("closed_form", ResidualReport{{ev, eu, eh}});
        }

        if (cfg.family == "rational" && bundle.lambda) {
            if (vc.cr)
                add_exact("cr", cr_residual(*bundle.lambda, *vc.cr, vc.g_probes, -1, probe));
            if (vc.hj)
                add_ladder("hj",
                           convergence_order(
                               [&](const GridSpec& g) {
                                   return hj_residual(*bundle.lambda, g, vc.g_probes, vc.hj_x0,
                                                      -1, probe);
                               },
                               refinement_levels(*vc.hj, vc.levels)));
        }

        const io::json report{{"residuals", residuals},
                              {"orders", orders},
                              {"signs",
                               io::json{{"mode", cfg.sign_mode},
                                        {"s_h", signs.s_h},
                                        {"s_phi", signs.s_phi}}},
                              {"masked_fraction", masked_fraction}};
        std::filesystem::create_directories(opts.out_dir);
        io::write_text_file(opts.out_dir / cfg.output.report, io::dump_json(report));

        say(opts, "verify: family " + cfg.family + ", signs s_h=" + std::to_string(signs.s_h) +
                      " s_phi=" + std::to_string(signs.s_phi) + " (" + cfg.sign_mode + ")");
        runner_detail::print_table(opts, rows);
        for (const auto& r : rows)
            if (!r.pass) {
                std::cerr << "verify: FAILED " << r.name << ": " << r.detail << '\n';
                return 4;
            }
        say(opts, "verify: all checks passed");
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "verify: " << e.what() << '\n';
        return 4;
    }
}

inline int run_transport(const RunConfig& cfg, const RunnerOptions& opts) {
    using runner_detail::say;
    if (!cfg.transport) {
        std::cerr << "transport: config has no transport section\n";
        return 2;
    }
    const auto& tc = *cfg.transport;
    try {
        const int phi_sign = cfg.sign_mode == "forced" ? cfg.signs.s_phi : +1;
        const auto bundle = build_family(cfg, phi_sign);

        std::function<double(double, double)> forcing = bundle.forcing;
        if (tc.forcing) {
            auto compiled = std::make_shared<expr::Compiled>(
                expr::Ast::parse(*tc.forcing, {"t", "x"}).compile());
            forcing = [compiled](double t, double x) {
                const double b[] = {t, x};
                return compiled->eval(std::span<const double>(b, 2));
            };
        }

        TransportOptions topts;
        topts.x_min = tc.x_min;
        topts.x_max = tc.x_max;
        const auto ladder =
            transport_ladder(bundle.G, forcing, tc.seeds, tc.t0, tc.t1, tc.dts, topts, tc.floor);
        const auto check =
            conservation_check(bundle.G, forcing, tc.seeds, tc.t0, tc.t1, tc.dts.back(), topts);

        const io::json report{
            {"residuals",
             io::json{{"transport.conservation", io::residual_json(check)},
                      {"transport.ladder", io::transport_json(ladder)}}},
            {"orders",
             io::json{{"transport.conservation",
                       ladder.order ? io::json(*ladder.order) : io::json(nullptr)}}},
            {"signs", io::json{{"mode", cfg.sign_mode}, {"s_h", cfg.signs.s_h},
                               {"s_phi", phi_sign}}},
            {"masked_fraction", check.masked_fraction()}};
        std::filesystem::create_directories(opts.out_dir);
        io::write_text_file(opts.out_dir / cfg.output.transport_report, io::dump_json(report));

        const bool pass = ladder.passes(tc.order_min);
        std::string detail;
        if (ladder.at_floor)
            detail = "deviations at noise floor";
        else if (ladder.order)
            detail = "order " + runner_detail::num(*ladder.order) + " (need >= " +
                     runner_detail::num(tc.order_min) + ")";
        else
            detail = "no fitted order";
        runner_detail::print_table(opts, {{"transport.conservation", detail, pass}});
        if (!pass) {
            std::cerr << "transport: FAILED transport.conservation: " << detail << '\n';
            return 4;
        }
        say(opts, "transport: conservation holds at the required order");
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "transport: " << e.what() << '\n';
        return 4;
    }
}

}  // namespace benney
