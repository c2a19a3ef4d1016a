#pragma once

// Independent verification of reconstructed fields and families. Every check
// works from field or family *values* with its own finite-difference
// stencils and quadratures (never the construction's internals), so a sign
// or algebra slip in the construction cannot cancel in the check.
//
// Checks:
//   benney_residual       both long-wave equations on (t, x, y) probes
//   substituted_residual  the potential form in u plus its boundary pairing
//   kinetic_residual      the collisionless transport equation for G
//   monge_residual        the forced advection equations for ν and μ
//   cr_residual           the master equation of a λ(t, x, g) family
//   hj_residual           the Hamilton-Jacobi pairing of S_x = -λ
//   convergence_order     residual ladders under stencil refinement
//
// Probes sit at fixed span fractions of each axis, so refining a grid keeps
// the probe coordinates identical and only shrinks the stencil spacing;
// order fits then measure pure truncation. Stencils are always centered:
// a probe whose stencil cannot be evaluated is masked, never one-sided.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "benney/families.hpp"
#include "benney/numerics.hpp"
#include "benney/reconstruction.hpp"

namespace benney {

struct VerifyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Norms of one residual equation over its probe set.
struct EquationResidual {
    std::string name;
    double linf = 0;
    double l2 = 0;
    std::size_t samples = 0;
    std::size_t masked = 0;

    void add(double r) {
        linf = std::max(linf, std::abs(r));
        l2 += r * r;
        ++samples;
    }
    void finish() {
        if (samples > 0) l2 = std::sqrt(l2 / static_cast<double>(samples));
    }
};

struct ResidualReport {
    std::vector<EquationResidual> equations;

    double max_linf() const {
        double m = 0;
        for (const auto& e : equations) m = std::max(m, e.linf);
        return m;
    }
    std::size_t total_samples() const {
        std::size_t s = 0;
        for (const auto& e : equations) s += e.samples;
        return s;
    }
    std::size_t total_masked() const {
        std::size_t m = 0;
        for (const auto& e : equations) m += e.masked;
        return m;
    }
    double masked_fraction() const {
        const std::size_t s = total_samples() + total_masked();
        return s == 0 ? 0.0 : static_cast<double>(total_masked()) / static_cast<double>(s);
    }
    const EquationResidual& equation(std::string_view name) const {
        for (const auto& e : equations)
            if (e.name == name) return e;
        throw VerifyError("no residual equation named '" + std::string(name) + "'");
    }
};

/// One rung of a refinement ladder.
struct LadderEntry {
    double spacing = 0;
    double linf = 0;
    std::size_t samples = 0;
    std::size_t masked = 0;
};

struct ConvergenceReport {
    std::vector<LadderEntry> ladder;
    std::optional<double> order;   // least-squares slope of log linf vs log spacing
    bool monotone = false;         // norms non-increasing down the ladder
    bool at_floor = false;         // every rung at or below the noise floor
    double floor = 1e-12;

    /// Convergence is certified only by a monotone ladder with enough slope,
    /// or by sitting at the floor outright; every rung must have samples.
    bool passes(double required_order) const {
        for (const auto& e : ladder)
            if (e.samples == 0) return false;
        if (at_floor) return true;
        return monotone && order.has_value() && *order >= required_order;
    }
};

namespace detail {

/// Probe coordinates at fixed interior fractions j/segments of the axis span.
inline std::vector<double> probe_coords(const AxisSpec& ax, std::size_t segments) {
    std::vector<double> out;
    out.reserve(segments - 1);
    for (std::size_t j = 1; j < segments; ++j)
        out.push_back(ax.min + (ax.max - ax.min) * static_cast<double>(j) /
                                   static_cast<double>(segments));
    return out;
}

template <class F>
bool guarded(F&& f) {
    try {
        f();
        return true;
    } catch (const std::exception&) {
        return false;
    }
}

}  // namespace detail

struct ProbeOptions {
    std::size_t segments_per_axis = 8;   // probes at fractions 1/8 .. 7/8
    unsigned threads = 1;
    std::size_t quadrature_panels = 32;  // Simpson panels for inner y-integrals
};

/// Residuals of the two long-wave equations evaluated directly on the field
/// callables:
///   r1 = v_t + v v_x - (∫_0^y v_x dy') v_y + h_x
///   r2 = h_t + ∂_x ∫_0^h v dy
/// Stencil spacings come from `grid`. The inner integrals use the graded
/// substitution y' = Y s² (v can carry a sqrt profile at the bottom), on
/// fixed Simpson nodes independent of the reconstruction's quadrature.
inline ResidualReport benney_residual(const SolutionFields& fields, const GridSpec& grid,
                                      const ProbeOptions& probe = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const auto& ya = grid.axis("y");
    const double dt = ta.spacing(), dx = xa.spacing(), dy = ya.spacing();

    const auto tp = detail::probe_coords(ta, probe.segments_per_axis);
    const auto xp = detail::probe_coords(xa, probe.segments_per_axis);
    const auto yp = detail::probe_coords(ya, probe.segments_per_axis);

    auto ux_integral = [&](double t, double x, double y) {
        return integrate_fixed(
            [&](double s) {
                const double yq = y * s * s;
                const double vx =
                    (fields.v(t, x + dx, yq) - fields.v(t, x - dx, yq)) / (2 * dx);
                return vx * 2.0 * y * s;
            },
            0.0, 1.0, probe.quadrature_panels);
    };

    EquationResidual r1{"benney.r1"};
    EquationResidual r2{"benney.r2"};

    struct Slot {
        double r1 = 0;
        bool ok1 = false;
        double r2 = 0;
        bool ok2 = false;
        bool want2 = false;
    };
    std::vector<Slot> slots(tp.size() * xp.size() * yp.size());

    parallel_for(tp.size() * xp.size(), probe.threads, [&](std::size_t col) {
        const double t = tp[col / xp.size()];
        const double x = xp[col % xp.size()];
        const bool col_valid = fields.valid(t, x) && fields.valid(t, x + dx) &&
                               fields.valid(t, x - dx) && fields.valid(t + dt, x) &&
                               fields.valid(t - dt, x);
        for (std::size_t c = 0; c < yp.size(); ++c) {
            Slot& slot = slots[col * yp.size() + c];
            slot.want2 = c == 0;
            if (!col_valid) continue;
            const double y = yp[c];
            detail::guarded([&] {
                const double vt = (fields.v(t + dt, x, y) - fields.v(t - dt, x, y)) / (2 * dt);
                const double vx = (fields.v(t, x + dx, y) - fields.v(t, x - dx, y)) / (2 * dx);
                const double vy = (fields.v(t, x, y + dy) - fields.v(t, x, y - dy)) / (2 * dy);
                const double hx = (fields.h(t, x + dx) - fields.h(t, x - dx)) / (2 * dx);
                const double v0 = fields.v(t, x, y);
                const double ux = ux_integral(t, x, y);
                slot.r1 = vt + v0 * vx - ux * vy + hx;
                slot.ok1 = true;
            });
            if (slot.want2) {
                detail::guarded([&] {
                    auto flux = [&](double xx) {
                        const double hh = fields.h(t, xx);
                        return integrate_fixed(
                            [&](double s) {
                                return fields.v(t, xx, hh * s * s) * 2.0 * hh * s;
                            },
                            0.0, 1.0, probe.quadrature_panels);
                    };
                    const double ht = (fields.h(t + dt, x) - fields.h(t - dt, x)) / (2 * dt);
                    slot.r2 = ht + (flux(x + dx) - flux(x - dx)) / (2 * dx);
                    slot.ok2 = true;
                });
            }
        }
    });

    for (const auto& s : slots) {
        if (s.ok1)
            r1.add(s.r1);
        else
            ++r1.masked;
        if (s.want2) {
            if (s.ok2)
                r2.add(s.r2);
            else
                ++r2.masked;
        }
    }
    r1.finish();
    r2.finish();
    return ResidualReport{{r1, r2}};
}

/// Residual of the substituted potential form
///   u_ty + u_y u_xy - u_x u_yy + H_xx = 0
/// plus the boundary pairings u(t, x, 0) = 0 and u(t, x, H_x) = -H_t.
/// Surface checks where H_x leaves [0, y_max] are skipped and counted.
inline ResidualReport substituted_residual(const SolutionFields& fields, const GridSpec& grid,
                                           const ProbeOptions& probe = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const auto& ya = grid.axis("y");
    const double dt = ta.spacing(), dx = xa.spacing(), dy = ya.spacing();

    const auto tp = detail::probe_coords(ta, probe.segments_per_axis);
    const auto xp = detail::probe_coords(xa, probe.segments_per_axis);
    const auto yp = detail::probe_coords(ya, probe.segments_per_axis);

    EquationResidual interior{"substituted.interior"};
    EquationResidual surface{"substituted.surface_bc"};
    EquationResidual bottom{"substituted.bottom_bc"};

    struct Slot {
        double ri = 0;
        bool oki = false;
        double rs = 0;
        int state_s = 0;  // 1 evaluated, 2 surface out of sampled range
        double rb = 0;
        bool okb = false;
        bool want_bc = false;
    };
    std::vector<Slot> slots(tp.size() * xp.size() * yp.size());

    parallel_for(tp.size() * xp.size(), probe.threads, [&](std::size_t col) {
        const double t = tp[col / xp.size()];
        const double x = xp[col % xp.size()];
        const bool col_valid = fields.valid(t, x) && fields.valid(t, x + dx) &&
                               fields.valid(t, x - dx) && fields.valid(t + dt, x) &&
                               fields.valid(t - dt, x);
        for (std::size_t c = 0; c < yp.size(); ++c) {
            Slot& slot = slots[col * yp.size() + c];
            slot.want_bc = c == 0;
            if (!col_valid) continue;
            const double y = yp[c];
            detail::guarded([&] {
                const auto& u = fields.u;
                const double uty = (u(t + dt, x, y + dy) - u(t + dt, x, y - dy) -
                                    u(t - dt, x, y + dy) + u(t - dt, x, y - dy)) /
                                   (4 * dt * dy);
                const double uxy = (u(t, x + dx, y + dy) - u(t, x + dx, y - dy) -
                                    u(t, x - dx, y + dy) + u(t, x - dx, y - dy)) /
                                   (4 * dx * dy);
                const double uy = (u(t, x, y + dy) - u(t, x, y - dy)) / (2 * dy);
                const double ux = (u(t, x + dx, y) - u(t, x - dx, y)) / (2 * dx);
                const double uyy = (u(t, x, y + dy) - 2 * u(t, x, y) + u(t, x, y - dy)) / (dy * dy);
                const double hxx =
                    (fields.H_x(t, x + dx) - fields.H_x(t, x - dx)) / (2 * dx);
                slot.ri = uty + uy * uxy - ux * uyy + hxx;
                slot.oki = true;
            });
            if (slot.want_bc) {
                detail::guarded([&] {
                    const double ys = fields.H_x(t, x);
                    if (ys < 0.0 || ys > ya.max + 1e-12) {
                        slot.state_s = 2;
                        return;
                    }
                    slot.rs = fields.u(t, x, ys) + fields.H_t(t, x);
                    slot.state_s = 1;
                });
                detail::guarded([&] {
                    slot.rb = fields.u(t, x, 0.0);
                    slot.okb = true;
                });
            }
        }
    });

    for (const auto& s : slots) {
        if (s.oki)
            interior.add(s.ri);
        else
            ++interior.masked;
        if (s.want_bc) {
            if (s.state_s == 1)
                surface.add(s.rs);
            else
                ++surface.masked;
            if (s.okb)
                bottom.add(s.rb);
            else
                ++bottom.masked;
        }
    }
    interior.finish();
    surface.finish();
    bottom.finish();
    return ResidualReport{{interior, surface, bottom}};
}

/// Residual of the collisionless transport equation
///   -G_t + λ G_x - H_xx G_λ = 0
/// with all derivatives of G by central differences. Probes whose stencil
/// cannot be evaluated (e.g. λ ± dλ outside G's meaningful range) are masked.
inline ResidualReport kinetic_residual(const DistributionG& G,
                                       const std::function<double(double, double)>& Hxx,
                                       const GridSpec& grid, const ProbeOptions& probe = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const auto& la = grid.axis("lam");
    const double dt = ta.spacing(), dx = xa.spacing(), dl = la.spacing();

    const auto tp = detail::probe_coords(ta, probe.segments_per_axis);
    const auto xp = detail::probe_coords(xa, probe.segments_per_axis);
    const auto lp = detail::probe_coords(la, probe.segments_per_axis);

    EquationResidual res{"kinetic"};
    struct Slot {
        double r = 0;
        bool ok = false;
    };
    std::vector<Slot> slots(tp.size() * xp.size() * lp.size());

    parallel_for(slots.size(), probe.threads, [&](std::size_t idx) {
        const double t = tp[idx / (xp.size() * lp.size())];
        const double x = xp[(idx / lp.size()) % xp.size()];
        const double lam = lp[idx % lp.size()];
        Slot& slot = slots[idx];
        detail::guarded([&] {
            const double gt = (G.value(t + dt, x, lam) - G.value(t - dt, x, lam)) / (2 * dt);
            const double gx = (G.value(t, x + dx, lam) - G.value(t, x - dx, lam)) / (2 * dx);
            const double gl = (G.value(t, x, lam + dl) - G.value(t, x, lam - dl)) / (2 * dl);
            slot.r = -gt + lam * gx - Hxx(t, x) * gl;
            slot.ok = true;
        });
    });

    for (const auto& s : slots) {
        if (s.ok)
            res.add(s.r);
        else
            ++res.masked;
    }
    res.finish();
    return ResidualReport{{res}};
}

/// Residuals of the forced advection equations for the boundary pair,
///   ν_t - ν ν_x - H_xx = 0,   μ_t - μ μ_x - H_xx = 0,
/// derivatives by central differences on (t, x) probes.
inline ResidualReport monge_residual(const BoundaryPair& pair,
                                     const std::function<double(double, double)>& Hxx,
                                     const GridSpec& grid, const ProbeOptions& probe = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const double dt = ta.spacing(), dx = xa.spacing();

    const auto tp = detail::probe_coords(ta, probe.segments_per_axis);
    const auto xp = detail::probe_coords(xa, probe.segments_per_axis);

    EquationResidual rn{"monge.nu"};
    EquationResidual rm{"monge.mu"};
    struct Slot {
        double rn = 0, rm = 0;
        bool ok = false;
    };
    std::vector<Slot> slots(tp.size() * xp.size());

    parallel_for(slots.size(), probe.threads, [&](std::size_t idx) {
        const double t = tp[idx / xp.size()];
        const double x = xp[idx % xp.size()];
        Slot& slot = slots[idx];
        detail::guarded([&] {
            const double f = Hxx(t, x);
            auto advect = [&](const std::function<double(double, double)>& w) {
                const double wt = (w(t + dt, x) - w(t - dt, x)) / (2 * dt);
                const double wx = (w(t, x + dx) - w(t, x - dx)) / (2 * dx);
                return wt - w(t, x) * wx - f;
            };
            slot.rn = advect(pair.nu);
            slot.rm = advect(pair.mu);
            slot.ok = true;
        });
    });

    for (const auto& s : slots) {
        if (s.ok) {
            rn.add(s.rn);
            rm.add(s.rm);
        } else {
            ++rn.masked;
            ++rm.masked;
        }
    }
    rn.finish();
    rm.finish();
    return ResidualReport{{rn, rm}};
}

/// Residual of the master equation of a λ(t, x, g) family,
///   λ_t - λ λ_x - s ∫_{g_lo}^{g_hi} g' λ_gx(t, x, g') dg' = 0,
/// from the family's analytic partials with an adaptive g-quadrature. The
/// moment sign s defaults to the resolved depth convention.
inline ResidualReport cr_residual(const LambdaFamily& fam, const GridSpec& grid,
                                  const std::vector<double>& g_probes, int moment_sign = -1,
                                  const ProbeOptions& probe = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const auto tp = detail::probe_coords(ta, probe.segments_per_axis);
    const auto xp = detail::probe_coords(xa, probe.segments_per_axis);
    if (g_probes.empty()) throw VerifyError("cr_residual: no g probes");

    EquationResidual res{"cr"};
    struct Slot {
        double r = 0;
        bool ok = false;
    };
    std::vector<Slot> slots(tp.size() * xp.size() * g_probes.size());

    parallel_for(tp.size() * xp.size(), probe.threads, [&](std::size_t col) {
        const double t = tp[col / xp.size()];
        const double x = xp[col % xp.size()];
        if (fam.valid && !fam.valid(t, x)) return;
        double moment = 0;
        const bool have_moment = detail::guarded([&] {
            moment = integrate([&](double gp) { return gp * fam.lambda_gx(t, x, gp); },
                               fam.g_lo, fam.g_hi, {1e-13, 1e-13, 200});
        });
        if (!have_moment) return;
        for (std::size_t c = 0; c < g_probes.size(); ++c) {
            Slot& slot = slots[col * g_probes.size() + c];
            const double g = g_probes[c];
            detail::guarded([&] {
                slot.r = fam.lambda_t(t, x, g) - fam.lambda(t, x, g) * fam.lambda_x(t, x, g) -
                         moment_sign * moment;
                slot.ok = true;
            });
        }
    });

    for (const auto& s : slots) {
        if (s.ok)
            res.add(s.r);
        else
            ++res.masked;
    }
    res.finish();
    return ResidualReport{{res}};
}

/// Hamilton-Jacobi pairing. With the action S(t, x, g) = -∫_{x0}^x λ dx' +
/// c(t, g) (so S_x = -λ) and the nonlocal potential
///   W(t, x) = s ∫ g λ_g dg        (s the resolved moment sign),
/// the relation S_t + S_x²/2 + W = 0 is gauged to hold at x0 by the choice
/// of c_t; the reported residual is the relation at every other probe x:
///   r(t, x, g) = -∫_{x0}^x λ_t dx' - λ(t,x0,g)²/2 - W(t,x0)
///                + λ(t,x,g)²/2 + W(t,x).
/// λ_t and λ_g come from central differences of λ values at the grid
/// spacings (the `g` axis sets the λ_g stencil), the x-quadrature adaptive.
inline ResidualReport hj_residual(const LambdaFamily& fam, const GridSpec& grid,
                                  const std::vector<double>& g_probes, double x0,
                                  int moment_sign = -1, const ProbeOptions& probe = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const double dt = ta.spacing();
    const double dg = grid.has_axis("g") ? grid.axis("g").spacing()
                                         : (fam.g_hi - fam.g_lo) / 16.0;
    const auto tp = detail::probe_coords(ta, probe.segments_per_axis);
    const auto xp = detail::probe_coords(xa, probe.segments_per_axis);
    if (g_probes.empty()) throw VerifyError("hj_residual: no g probes");

    auto lam_t = [&](double t, double x, double g) {
        return (fam.lambda(t + dt, x, g) - fam.lambda(t - dt, x, g)) / (2 * dt);
    };
    auto W = [&](double t, double x) {
        return moment_sign *
               integrate(
                   [&](double gp) {
                       return gp *
                              (fam.lambda(t, x, gp + dg) - fam.lambda(t, x, gp - dg)) /
                              (2 * dg);
                   },
                   fam.g_lo, fam.g_hi, {1e-12, 1e-12, 200});
    };

    EquationResidual res{"hj"};
    struct Slot {
        double r = 0;
        bool ok = false;
    };
    std::vector<Slot> slots(tp.size() * xp.size() * g_probes.size());

    parallel_for(tp.size() * xp.size(), probe.threads, [&](std::size_t col) {
        const double t = tp[col / xp.size()];
        const double x = xp[col % xp.size()];
        double Wx = 0, W0 = 0;
        const bool have_w = detail::guarded([&] {
            Wx = W(t, x);
            W0 = W(t, x0);
        });
        if (!have_w) return;
        for (std::size_t c = 0; c < g_probes.size(); ++c) {
            Slot& slot = slots[col * g_probes.size() + c];
            const double g = g_probes[c];
            detail::guarded([&] {
                const double l0 = fam.lambda(t, x0, g);
                const double lx = fam.lambda(t, x, g);
                const double st_drift = -integrate(
                    [&](double xq) { return lam_t(t, xq, g); }, x0, x, {1e-12, 1e-12, 200});
                slot.r = st_drift - 0.5 * l0 * l0 - W0 + 0.5 * lx * lx + Wx;
                slot.ok = true;
            });
        }
    });

    for (const auto& s : slots) {
        if (s.ok)
            res.add(s.r);
        else
            ++res.masked;
    }
    res.finish();
    return ResidualReport{{res}};
}

/// Runs a residual check across nested grids and fits the convergence order
/// of the max L∞ norm against the coarsest axis spacing of each level. The
/// slope is reported for any ladder above the floor, but a non-monotone
/// ladder is flagged and never certifies convergence.
inline ConvergenceReport convergence_order(
    const std::function<ResidualReport(const GridSpec&)>& check,
    const std::vector<GridSpec>& levels, double floor = 1e-12) {
    if (levels.size() < 3) throw VerifyError("convergence_order: need >= 3 nested levels");
    ConvergenceReport rep;
    rep.floor = floor;
    for (const auto& grid : levels) {
        double spacing = 0;
        for (const auto& ax : grid.axes) spacing = std::max(spacing, ax.spacing());
        const ResidualReport rr = check(grid);
        rep.ladder.push_back({spacing, rr.max_linf(), rr.total_samples(), rr.total_masked()});
    }
    rep.at_floor = true;
    for (const auto& e : rep.ladder)
        if (e.linf > floor) rep.at_floor = false;
    rep.monotone = true;
    for (std::size_t i = 1; i < rep.ladder.size(); ++i)
        if (rep.ladder[i].linf > rep.ladder[i - 1].linf) rep.monotone = false;
    if (!rep.at_floor) {
        std::vector<double> h, n;
        for (const auto& e : rep.ladder) {
            h.push_back(e.spacing);
            n.push_back(std::max(e.linf, 1e-300));
        }
        rep.order = fit_order(h, n);
    }
    return rep;
}

/// Nested refinements of a base grid: factors {1, 2, 4, ...} for `levels`.
inline std::vector<GridSpec> refinement_levels(const GridSpec& base, std::size_t levels) {
    std::vector<GridSpec> out;
    for (std::size_t i = 0; i < levels; ++i) out.push_back(base.refined(std::size_t{1} << i));
    return out;
}

}  // namespace benney
