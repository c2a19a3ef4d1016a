#pragma once

// Solution families: each one supplies a distribution function G(t, x, λ)
// together with the boundary values ν (bottom) and μ (top) of its λ-range,
// and, where the family is parametrized by level curves λ(t, x, g), the
// parametrization with its partial derivatives.
//
// Three constructions are provided:
//   * free-streaming data G(t, x, λ) = G0(x + λt, λ) with flat surface,
//   * constant G = -1/(2A) recovered from a hodograph potential θ(Σ, R),
//   * the rational parametrization λ = -(x + Φ(t) + V(g))/(t + U(g)) + Φ'(t).

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "benney/expr.hpp"
#include "benney/numerics.hpp"

namespace benney {

struct FamilyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {
inline std::string at_point(double t, double x) {
    std::ostringstream os;
    os << "(t=" << t << ", x=" << x << ")";
    return os.str();
}
}  // namespace detail

/// A family of level curves λ(t, x, g), g in [g_lo, g_hi], with partial
/// derivatives (analytic where the construction permits). `forcing` is the
/// H_xx acceleration field entering dλ/dt = H_xx along characteristics,
/// when the family knows it in closed form.
struct LambdaFamily {
    double g_lo = 0;
    double g_hi = 1;
    std::function<double(double, double, double)> lambda;
    std::function<double(double, double, double)> lambda_t;
    std::function<double(double, double, double)> lambda_x;
    std::function<double(double, double, double)> lambda_g;
    std::function<double(double, double, double)> lambda_gx;
    std::function<bool(double, double)> valid;
    std::function<double(double, double)> forcing;
    std::string name;
};

/// A distribution function G(t, x, λ) with the λ-interval spanned by the
/// boundary values at each (t, x). Evaluation outside the meaningful range
/// throws FamilyError for inverted families.
struct LambdaFamily;

struct DistributionG {
    enum class Provenance { Constant, FreeStreaming, InvertedFromLambda };
    std::function<double(double, double, double)> value;
    std::function<std::pair<double, double>(double, double)> lambda_range;
    Provenance provenance = Provenance::Constant;
    /// Set for inverted families: lets moment integrals run in g-space,
    /// where the integrand needs no nested inversion.
    std::shared_ptr<const LambdaFamily> source;
};

/// Bottom (ν) and top (μ) boundary velocities as fields over (t, x).
struct BoundaryPair {
    std::function<double(double, double)> nu;
    std::function<double(double, double)> mu;
};

/// Hodograph potential θ(Σ, R) for the constant-G family, with first
/// partials; A is the family constant in G = -1/(2A).
struct HodographTheta {
    std::function<double(double, double)> theta;
    std::function<double(double, double)> theta_S;
    std::function<double(double, double)> theta_R;
    double A = 1.0;
};

/// Parameters of the rational family: monotone profile expressions U(g),
/// V(g) and the g-interval. phi_sign is the sign convention of the drift
/// integral Φ; the default is the convention selected by sign resolution.
struct RationalParams {
    expr::Ast U;
    expr::Ast V;
    double g_lo = 0;
    double g_hi = 1;
    int phi_sign = +1;
};

struct FreestreamFamily {
    DistributionG G;
    BoundaryPair boundary;
};

struct ConstFamily {
    DistributionG G;
    BoundaryPair boundary;
    double A = 1.0;
};

struct RationalFamily {
    LambdaFamily family;
    DistributionG G;
    BoundaryPair boundary;
};

/// Free-streaming data: G(t, x, λ) = G0(x + λt, λ). The bottom boundary ν
/// solves G0(x + νt, ν) = g_lo; the surface is flat (μ = ν, so the depth
/// moment vanishes identically). G0 is an expression in (xi, lam).
/// Bracketing of ν is checked over the (t, x) nodes of `domain`.
inline FreestreamFamily freestream_family(const expr::Ast& G0, double g_lo,
                                          const GridSpec& domain, double bracket_seed = 0.0) {
    auto compiled = std::make_shared<expr::Compiled>(G0.compile());
    auto value = [compiled](double t, double x, double lam) {
        const double b[] = {x + lam * t, lam};
        return compiled->eval(std::span<const double>(b, 2));
    };

    auto nu = [value, g_lo, bracket_seed](double t, double x) {
        auto f = [&](double w) { return value(t, x, w) - g_lo; };
        double lo = bracket_seed, hi = bracket_seed;
        double step = 0.5;
        double flo, fhi;
        try {
            flo = f(lo);
            if (std::abs(flo) <= 1e-13) return lo;
            fhi = flo;
            do {
                lo -= step;
                hi += step;
                step *= 2;
                flo = f(lo);
                fhi = f(hi);
            } while (flo * fhi > 0 && step < 1e18);
        } catch (const std::exception& e) {
            throw FamilyError("freestream boundary: " + std::string(e.what()) + " at " +
                              detail::at_point(t, x));
        }
        if (flo * fhi > 0)
            throw FamilyError("freestream boundary: no bracket for nu at " +
                              detail::at_point(t, x));
        return find_root(f, lo, hi, {1e-13, 1e-13, 200});
    };

    domain.validate();
    const auto& ta = domain.axis("t");
    const auto& xa = domain.axis("x");
    for (std::size_t i = 0; i < ta.count; ++i)
        for (std::size_t j = 0; j < xa.count; ++j) (void)nu(ta.coord(i), xa.coord(j));

    FreestreamFamily fam;
    fam.G.value = value;
    fam.G.provenance = DistributionG::Provenance::FreeStreaming;
    fam.G.lambda_range = [nu](double t, double x) {
        const double n = nu(t, x);
        return std::pair{n, n};
    };
    fam.boundary.nu = nu;
    fam.boundary.mu = nu;
    return fam;
}

/// Separable hodograph potential θ = exp(kΣ)·ρ(R) with ρ'' = k²(1 + 1/(AR))ρ,
/// ρ(R₀) = 1, ρ'(R₀) = 0 at the left end of R_range, tabulated by RK4 and
/// interpolated with cubic Hermite pieces. The range must stay clear of
/// R = 0 and of the coefficient zero R = -1/A.
inline HodographTheta theta_separable(double k, double A, std::pair<double, double> R_range,
                                      int steps) {
    if (steps < 100) throw FamilyError("theta_separable: steps must be >= 100");
    if (A == 0) throw FamilyError("theta_separable: A must be nonzero");
    const double lo = R_range.first, hi = R_range.second;
    if (!(lo < hi)) throw FamilyError("theta_separable: need R_range.first < R_range.second");
    auto clear_of = [&](double sing, double margin) {
        if (lo - margin <= sing && sing <= hi + margin)
            throw FamilyError("theta_separable: R_range too close to a singular radius");
    };
    const double span = hi - lo;
    double pad = 0.05 * span;
    for (double sing : {0.0, -1.0 / A}) {
        if (lo <= sing && sing <= hi)
            throw FamilyError("theta_separable: R_range crosses a singular radius");
        pad = std::min({pad, 0.5 * std::abs(lo - sing), 0.5 * std::abs(hi - sing)});
    }
    clear_of(0.0, 1e-9);
    clear_of(-1.0 / A, 1e-9);

    const int n = 4 * steps;
    const double dR = (span + 2 * pad) / n;
    const int n_left = static_cast<int>(std::ceil(pad / dR - 1e-12));
    auto rhs = [k, A](double R, const std::vector<double>& y) {
        return std::vector<double>{y[1], k * k * (1.0 + 1.0 / (A * R)) * y[0]};
    };
    std::vector<double> rho(n + 1), rho_p(n + 1);
    std::vector<double> y{1.0, 0.0};
    rho[n_left] = 1.0;
    rho_p[n_left] = 0.0;
    for (int i = n_left; i < n; ++i) {
        y = rk4_step(rhs, lo + (i - n_left) * dR, y, dR);
        rho[i + 1] = y[0];
        rho_p[i + 1] = y[1];
    }
    y = {1.0, 0.0};
    for (int i = n_left; i > 0; --i) {
        y = rk4_step(rhs, lo + (i - n_left) * dR, y, -dR);
        rho[i - 1] = y[0];
        rho_p[i - 1] = y[1];
    }
    std::vector<double> rho_pp(n + 1);
    for (int i = 0; i <= n; ++i) {
        const double R = lo - n_left * dR + i * dR;
        rho_pp[i] = k * k * (1.0 + 1.0 / (A * R)) * rho[i];
    }
    const double R_first = lo - n_left * dR;
    auto rho_tab = std::make_shared<CubicHermite>(R_first, dR, rho, rho_p);
    auto rho_p_tab = std::make_shared<CubicHermite>(R_first, dR, rho_p, rho_pp);

    HodographTheta out;
    out.A = A;
    out.theta = [k, rho_tab](double S, double R) { return std::exp(k * S) * rho_tab->value(R); };
    out.theta_S = [k, rho_tab](double S, double R) {
        return k * std::exp(k * S) * rho_tab->value(R);
    };
    out.theta_R = [k, rho_p_tab](double S, double R) {
        return std::exp(k * S) * rho_p_tab->value(R);
    };
    return out;
}

/// The linear potential θ = Σ (θ_Σ = 1, θ_R = 0).
inline HodographTheta theta_sigma(double A) {
    HodographTheta out;
    out.A = A;
    out.theta = [](double S, double) { return S; };
    out.theta_S = [](double, double) { return 1.0; };
    out.theta_R = [](double, double) { return 0.0; };
    return out;
}

/// Constant distribution G = -1/(2A) with boundaries recovered by inverting
/// the hodograph map
///   t = θ_Σ/(2R),  x = (R·θ_R - Σ·θ_Σ)/(2R)
/// for (Σ, R) = ((μ+ν)/2, (μ-ν)/2). The map is solved over the (t, x) nodes
/// of `domain` by Newton continuation from `corner_seed`; arbitrary queries
/// re-solve with a bilinear seed from that table.
inline ConstFamily const_family(const HodographTheta& theta, const GridSpec& domain,
                                std::pair<double, double> corner_seed) {
    domain.validate();
    const double A = theta.A;
    if (A == 0) throw FamilyError("const_family: A must be nonzero");
    {
        const auto [S0, R0] = corner_seed;
        if (std::abs(theta.theta_S(S0, R0)) < 1e-13 && std::abs(theta.theta_R(S0, R0)) < 1e-13)
            throw FamilyError("const_family: degenerate theta (hodograph map collapses)");
    }

    auto map = [theta](double S, double R, double t, double x) {
        const double tS = theta.theta_S(S, R);
        const double tR = theta.theta_R(S, R);
        return std::pair{tS / (2 * R) - t, (R * tR - S * tS) / (2 * R) - x};
    };

    const auto ta = domain.axis("t");
    const auto xa = domain.axis("x");
    auto sig_tab = std::make_shared<std::vector<double>>(ta.count * xa.count);
    auto r_tab = std::make_shared<std::vector<double>>(ta.count * xa.count);
    const Tolerance newton_tol{1e-13, 1e-13, 100};
    double seed_S = corner_seed.first, seed_R = corner_seed.second;
    for (std::size_t i = 0; i < ta.count; ++i) {
        const double t = ta.coord(i);
        for (std::size_t jj = 0; jj < xa.count; ++jj) {
            // snake over rows so each node's seed is an adjacent solution
            const std::size_t j = (i % 2 == 0) ? jj : xa.count - 1 - jj;
            const double x = xa.coord(j);
            try {
                auto F = [&](double S, double R) { return map(S, R, t, x); };
                std::tie(seed_S, seed_R) = newton2d(F, seed_S, seed_R, newton_tol);
            } catch (const NumericsError& e) {
                throw FamilyError("const_family: hodograph inversion failed at " +
                                  detail::at_point(t, x) + ": " + e.what());
            }
            if (std::abs(seed_R) < 1e-9)
                throw FamilyError("const_family: boundary collapse (R -> 0) at " +
                                  detail::at_point(t, x));
            (*sig_tab)[i * xa.count + j] = seed_S;
            (*r_tab)[i * xa.count + j] = seed_R;
        }
    }

    auto solve = [map, sig_tab, r_tab, ta, xa, newton_tol](double t, double x) {
        auto clampi = [](double u, std::size_t n) {
            const double c = std::min(std::max(u, 0.0), static_cast<double>(n - 2));
            return std::pair{static_cast<std::size_t>(c), c - std::floor(c)};
        };
        const auto [i, ft] = clampi((t - ta.min) / ta.spacing(), ta.count);
        const auto [j, fx] = clampi((x - xa.min) / xa.spacing(), xa.count);
        auto blend = [&](const std::vector<double>& tab) {
            const double a = tab[i * xa.count + j] * (1 - fx) + tab[i * xa.count + j + 1] * fx;
            const double b =
                tab[(i + 1) * xa.count + j] * (1 - fx) + tab[(i + 1) * xa.count + j + 1] * fx;
            return a * (1 - ft) + b * ft;
        };
        auto F = [&](double S, double R) { return map(S, R, t, x); };
        try {
            const auto [S, R] = newton2d(F, blend(*sig_tab), blend(*r_tab), newton_tol);
            if (std::abs(R) < 1e-9)
                throw FamilyError("const_family: boundary collapse (R -> 0) at " +
                                  detail::at_point(t, x));
            return std::pair{S, R};
        } catch (const NumericsError& e) {
            throw FamilyError("const_family: hodograph inversion failed at " +
                              detail::at_point(t, x) + ": " + e.what());
        }
    };

    ConstFamily fam;
    fam.A = A;
    fam.G.value = [A](double, double, double) { return -1.0 / (2.0 * A); };
    fam.G.provenance = DistributionG::Provenance::Constant;
    fam.G.lambda_range = [solve](double t, double x) {
        const auto [S, R] = solve(t, x);
        return std::pair{S - std::abs(R), S + std::abs(R)};
    };
    fam.boundary.nu = [solve](double t, double x) {
        const auto [S, R] = solve(t, x);
        return S - R;
    };
    fam.boundary.mu = [solve](double t, double x) {
        const auto [S, R] = solve(t, x);
        return S + R;
    };
    return fam;
}

namespace detail {

struct PhiValues {
    double phi, phi_t, phi_tt;
};

/// Per-t cache of the rational family's drift integrals
///   Φ(t)   = σ ∫ g U'(g) ln(t + U(g)) dg
///   Φ'(t)  = σ ∫ g U'(g) / (t + U(g)) dg
///   Φ''(t) = -σ ∫ g U'(g) / (t + U(g))² dg
class PhiCache {
  public:
    PhiCache(expr::Compiled U, expr::Compiled Ug, double g_lo, double g_hi, int sign)
        : U_(std::move(U)), Ug_(std::move(Ug)), g_lo_(g_lo), g_hi_(g_hi), sign_(sign) {}

    PhiValues at(double t) const {
        // one-entry thread-local memo: hot loops evaluate many g at fixed t
        thread_local const PhiCache* last_self = nullptr;
        thread_local double last_t = 0;
        thread_local PhiValues last_v{};
        if (last_self == this && last_t == t) return last_v;
        {
            std::lock_guard lock(mu_);
            const auto it = cache_.find(t);
            if (it != cache_.end()) {
                last_self = this;
                last_t = t;
                last_v = it->second;
                return it->second;
            }
        }
        const Tolerance tol{1e-13, 1e-13, 200};
        auto U = [this](double g) { return U_.eval(std::span<const double>(&g, 1)); };
        auto Ug = [this](double g) { return Ug_.eval(std::span<const double>(&g, 1)); };
        PhiValues v;
        try {
            v.phi = sign_ * integrate(
                                [&](double g) { return g * Ug(g) * std::log(t + U(g)); }, g_lo_,
                                g_hi_, tol);
            v.phi_t =
                sign_ * integrate([&](double g) { return g * Ug(g) / (t + U(g)); }, g_lo_, g_hi_,
                                  tol);
            v.phi_tt = -sign_ * integrate(
                                    [&](double g) {
                                        const double d = t + U(g);
                                        return g * Ug(g) / (d * d);
                                    },
                                    g_lo_, g_hi_, tol);
        } catch (const std::exception& e) {
            throw FamilyError("rational family: drift integral failed at t=" +
                              std::to_string(t) + ": " + e.what());
        }
        std::lock_guard lock(mu_);
        cache_.emplace(t, v);
        last_self = this;
        last_t = t;
        last_v = v;
        return v;
    }

  private:
    expr::Compiled U_, Ug_;
    double g_lo_, g_hi_;
    int sign_;
    mutable std::mutex mu_;
    mutable std::map<double, PhiValues> cache_;
};

}  // namespace detail

/// Inverts λ(t, x, ·) at one point: returns the g with λ(t, x, g) = lam.
/// Requires lam inside the boundary range and a monotone slice.
inline double invert_lambda_to_G(const LambdaFamily& fam, double t, double x, double lam,
                                 const Tolerance& tol = {1e-13, 1e-13, 200}) {
    const double lo = fam.lambda(t, x, fam.g_lo);
    const double hi = fam.lambda(t, x, fam.g_hi);
    const auto [mn, mx] = std::minmax(lo, hi);
    const double slack = 1e-12 * (1.0 + std::abs(mn) + std::abs(mx));
    if (lam < mn - slack || lam > mx + slack)
        throw FamilyError("invert_lambda_to_G: lam outside boundary range at " +
                          detail::at_point(t, x));
    const double gm = 0.5 * (fam.g_lo + fam.g_hi);
    const double d0 = fam.lambda_g(t, x, fam.g_lo);
    const double d1 = fam.lambda_g(t, x, gm);
    const double d2 = fam.lambda_g(t, x, fam.g_hi);
    if (d0 * d1 <= 0 || d1 * d2 <= 0)
        throw FamilyError("invert_lambda_to_G: non-monotone lambda slice at " +
                          detail::at_point(t, x));
    if (lam <= mn) return lo <= hi ? fam.g_lo : fam.g_hi;
    if (lam >= mx) return lo <= hi ? fam.g_hi : fam.g_lo;
    return find_root([&](double g) { return fam.lambda(t, x, g) - lam; }, fam.g_lo, fam.g_hi,
                     tol);
}

/// Wraps a λ-family as a distribution function: G(t, x, λ) is the parameter
/// value g at which the family passes through λ.
inline DistributionG to_distribution(const LambdaFamily& fam) {
    DistributionG G;
    G.provenance = DistributionG::Provenance::InvertedFromLambda;
    G.source = std::make_shared<LambdaFamily>(fam);
    G.value = [fam](double t, double x, double lam) {
        return invert_lambda_to_G(fam, t, x, lam);
    };
    G.lambda_range = [fam](double t, double x) {
        const double a = fam.lambda(t, x, fam.g_lo);
        const double b = fam.lambda(t, x, fam.g_hi);
        return std::pair{std::min(a, b), std::max(a, b)};
    };
    return G;
}

/// The rational family
///   λ(t, x, g) = -(x + Φ(t) + V(g))/(t + U(g)) + Φ'(t)
/// with all partials in closed form given the cached drift integrals.
/// Validity at (t, x) means t + U > 0 and a sign-definite λ_g across the
/// g-interval.
inline RationalFamily rational_family(const RationalParams& params, const GridSpec& domain) {
    domain.validate();
    if (!(params.g_lo < params.g_hi))
        throw FamilyError("rational_family: need g_lo < g_hi");
    if (params.phi_sign != 1 && params.phi_sign != -1)
        throw FamilyError("rational_family: phi_sign must be +1 or -1");

    auto U = std::make_shared<expr::Compiled>(params.U.compile());
    auto V = std::make_shared<expr::Compiled>(params.V.compile());
    auto Ug = std::make_shared<expr::Compiled>(params.U.derivative("g").compile());
    auto Vg = std::make_shared<expr::Compiled>(params.V.derivative("g").compile());
    auto phi = std::make_shared<detail::PhiCache>(params.U.compile(),
                                                  params.U.derivative("g").compile(),
                                                  params.g_lo, params.g_hi, params.phi_sign);
    auto evalg = [](const std::shared_ptr<expr::Compiled>& c, double g) {
        return c->eval(std::span<const double>(&g, 1));
    };

    const auto& ta = domain.axis("t");
    for (double t : {ta.min, ta.max})
        for (int s = 0; s <= 8; ++s) {
            const double g =
                params.g_lo + (params.g_hi - params.g_lo) * s / 8.0;
            if (t + evalg(U, g) <= 0)
                throw FamilyError("rational_family: t + U(g) <= 0 at t=" + std::to_string(t) +
                                  ", g=" + std::to_string(g));
        }

    LambdaFamily fam;
    fam.g_lo = params.g_lo;
    fam.g_hi = params.g_hi;
    fam.name = "rational";
    fam.lambda = [U, V, phi, evalg](double t, double x, double g) {
        const auto p = phi->at(t);
        return -(x + p.phi + evalg(V, g)) / (t + evalg(U, g)) + p.phi_t;
    };
    fam.lambda_t = [U, V, phi, evalg](double t, double x, double g) {
        const auto p = phi->at(t);
        const double d = t + evalg(U, g);
        return -p.phi_t / d + (x + p.phi + evalg(V, g)) / (d * d) + p.phi_tt;
    };
    fam.lambda_x = [U, evalg](double t, double, double g) {
        return -1.0 / (t + evalg(U, g));
    };
    fam.lambda_g = [U, V, Ug, Vg, phi, evalg](double t, double x, double g) {
        const auto p = phi->at(t);
        const double d = t + evalg(U, g);
        return -evalg(Vg, g) / d + (x + p.phi + evalg(V, g)) * evalg(Ug, g) / (d * d);
    };
    fam.lambda_gx = [U, Ug, evalg](double t, double, double g) {
        const double d = t + evalg(U, g);
        return evalg(Ug, g) / (d * d);
    };
    fam.forcing = [phi](double t, double) { return phi->at(t).phi_tt; };
    const double g_lo = params.g_lo, g_hi = params.g_hi;
    fam.valid = [U, fam, g_lo, g_hi, evalg](double t, double x) {
        for (int s = 0; s <= 2; ++s) {
            const double g = g_lo + (g_hi - g_lo) * s / 2.0;
            if (t + evalg(U, g) <= 0) return false;
        }
        try {
            const double d0 = fam.lambda_g(t, x, g_lo);
            const double d1 = fam.lambda_g(t, x, 0.5 * (g_lo + g_hi));
            const double d2 = fam.lambda_g(t, x, g_hi);
            return d0 * d1 > 0 && d1 * d2 > 0;
        } catch (const std::exception&) {
            return false;
        }
    };

    RationalFamily out;
    out.family = fam;
    out.G = to_distribution(fam);
    out.boundary.nu = [fam](double t, double x) { return fam.lambda(t, x, fam.g_lo); };
    out.boundary.mu = [fam](double t, double x) { return fam.lambda(t, x, fam.g_hi); };
    return out;
}

}  // namespace benney
