#pragma once

// Reconstruction of the flow fields from a distribution function G and its
// boundary pair (ν, μ):
//
//   v(t, x, y):  the root of   y + ∫_ν^{-v} G(t, x, λ) dλ = 0,
//   u(t, x, y) = ∫_ν^{-v} λ G(t, x, λ) dλ,
//   h(t, x)    = s_h ∫_ν^μ G(t, x, λ) dλ,
//   H_t(t, x)  = s_h ∫_ν^μ λ G(t, x, λ) dλ,
//
// with the sign convention s_h fixed by SignConvention. For distributions
// inverted from a λ(t, x, g) family the moments are evaluated in g-space
// (same integrals under λ = λ(t, x, g)), which avoids nested inversions;
// the λ-space form is what the verifier re-evaluates independently.

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "benney/families.hpp"
#include "benney/numerics.hpp"

namespace benney {

struct ReconstructionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// The two free signs of the construction: s_h orients the depth moment,
/// s_phi picks the drift-integral sign of the rational family. Defaults are
/// the resolved convention (the unique pair passing sign resolution).
struct SignConvention {
    int s_h = -1;
    int s_phi = +1;

    bool operator==(const SignConvention&) const = default;
};

struct SolveOptions {
    Tolerance tol{1e-12, 1e-12, 200};
    double max_span = 50.0;       // bracket bound |w - nu| for λ-space solves
    unsigned threads = 1;
    double abort_masked_fraction = 0.5;
};

struct FieldSample {
    double t, x, y;
    double v, u, h;
    bool masked;
};

/// Dense reconstructed fields plus pointwise callables. The callables are
/// pure and safe to invoke concurrently.
struct SolutionFields {
    std::function<double(double, double, double)> v;
    std::function<double(double, double, double)> u;
    std::function<double(double, double)> h;
    std::function<double(double, double)> H_x;   // = h
    std::function<double(double, double)> H_t;
    std::function<bool(double, double)> valid;
    SignConvention signs;
    std::string family;
    GridSpec grid;
    std::vector<FieldSample> samples;

    double masked_fraction() const {
        if (samples.empty()) return 0.0;
        std::size_t m = 0;
        for (const auto& s : samples) m += s.masked ? 1 : 0;
        return static_cast<double>(m) / static_cast<double>(samples.size());
    }
};

namespace detail {

// ∫_{g_lo}^{g_star} weight(λ(g)) · g · λ_g dg  (g-space form of the moments)
inline double g_moment(const LambdaFamily& fam, double t, double x, double g_star,
                       const std::function<double(double)>& weight, const Tolerance& tol) {
    return integrate(
        [&](double g) {
            return weight(fam.lambda(t, x, g)) * g * fam.lambda_g(t, x, g);
        },
        fam.g_lo, g_star, tol);
}

}  // namespace detail

/// Solves y + ∫_ν^{-v} G dλ = 0 for v at one point. `seed` is an optional
/// warm start (the w = -v of a neighbouring solve).
inline double solve_v(const DistributionG& G, double nu, double t, double x, double y,
                      std::optional<double> seed = std::nullopt,
                      const SolveOptions& opts = {}) {
    if (!std::isfinite(y) || y < 0)
        throw ReconstructionError("solve_v: y must be finite and non-negative");
    if (y == 0) return -nu;

    if (G.source) {
        // g-space: y + ∫_{g_lo}^{g*} g λ_g dg = 0, then v = -λ(g*).
        const auto& fam = *G.source;
        auto M = [&](double g_star) {
            return y + detail::g_moment(fam, t, x, g_star, [](double) { return 1.0; }, opts.tol);
        };
        const double m_hi = M(fam.g_hi);
        if (m_hi > 0)
            throw ReconstructionError("solve_v: depth exceeds the family's surface at y=" +
                                      std::to_string(y));
        if (m_hi == 0) return -fam.lambda(t, x, fam.g_hi);
        const double g_star = find_root(M, fam.g_lo, fam.g_hi, opts.tol);
        return -fam.lambda(t, x, g_star);
    }

    auto M = [&](double w) { return y + integrate([&](double lam) { return G.value(t, x, lam); },
                                                  nu, w, opts.tol); };
    const double w0 = seed.value_or(nu);
    double fa = M(w0);
    if (std::abs(fa) <= opts.tol.abs) return -w0;
    // the relation is monotone in w (G has one sign), so expand a bracket on
    // the downhill side, watching for a G sign change
    double g_ref = G.value(t, x, w0);
    if (g_ref == 0) g_ref = G.value(t, x, w0 + (fa > 0 ? -1e-9 : 1e-9));
    if (g_ref == 0)
        throw ReconstructionError("solve_v: G vanishes at the seed; cannot orient the bracket");
    const double dir = (fa > 0 ? -1.0 : 1.0) * (g_ref > 0 ? 1.0 : -1.0);
    double step = 1e-3 * (1.0 + std::abs(nu));
    double a = w0, b = w0, fb = fa;
    for (int k = 0; k < 400 && fa * fb > 0; ++k) {
        const double next = b + dir * step;
        if (std::abs(next - nu) > opts.max_span)
            throw ReconstructionError("solve_v: bracket expansion exhausted (|w - nu| > span)");
        // a G sign flip past the probe usually means the step overshot the
        // root into the ill-posed region: retreat before giving up
        const double g_here = G.value(t, x, next);
        if (g_here * g_ref < 0) {
            step *= 0.5;
            if (step < 1e-12 * (1.0 + std::abs(nu)))
                throw ReconstructionError(
                    "solve_v: G changes sign inside the integration range");
            continue;
        }
        a = b;
        fa = fb;
        b = next;
        fb = M(b);
        step *= 2;
    }
    if (fa * fb > 0) throw ReconstructionError("solve_v: no bracket found");
    const auto [lo, hi] = std::minmax(a, b);
    const double w = find_root(M, lo, hi, opts.tol);
    return -w;
}

/// u(t, x, y) = ∫_ν^{-v} λ G dλ for an already-solved v.
inline double compute_u(const DistributionG& G, double nu, double v, double t, double x,
                        const Tolerance& tol = {1e-12, 1e-12, 200}) {
    const double w = -v;
    if (G.source) {
        const auto& fam = *G.source;
        const double g_star = invert_lambda_to_G(fam, t, x, w);
        return detail::g_moment(fam, t, x, g_star, [](double lam) { return lam; }, tol);
    }
    return integrate([&](double lam) { return lam * G.value(t, x, lam); }, nu, w, tol);
}

/// Depth h = s_h ∫_ν^μ G dλ.
inline double compute_h(const DistributionG& G, const BoundaryPair& boundary,
                        const SignConvention& signs, double t, double x,
                        const Tolerance& tol = {1e-12, 1e-12, 200}) {
    if (G.source) {
        const auto& fam = *G.source;
        return signs.s_h *
               detail::g_moment(fam, t, x, fam.g_hi, [](double) { return 1.0; }, tol);
    }
    const double nu = boundary.nu(t, x);
    const double mu = boundary.mu(t, x);
    return signs.s_h * integrate([&](double lam) { return G.value(t, x, lam); }, nu, mu, tol);
}

/// Surface potential rate H_t = s_h ∫_ν^μ λ G dλ.
inline double compute_Ht(const DistributionG& G, const BoundaryPair& boundary,
                         const SignConvention& signs, double t, double x,
                         const Tolerance& tol = {1e-12, 1e-12, 200}) {
    if (G.source) {
        const auto& fam = *G.source;
        return signs.s_h *
               detail::g_moment(fam, t, x, fam.g_hi, [](double lam) { return lam; }, tol);
    }
    const double nu = boundary.nu(t, x);
    const double mu = boundary.mu(t, x);
    return signs.s_h *
           integrate([&](double lam) { return lam * G.value(t, x, lam); }, nu, mu, tol);
}

/// Pointwise field callables without a sampled snapshot.
inline SolutionFields make_fields(const DistributionG& G, const BoundaryPair& boundary,
                                  const SignConvention& signs, const SolveOptions& opts = {},
                                  std::string family_name = {}) {
    SolutionFields f;
    f.signs = signs;
    f.family = std::move(family_name);
    f.v = [G, boundary, opts](double t, double x, double y) {
        return solve_v(G, boundary.nu(t, x), t, x, y, std::nullopt, opts);
    };
    f.u = [G, boundary, opts](double t, double x, double y) {
        const double nu = boundary.nu(t, x);
        const double v = solve_v(G, nu, t, x, y, std::nullopt, opts);
        return compute_u(G, nu, v, t, x, opts.tol);
    };
    f.h = [G, boundary, signs, opts](double t, double x) {
        return compute_h(G, boundary, signs, t, x, opts.tol);
    };
    f.H_x = f.h;
    f.H_t = [G, boundary, signs, opts](double t, double x) {
        return compute_Ht(G, boundary, signs, t, x, opts.tol);
    };
    f.valid = [G, boundary, signs, opts](double t, double x) {
        try {
            (void)boundary.nu(t, x);
            (void)boundary.mu(t, x);
            if (G.source && !G.source->valid(t, x)) return false;
            return compute_h(G, boundary, signs, t, x, opts.tol) >= -1e-12;
        } catch (const std::exception&) {
            return false;
        }
    };
    return f;
}

/// Dense evaluation over a (t, x, y) grid. Unsolvable points are masked;
/// a masked fraction above opts.abort_masked_fraction aborts.
inline SolutionFields evaluate_fields(const DistributionG& G, const BoundaryPair& boundary,
                                      const SignConvention& signs, const GridSpec& grid,
                                      const SolveOptions& opts = {},
                                      std::string family_name = {}) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const auto& ya = grid.axis("y");

    SolutionFields f = make_fields(G, boundary, signs, opts, std::move(family_name));
    f.grid = grid;
    f.samples.assign(ta.count * xa.count * ya.count,
                     FieldSample{0, 0, 0, 0, 0, 0, true});

    parallel_for(ta.count * xa.count, opts.threads, [&](std::size_t col) {
        const std::size_t i = col / xa.count;
        const std::size_t j = col % xa.count;
        const double t = ta.coord(i);
        const double x = xa.coord(j);
        double nu = 0, h = 0;
        bool column_ok = true;
        try {
            nu = boundary.nu(t, x);
            h = compute_h(G, boundary, signs, t, x, opts.tol);
        } catch (const std::exception&) {
            column_ok = false;
        }
        std::optional<double> seed;
        for (std::size_t k = 0; k < ya.count; ++k) {
            const double y = ya.coord(k);
            FieldSample s{t, x, y, 0, 0, h, true};
            if (column_ok) {
                try {
                    const double v = solve_v(G, nu, t, x, y, seed, opts);
                    s.v = v;
                    s.u = compute_u(G, nu, v, t, x, opts.tol);
                    s.masked = false;
                    seed = -v;
                } catch (const std::exception&) {
                    s.masked = true;
                }
            }
            f.samples[(i * xa.count + j) * ya.count + k] = s;
        }
    });

    const double frac = f.masked_fraction();
    if (frac > opts.abort_masked_fraction)
        throw ReconstructionError("evaluate_fields: " + std::to_string(frac * 100) +
                                  "% of samples masked");
    return f;
}

}  // namespace benney
