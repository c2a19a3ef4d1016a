#pragma once

// The change of variables that turns a λ(t, x, g) family into a second-order
// ODE statement. From λ one builds the potential-like field
//   f(t, x, g) = ∫ λ_g dx + c(t, g),   with f_x = λ_g and f_t = λ λ_g,
// inverts x ↦ f per (t, g) slice to get X(t, f, g), and checks two
// consequences on the inverse:
//   jacobian_check   X_g X_tf - X_f X_tg = 1 at every interior node
//   qtt_check        X_tt collapses to a function of (X, t), and for the
//                    rational family to a function of t alone
// The gauge c(t, g) is fixed by f(t_lo, x_left, g) = 0 and then integrated in
// t so that f_t = λ λ_g holds at x_left; the consistency report measures how
// well it then holds across the whole grid.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "benney/families.hpp"
#include "benney/numerics.hpp"
#include "benney/verifier.hpp"

namespace benney {

struct OdeConnectionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Interior lattice indices at fixed span fractions, so refining a grid by
/// node doubling keeps the probed coordinates identical and order fits
/// measure pure truncation. Falls back to every interior index when the
/// node count does not split evenly.
inline std::vector<std::size_t> probe_indices(std::size_t count, std::size_t segments = 8) {
    std::vector<std::size_t> idx;
    if (count < 3) return idx;
    if (segments >= 2 && (count - 1) % segments == 0) {
        for (std::size_t j = 1; j < segments; ++j) idx.push_back(j * (count - 1) / segments);
        return idx;
    }
    for (std::size_t j = 1; j + 1 < count; ++j) idx.push_back(j);
    return idx;
}

}  // namespace detail

/// f(t, x, g) tabulated per (t, g) slice as a cubic Hermite table in x whose
/// node derivatives are the exact λ_g values, so f_x = λ_g holds at nodes by
/// construction. degenerate marks a family whose λ_g vanishes identically on
/// the grid; such an f carries no information and cannot be inverted.
struct FField {
    GridSpec grid;
    std::vector<CubicHermite> slices;
    ResidualReport consistency;
    bool degenerate = false;
    double max_abs_lambda_g = 0;

    const CubicHermite& slice(std::size_t it, std::size_t ig) const {
        return slices[it * grid.axis("g").count + ig];
    }
    double value(std::size_t it, std::size_t ig, double x) const {
        return slice(it, ig).value(x);
    }
};

/// Builds f by per-cell Simpson quadrature of λ_g along x, with the gauge
/// constant per (t, g) accumulated by the same rule along t at x_left. The
/// consistency equation compares the centered t-difference of f with λ λ_g
/// at every interior-t node. Throws when the family is invalid anywhere on
/// the grid.
inline FField build_f(const LambdaFamily& fam, const GridSpec& grid, unsigned threads = 1) {
    grid.validate();
    const auto& ta = grid.axis("t");
    const auto& xa = grid.axis("x");
    const auto& ga = grid.axis("g");
    if (ta.count < 3) throw OdeConnectionError("build_f: need at least 3 t nodes");

    for (std::size_t i = 0; i < ta.count; ++i)
        for (std::size_t j = 0; j < xa.count; ++j)
            if (!fam.valid(ta.coord(i), xa.coord(j)))
                throw OdeConnectionError("build_f: family invalid at t=" +
                                         std::to_string(ta.coord(i)) +
                                         ", x=" + std::to_string(xa.coord(j)));

    const double dt = ta.spacing(), dx = xa.spacing();
    const double x_left = xa.min;

    FField f;
    f.grid = grid;
    f.slices.resize(ta.count * ga.count);

    std::vector<double> gauge(ta.count * ga.count, 0.0);
    for (std::size_t k = 0; k < ga.count; ++k) {
        const double g = ga.coord(k);
        const auto rate = [&](double tau) {
            return fam.lambda(tau, x_left, g) * fam.lambda_g(tau, x_left, g);
        };
        for (std::size_t i = 0; i + 1 < ta.count; ++i) {
            const double a = ta.coord(i), b = ta.coord(i + 1);
            gauge[(i + 1) * ga.count + k] =
                gauge[i * ga.count + k] +
                dt / 6.0 * (rate(a) + 4.0 * rate(0.5 * (a + b)) + rate(b));
        }
    }

    std::vector<double> worst_lg(ta.count, 0.0);
    parallel_for(ta.count, threads, [&](std::size_t i) {
        const double t = ta.coord(i);
        for (std::size_t k = 0; k < ga.count; ++k) {
            const double g = ga.coord(k);
            std::vector<double> vals(xa.count), ders(xa.count);
            vals[0] = gauge[i * ga.count + k];
            ders[0] = fam.lambda_g(t, x_left, g);
            worst_lg[i] = std::max(worst_lg[i], std::abs(ders[0]));
            for (std::size_t j = 0; j + 1 < xa.count; ++j) {
                const double a = xa.coord(j), b = xa.coord(j + 1);
                ders[j + 1] = fam.lambda_g(t, b, g);
                vals[j + 1] = vals[j] + dx / 6.0 *
                                            (ders[j] + 4.0 * fam.lambda_g(t, 0.5 * (a + b), g) +
                                             ders[j + 1]);
                worst_lg[i] = std::max(worst_lg[i], std::abs(ders[j + 1]));
            }
            f.slices[i * ga.count + k] = CubicHermite(x_left, dx, std::move(vals), std::move(ders));
        }
    });
    for (const double w : worst_lg) f.max_abs_lambda_g = std::max(f.max_abs_lambda_g, w);
    f.degenerate = f.max_abs_lambda_g < 1e-12;

    EquationResidual cons{"f.consistency"};
    for (const std::size_t i : detail::probe_indices(ta.count)) {
        const double t = ta.coord(i);
        for (const std::size_t k : detail::probe_indices(ga.count)) {
            const double g = ga.coord(k);
            for (const std::size_t j : detail::probe_indices(xa.count)) {
                const double x = xa.coord(j);
                const double ft =
                    (f.value(i + 1, k, x) - f.value(i - 1, k, x)) / (2.0 * dt);
                cons.add(ft - fam.lambda(t, x, g) * fam.lambda_g(t, x, g));
            }
        }
    }
    cons.finish();
    f.consistency = ResidualReport{{cons}};
    return f;
}

/// X(t, f, g) on a regular grid, obtained either by inverting an FField or
/// by tabulating a closed-form function for synthetic checks.
struct XField {
    GridSpec grid;
    std::vector<double> values;

    double value(std::size_t it, std::size_t jf, std::size_t kg) const {
        const auto& fa = grid.axis("f");
        const auto& ga = grid.axis("g");
        return values[(it * fa.count + jf) * ga.count + kg];
    }

    static XField from_function(const std::function<double(double, double, double)>& fn,
                                const GridSpec& grid) {
        grid.validate();
        const auto& ta = grid.axis("t");
        const auto& fa = grid.axis("f");
        const auto& ga = grid.axis("g");
        XField X;
        X.grid = grid;
        X.values.resize(ta.count * fa.count * ga.count);
        for (std::size_t i = 0; i < ta.count; ++i)
            for (std::size_t j = 0; j < fa.count; ++j)
                for (std::size_t k = 0; k < ga.count; ++k)
                    X.values[(i * fa.count + j) * ga.count + k] =
                        fn(ta.coord(i), fa.coord(j), ga.coord(k));
        return X;
    }
};

/// Inverts x ↦ f(t, x, g) per slice onto a regular f-axis spanning the
/// common range of all slices. Every slice must be strictly monotone in x;
/// a degenerate FField or an empty common range is an error.
inline XField invert_to_X(const FField& f, std::size_t f_count = 0,
                          const Tolerance& tol = {1e-12, 1e-12, 200}) {
    if (f.degenerate)
        throw OdeConnectionError("invert_to_X: degenerate f (lambda_g vanishes on the grid)");
    const auto& ta = f.grid.axis("t");
    const auto& xa = f.grid.axis("x");
    const auto& ga = f.grid.axis("g");
    if (f_count == 0) f_count = xa.count;
    if (f_count < 2) throw OdeConnectionError("invert_to_X: need at least 2 f nodes");

    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < ta.count; ++i)
        for (std::size_t k = 0; k < ga.count; ++k) {
            const auto& s = f.slice(i, k);
            double prev = s.value(xa.coord(0));
            double sgn = 0;
            for (std::size_t j = 1; j < xa.count; ++j) {
                const double cur = s.value(xa.coord(j));
                const double d = cur - prev;
                if (d == 0 || (sgn != 0 && d * sgn < 0))
                    throw OdeConnectionError("invert_to_X: non-monotone f slice at t=" +
                                             std::to_string(ta.coord(i)) +
                                             ", g=" + std::to_string(ga.coord(k)));
                sgn = d > 0 ? 1 : -1;
                prev = cur;
            }
            const double a = s.value(xa.coord(0)), b = prev;
            lo = std::max(lo, std::min(a, b));
            hi = std::min(hi, std::max(a, b));
        }
    if (!(hi > lo))
        throw OdeConnectionError("invert_to_X: slices share no common f range");
    const double pad = 1e-9 * (hi - lo);

    XField X;
    X.grid = GridSpec{{ta, {"f", lo + pad, hi - pad, f_count}, ga}};
    const auto& fa = X.grid.axis("f");
    X.values.resize(ta.count * f_count * ga.count);
    for (std::size_t i = 0; i < ta.count; ++i)
        for (std::size_t k = 0; k < ga.count; ++k) {
            const auto& s = f.slice(i, k);
            for (std::size_t j = 0; j < f_count; ++j) {
                const double target = fa.coord(j);
                X.values[(i * f_count + j) * ga.count + k] = find_root(
                    [&](double x) { return s.value(x) - target; }, xa.min, xa.max, tol);
            }
        }
    return X;
}

/// L∞ of X_g X_tf - X_f X_tg - 1 over interior nodes, all derivatives by
/// centered differences on the tabulated lattice.
inline ResidualReport jacobian_check(const XField& X) {
    const auto& ta = X.grid.axis("t");
    const auto& fa = X.grid.axis("f");
    const auto& ga = X.grid.axis("g");
    if (ta.count < 3 || fa.count < 3 || ga.count < 3)
        throw OdeConnectionError("jacobian_check: need at least 3 nodes per axis");
    const double dt = ta.spacing(), df = fa.spacing(), dg = ga.spacing();

    EquationResidual jac{"jacobian"};
    for (const std::size_t i : detail::probe_indices(ta.count))
        for (const std::size_t j : detail::probe_indices(fa.count))
            for (const std::size_t k : detail::probe_indices(ga.count)) {
                const double Xg = (X.value(i, j, k + 1) - X.value(i, j, k - 1)) / (2 * dg);
                const double Xf = (X.value(i, j + 1, k) - X.value(i, j - 1, k)) / (2 * df);
                const double Xtf = (X.value(i + 1, j + 1, k) - X.value(i + 1, j - 1, k) -
                                    X.value(i - 1, j + 1, k) + X.value(i - 1, j - 1, k)) /
                                   (4 * dt * df);
                const double Xtg = (X.value(i + 1, j, k + 1) - X.value(i + 1, j, k - 1) -
                                    X.value(i - 1, j, k + 1) + X.value(i - 1, j, k - 1)) /
                                   (4 * dt * dg);
                jac.add(Xg * Xtf - Xf * Xtg - 1.0);
            }
    jac.finish();
    return ResidualReport{{jac}};
}

/// Second-time-derivative collapse statistics. Every interior-t node gives a
/// sample (X, X_tt). Statistic "qtt.matched" groups samples of one t-slice
/// whose X values coincide within match_tol and reports the X_tt spread per
/// group: small spreads mean X_tt is a function of (X, t). Statistic
/// "qtt.fixed_t" reports the X_tt spread across the whole t-slice: small
/// spreads mean X_tt is a function of t alone. match_tol <= 0 selects half
/// the median adjacent X gap per slice. Fewer than 10 matched samples
/// overall is an error.
inline ResidualReport qtt_check(const XField& X, double match_tol = 0) {
    const auto& ta = X.grid.axis("t");
    const auto& fa = X.grid.axis("f");
    const auto& ga = X.grid.axis("g");
    if (ta.count < 3) throw OdeConnectionError("qtt_check: need at least 3 t nodes");
    const double dt = ta.spacing();

    EquationResidual matched{"qtt.matched"};
    EquationResidual fixed_t{"qtt.fixed_t"};
    std::size_t matched_samples = 0;

    for (std::size_t i = 1; i + 1 < ta.count; ++i) {
        std::vector<std::pair<double, double>> samples;
        samples.reserve(fa.count * ga.count);
        for (std::size_t j = 0; j < fa.count; ++j)
            for (std::size_t k = 0; k < ga.count; ++k) {
                const double qtt = (X.value(i + 1, j, k) - 2 * X.value(i, j, k) +
                                    X.value(i - 1, j, k)) /
                                   (dt * dt);
                samples.emplace_back(X.value(i, j, k), qtt);
            }
        std::sort(samples.begin(), samples.end());

        double slice_min = samples.front().second, slice_max = slice_min;
        for (const auto& [x, qtt] : samples) {
            slice_min = std::min(slice_min, qtt);
            slice_max = std::max(slice_max, qtt);
        }
        fixed_t.add(slice_max - slice_min);

        double tol = match_tol;
        if (tol <= 0) {
            std::vector<double> gaps;
            gaps.reserve(samples.size() - 1);
            for (std::size_t n = 1; n < samples.size(); ++n)
                gaps.push_back(samples[n].first - samples[n - 1].first);
            std::nth_element(gaps.begin(), gaps.begin() + gaps.size() / 2, gaps.end());
            tol = 0.5 * gaps[gaps.size() / 2];
        }

        std::size_t start = 0;
        while (start < samples.size()) {
            std::size_t end = start + 1;
            while (end < samples.size() &&
                   samples[end].first - samples[end - 1].first <= tol)
                ++end;
            if (end - start >= 2) {
                double lo = samples[start].second, hi = lo;
                for (std::size_t n = start; n < end; ++n) {
                    lo = std::min(lo, samples[n].second);
                    hi = std::max(hi, samples[n].second);
                }
                matched.add(hi - lo);
                matched_samples += end - start;
            }
            start = end;
        }
    }
    if (matched_samples < 10)
        throw OdeConnectionError("qtt_check: only " + std::to_string(matched_samples) +
                                 " samples share an (X, t) value; need at least 10");
    matched.finish();
    fixed_t.finish();
    return ResidualReport{{matched, fixed_t}};
}

}  // namespace benney
