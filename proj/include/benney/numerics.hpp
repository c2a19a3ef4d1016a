#pragma once

// Shared numerical primitives: tolerances, uniform grids, adaptive
// Gauss-Kronrod quadrature, bracketed root finding, a damped 2-D Newton
// iteration, finite-difference stencils, an RK4 step and cubic Hermite
// tables. Everything operates on doubles and reports failure by throwing
// NumericsError.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace benney {

struct NumericsError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Absolute/relative targets plus an iteration cap, shared by the
/// iterative routines below.
struct Tolerance {
    double abs = 1e-10;
    double rel = 1e-10;
    int max_iterations = 200;

    void validate() const {
        if (!(abs > 0) || !(rel > 0) || max_iterations < 1)
            throw NumericsError("Tolerance: abs and rel must be positive, max_iterations >= 1");
    }
};

/// One uniformly spaced axis of a sampling grid.
struct AxisSpec {
    std::string name;
    double min = 0;
    double max = 1;
    std::size_t count = 2;

    void validate() const {
        if (count < 2 || !(min < max) || !std::isfinite(min) || !std::isfinite(max))
            throw NumericsError("AxisSpec '" + name + "': need finite min < max and count >= 2");
    }
    double spacing() const { return (max - min) / static_cast<double>(count - 1); }
    double coord(std::size_t i) const { return min + spacing() * static_cast<double>(i); }
};

/// A rectangular tensor grid, axes in storage order.
struct GridSpec {
    std::vector<AxisSpec> axes;

    void validate() const {
        if (axes.empty()) throw NumericsError("GridSpec: no axes");
        for (const auto& a : axes) a.validate();
    }
    const AxisSpec& axis(std::string_view name) const {
        for (const auto& a : axes)
            if (a.name == name) return a;
        throw NumericsError("GridSpec: no axis named '" + std::string(name) + "'");
    }
    bool has_axis(std::string_view name) const {
        for (const auto& a : axes)
            if (a.name == name) return true;
        return false;
    }
    /// Same box with every axis count scaled so spacings shrink by `factor`.
    GridSpec refined(std::size_t factor) const {
        GridSpec g = *this;
        for (auto& a : g.axes) a.count = (a.count - 1) * factor + 1;
        return g;
    }
};

namespace detail {

// 15-point Kronrod nodes/weights on [-1,1] with the embedded 7-point Gauss
// rule (positive half; symmetric).
inline constexpr double kKronrodX[8] = {
    0.000000000000000000000000000000000e+00, 2.077849550078984676006894037732449e-01,
    4.058451513773971669066064120769615e-01, 5.860872354676911302941448382587296e-01,
    7.415311855993944398638647732807884e-01, 8.648644233597690727897127886409262e-01,
    9.491079123427585245261896840478513e-01, 9.914553711208126392068546975263285e-01};
inline constexpr double kKronrodW[8] = {
    2.094821410847278280129991748917143e-01, 2.044329400752988924141619992346491e-01,
    1.903505780647854099132564024210137e-01, 1.690047266392679028265834265985503e-01,
    1.406532597155259187451895905102379e-01, 1.047900103222501838398763225415180e-01,
    6.309209262997855329070066318920429e-02, 2.293532201052922496373200805896959e-02};
inline constexpr double kGaussW[4] = {
    4.179591836734693877551020408163265e-01, 3.818300505051189449503697754889751e-01,
    2.797053914892766679014677714237796e-01, 1.294849661688696932706114326790820e-01};

struct GkResult {
    double integral;
    double error;
};

template <class F>
GkResult gk15(const F& f, double a, double b) {
    const double c = 0.5 * (a + b);
    const double hl = 0.5 * (b - a);
    const double f0 = f(c);
    if (!std::isfinite(f0)) throw NumericsError("integrate: non-finite integrand sample");
    double kron = kKronrodW[0] * f0;
    double gauss = kGaussW[0] * f0;
    for (int j = 1; j < 8; ++j) {
        const double dx = hl * kKronrodX[j];
        const double f1 = f(c - dx);
        const double f2 = f(c + dx);
        if (!std::isfinite(f1) || !std::isfinite(f2))
            throw NumericsError("integrate: non-finite integrand sample");
        kron += kKronrodW[j] * (f1 + f2);
        if (j % 2 == 0) gauss += kGaussW[j / 2] * (f1 + f2);
    }
    kron *= hl;
    gauss *= hl;
    return {kron, std::abs(kron - gauss)};
}

}  // namespace detail

/// Adaptive Gauss-Kronrod integration of f over [a, b]: the segment with
/// the largest error estimate is bisected until the summed estimate meets
/// the tolerance. Swapping the limits negates the result exactly; a == b
/// gives exactly zero.
inline double integrate(const std::function<double(double)>& f, double a, double b,
                        const Tolerance& tol = {}) {
    tol.validate();
    if (!std::isfinite(a) || !std::isfinite(b))
        throw NumericsError("integrate: non-finite limits");
    if (a == b) return 0.0;
    if (b < a) return -integrate(f, b, a, tol);

    struct Segment {
        double a, b, integral, error;
        int depth;
    };
    const auto first = detail::gk15(f, a, b);
    std::vector<Segment> segs{{a, b, first.integral, first.error, 0}};
    double total = first.integral;
    double total_err = first.error;
    while (true) {
        const double target = std::max(tol.abs, tol.rel * std::abs(total));
        if (total_err <= target || total_err <= 1e-15 * std::abs(total)) break;
        std::size_t worst = 0;
        for (std::size_t i = 1; i < segs.size(); ++i)
            if (segs[i].error > segs[worst].error) worst = i;
        const Segment s = segs[worst];
        if (s.depth >= 40)
            throw NumericsError("integrate: adaptive subdivision exceeded depth 40");
        const double mid = 0.5 * (s.a + s.b);
        const auto left = detail::gk15(f, s.a, mid);
        const auto right = detail::gk15(f, mid, s.b);
        total += left.integral + right.integral - s.integral;
        total_err += left.error + right.error - s.error;
        segs[worst] = {s.a, mid, left.integral, left.error, s.depth + 1};
        segs.push_back({mid, s.b, right.integral, right.error, s.depth + 1});
        if (segs.size() > 20000)
            throw NumericsError("integrate: too many subdivisions");
    }
    double sum = 0;
    for (const auto& s : segs) sum += s.integral;
    return sum;
}

/// Composite Simpson rule with n panels (n even), for integrands sampled at
/// fixed nodes where adaptive placement is unwanted.
inline double integrate_fixed(const std::function<double(double)>& f, double a, double b,
                              std::size_t n = 64) {
    if (n < 2 || n % 2 != 0) throw NumericsError("integrate_fixed: n must be even and >= 2");
    if (a == b) return 0.0;
    const double h = (b - a) / static_cast<double>(n);
    double sum = f(a) + f(b);
    for (std::size_t i = 1; i < n; ++i) {
        const double fi = f(a + h * static_cast<double>(i));
        if (!std::isfinite(fi)) throw NumericsError("integrate_fixed: non-finite sample");
        sum += (i % 2 == 1 ? 4.0 : 2.0) * fi;
    }
    return sum * h / 3.0;
}

/// Bracketed hybrid root finder (secant step when it stays inside the
/// bracket and shrinks it, bisection otherwise). Requires a sign change on
/// [lo, hi]; never leaves the bracket.
inline double find_root(const std::function<double(double)>& f, double lo, double hi,
                        const Tolerance& tol = {}) {
    tol.validate();
    if (!(lo < hi)) throw NumericsError("find_root: need lo < hi");
    double fl = f(lo), fh = f(hi);
    if (!std::isfinite(fl) || !std::isfinite(fh))
        throw NumericsError("find_root: non-finite endpoint value");
    if (std::abs(fl) <= tol.abs) return lo;
    if (std::abs(fh) <= tol.abs) return hi;
    if (fl * fh > 0) throw NumericsError("find_root: no sign change on bracket");
    for (int it = 0; it < tol.max_iterations; ++it) {
        double c;
        const double denom = fh - fl;
        if (denom != 0.0) {
            c = lo - fl * (hi - lo) / denom;
            const double margin = 0.05 * (hi - lo);
            if (!(c > lo + margin) || !(c < hi - margin)) c = 0.5 * (lo + hi);
        } else {
            c = 0.5 * (lo + hi);
        }
        const double fc = f(c);
        if (!std::isfinite(fc)) throw NumericsError("find_root: non-finite sample");
        if (std::abs(fc) <= tol.abs) return c;
        if (fl * fc < 0) {
            hi = c;
            fh = fc;
        } else {
            lo = c;
            fl = fc;
        }
        if (hi - lo <= std::max(tol.abs, tol.rel * std::abs(c))) return 0.5 * (lo + hi);
    }
    throw NumericsError("find_root: max iterations reached");
}

/// Damped Newton iteration for F: R^2 -> R^2 with a central-difference
/// Jacobian. Converges when ||F||_inf <= tol.abs; throws on a singular
/// Jacobian or failure to improve.
inline std::pair<double, double> newton2d(
    const std::function<std::pair<double, double>(double, double)>& F, double p0, double q0,
    const Tolerance& tol = {}) {
    tol.validate();
    auto norm = [](const std::pair<double, double>& v) {
        return std::max(std::abs(v.first), std::abs(v.second));
    };
    double p = p0, q = q0;
    auto Fv = F(p, q);
    if (!std::isfinite(Fv.first) || !std::isfinite(Fv.second))
        throw NumericsError("newton2d: non-finite residual at initial guess");
    for (int it = 0; it < tol.max_iterations; ++it) {
        if (norm(Fv) <= tol.abs) return {p, q};
        const double hp = 1e-7 * (1.0 + std::abs(p));
        const double hq = 1e-7 * (1.0 + std::abs(q));
        const auto Fp1 = F(p + hp, q), Fp0 = F(p - hp, q);
        const auto Fq1 = F(p, q + hq), Fq0 = F(p, q - hq);
        const double a = (Fp1.first - Fp0.first) / (2 * hp);
        const double b = (Fq1.first - Fq0.first) / (2 * hq);
        const double c = (Fp1.second - Fp0.second) / (2 * hp);
        const double d = (Fq1.second - Fq0.second) / (2 * hq);
        const double det = a * d - b * c;
        const double scale = std::max({std::abs(a * d), std::abs(b * c), 1e-300});
        if (std::abs(det) < 1e-14 * scale)
            throw NumericsError("newton2d: singular Jacobian");
        double dp = -(d * Fv.first - b * Fv.second) / det;
        double dq = -(-c * Fv.first + a * Fv.second) / det;
        bool improved = false;
        for (int halvings = 0; halvings < 30; ++halvings) {
            const auto Ft = F(p + dp, q + dq);
            if (std::isfinite(Ft.first) && std::isfinite(Ft.second) && norm(Ft) < norm(Fv)) {
                p += dp;
                q += dq;
                Fv = Ft;
                improved = true;
                break;
            }
            dp *= 0.5;
            dq *= 0.5;
        }
        if (!improved) throw NumericsError("newton2d: step failed to reduce residual");
    }
    throw NumericsError("newton2d: max iterations reached");
}

/// Central first derivative of a callable.
inline double fd_d1(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - f(x - h)) / (2 * h);
}

/// Central second derivative of a callable.
inline double fd_d2(const std::function<double(double)>& f, double x, double h) {
    return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h);
}

/// First derivative on uniformly sampled values: central in the interior,
/// second-order one-sided at the ends.
inline double fd_d1_samples(std::span<const double> v, std::size_t i, double h) {
    const std::size_t n = v.size();
    if (n < 3 || i >= n) throw NumericsError("fd_d1_samples: need >= 3 samples and i in range");
    if (i == 0) return (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h);
    if (i == n - 1) return (3 * v[n - 1] - 4 * v[n - 2] + v[n - 3]) / (2 * h);
    return (v[i + 1] - v[i - 1]) / (2 * h);
}

/// One classical RK4 step for y' = rhs(t, y); dt may be negative.
inline std::vector<double> rk4_step(
    const std::function<std::vector<double>(double, const std::vector<double>&)>& rhs, double t,
    const std::vector<double>& y, double dt) {
    const std::size_t n = y.size();
    auto axpy = [n](const std::vector<double>& base, double s, const std::vector<double>& k) {
        std::vector<double> r(n);
        for (std::size_t i = 0; i < n; ++i) r[i] = base[i] + s * k[i];
        return r;
    };
    const auto k1 = rhs(t, y);
    const auto k2 = rhs(t + 0.5 * dt, axpy(y, 0.5 * dt, k1));
    const auto k3 = rhs(t + 0.5 * dt, axpy(y, 0.5 * dt, k2));
    const auto k4 = rhs(t + dt, axpy(y, dt, k3));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = y[i] + dt / 6.0 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]);
        if (!std::isfinite(out[i])) throw NumericsError("rk4_step: non-finite state");
    }
    return out;
}

/// Piecewise cubic Hermite table on uniform nodes with stored exact node
/// derivatives; evaluation outside the table throws.
class CubicHermite {
  public:
    CubicHermite() = default;
    CubicHermite(double x0, double dx, std::vector<double> values, std::vector<double> derivs)
        : x0_(x0), dx_(dx), v_(std::move(values)), d_(std::move(derivs)) {
        if (v_.size() < 2 || v_.size() != d_.size() || !(dx_ > 0))
            throw NumericsError("CubicHermite: need >= 2 nodes, matching derivs, dx > 0");
    }

    double x_min() const { return x0_; }
    double x_max() const { return x0_ + dx_ * static_cast<double>(v_.size() - 1); }

    double value(double x) const {
        const auto [i, s] = locate(x);
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
        const double h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s);
        const double h11 = s * s * (s - 1);
        return h00 * v_[i] + h10 * dx_ * d_[i] + h01 * v_[i + 1] + h11 * dx_ * d_[i + 1];
    }

    double derivative(double x) const {
        const auto [i, s] = locate(x);
        const double g00 = 6 * s * (s - 1);
        const double g10 = (1 - s) * (1 - 3 * s);
        const double g01 = -g00;
        const double g11 = s * (3 * s - 2);
        return (g00 * v_[i] + g01 * v_[i + 1]) / dx_ + g10 * d_[i] + g11 * d_[i + 1];
    }

  private:
    std::pair<std::size_t, double> locate(double x) const {
        const double u = (x - x0_) / dx_;
        if (u < -1e-12 || u > static_cast<double>(v_.size() - 1) + 1e-12)
            throw NumericsError("CubicHermite: query outside table");
        std::size_t i = static_cast<std::size_t>(std::max(0.0, u));
        if (i >= v_.size() - 1) i = v_.size() - 2;
        return {i, u - static_cast<double>(i)};
    }

    double x0_ = 0, dx_ = 1;
    std::vector<double> v_, d_;
};

/// Least-squares slope of log(norm) against log(spacing); the fitted
/// convergence order of a residual ladder.
inline std::optional<double> fit_order(std::span<const double> spacings,
                                       std::span<const double> norms) {
    if (spacings.size() != norms.size() || spacings.size() < 2) return std::nullopt;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(spacings.size());
    for (std::size_t i = 0; i < spacings.size(); ++i) {
        if (!(spacings[i] > 0) || !(norms[i] > 0)) return std::nullopt;
        const double x = std::log(spacings[i]);
        const double y = std::log(norms[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-300) return std::nullopt;
    return (n * sxy - sx * sy) / denom;
}

/// Run fn(i) for i in [0, n) across `threads` workers (index-sliced, so
/// results are written to disjoint slots and output order is deterministic).
/// Exceptions propagate; the first one thrown wins.
inline void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (unsigned w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace benney
