#pragma once

// Characteristic transport for the collisionless kinetic equation. Samples of
// (x, λ) advance along
//   dx/dt = -λ,   dλ/dt = H_xx(t, x)
// by classical RK4, and the distribution value carried by each sample is
// conserved along its trajectory. conservation_check re-reads the
// distribution at the arrival points and reports the worst drift over the
// surviving seeds; transport_ladder repeats that over a dt ladder and fits
// the decay order of the drift.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "benney/families.hpp"
#include "benney/numerics.hpp"
#include "benney/verifier.hpp"

namespace benney {

struct TransportError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One characteristic sample: current position, current slope, and the
/// distribution value it carries. Dropped samples stop being integrated but
/// stay in the state so counts remain meaningful.
struct CharSample {
    double x = 0;
    double lam = 0;
    double g_value = 0;
    bool dropped = false;
};

struct CharState {
    std::vector<CharSample> samples;
    double time = 0;

    std::size_t dropped_count() const {
        std::size_t n = 0;
        for (const auto& s : samples)
            if (s.dropped) ++n;
        return n;
    }
    double dropped_fraction() const {
        return samples.empty()
                   ? 0.0
                   : static_cast<double>(dropped_count()) / static_cast<double>(samples.size());
    }
};

struct TransportOptions {
    double x_min = -std::numeric_limits<double>::infinity();
    double x_max = std::numeric_limits<double>::infinity();
    std::size_t max_steps = 1'000'000;
};

/// Advances every live sample from state.time to t_target in uniform RK4
/// steps of at most dt. Samples leaving [x_min, x_max] are marked dropped at
/// the end of the offending step and frozen there. Throws on non-positive dt,
/// on a step budget overrun, and on non-finite forcing values.
inline CharState advect(CharState state, const std::function<double(double, double)>& Hxx,
                        double t_target, double dt, const TransportOptions& opts = {}) {
    if (!(dt > 0)) throw TransportError("advect: dt must be positive");
    const double span = t_target - state.time;
    if (span == 0) return state;

    const double exact = std::abs(span) / dt;
    std::size_t n = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    if (n == 0) n = 1;
    if (n > opts.max_steps)
        throw TransportError("advect: " + std::to_string(n) + " steps exceed the budget of " +
                             std::to_string(opts.max_steps));

    const auto rhs = [&Hxx](double t, const std::vector<double>& y) {
        const double f = Hxx(t, y[0]);
        if (!std::isfinite(f))
            throw TransportError("advect: non-finite forcing at t=" + std::to_string(t) +
                                 ", x=" + std::to_string(y[0]));
        return std::vector<double>{-y[1], f};
    };

    const double t0 = state.time;
    for (std::size_t k = 0; k < n; ++k) {
        const double ta = t0 + span * (static_cast<double>(k) / static_cast<double>(n));
        const double tb =
            k + 1 == n ? t_target : t0 + span * (static_cast<double>(k + 1) / static_cast<double>(n));
        for (auto& s : state.samples) {
            if (s.dropped) continue;
            const auto next = rk4_step(rhs, ta, {s.x, s.lam}, tb - ta);
            s.x = next[0];
            s.lam = next[1];
            if (s.x < opts.x_min || s.x > opts.x_max) s.dropped = true;
        }
    }
    state.time = t_target;
    return state;
}

/// Seeds one sample per node of a grid over (x, lam), carries the
/// distribution values from t0 to t1, and reports |G(t1) - G(t0)| over the
/// surviving seeds as equation "transport.conservation". Dropped seeds are
/// excluded from the norms and counted as masked. Throws when more than 20%
/// of the seeds leave the box.
inline ResidualReport conservation_check(const DistributionG& G,
                                         const std::function<double(double, double)>& Hxx,
                                         const GridSpec& seeds, double t0, double t1, double dt,
                                         const TransportOptions& opts = {}) {
    seeds.validate();
    const auto& xa = seeds.axis("x");
    const auto& la = seeds.axis("lam");

    CharState state;
    state.time = t0;
    state.samples.reserve(xa.count * la.count);
    for (std::size_t i = 0; i < xa.count; ++i)
        for (std::size_t j = 0; j < la.count; ++j) {
            CharSample s;
            s.x = xa.coord(i);
            s.lam = la.coord(j);
            s.g_value = G.value(t0, s.x, s.lam);
            state.samples.push_back(s);
        }

    const auto arrived = advect(std::move(state), Hxx, t1, dt, opts);
    if (arrived.dropped_fraction() > 0.2)
        throw TransportError("conservation_check: " +
                             std::to_string(arrived.dropped_count()) + " of " +
                             std::to_string(arrived.samples.size()) + " seeds left the box");

    EquationResidual drift{"transport.conservation"};
    for (const auto& s : arrived.samples) {
        if (s.dropped) {
            ++drift.masked;
            continue;
        }
        drift.add(G.value(t1, s.x, s.lam) - s.g_value);
    }
    drift.finish();
    return ResidualReport{{drift}};
}

/// Conservation drift over a ladder of step sizes. The order is fitted over
/// the rungs above the floor, extended by trailing sub-floor rungs that are
/// still decaying by at least 8x per step (those are truncation-dominated;
/// a rung that has genuinely bottomed out stalls and is excluded). When the
/// ladder never rises above the floor it counts as floored. passes() accepts
/// either outcome: a floored ladder (the integrator is exact to measurement
/// precision) or a fitted order at or above the requirement.
struct TransportLadder {
    std::vector<double> dts;
    std::vector<double> deviations;
    std::optional<double> order;
    bool at_floor = false;
    double floor = 1e-9;

    bool passes(double required) const {
        return at_floor || (order.has_value() && *order >= required);
    }
};

inline TransportLadder transport_ladder(const DistributionG& G,
                                        const std::function<double(double, double)>& Hxx,
                                        const GridSpec& seeds, double t0, double t1,
                                        std::vector<double> dts,
                                        const TransportOptions& opts = {}, double floor = 1e-9) {
    if (dts.size() < 2) throw TransportError("transport_ladder: need at least two dt rungs");
    TransportLadder ladder;
    ladder.dts = std::move(dts);
    ladder.floor = floor;
    for (const double dt : ladder.dts) {
        const auto rep = conservation_check(G, Hxx, seeds, t0, t1, dt, opts);
        ladder.deviations.push_back(rep.equation("transport.conservation").linf);
    }

    std::vector<double> fx, fy;
    std::size_t i = 0;
    while (i < ladder.dts.size() && ladder.deviations[i] > floor) {
        fx.push_back(ladder.dts[i]);
        fy.push_back(ladder.deviations[i]);
        ++i;
    }
    if (!fx.empty())
        while (i < ladder.dts.size() && ladder.deviations[i] > 0 &&
               ladder.deviations[i - 1] >= 8.0 * ladder.deviations[i]) {
            fx.push_back(ladder.dts[i]);
            fy.push_back(ladder.deviations[i]);
            ++i;
        }
    if (fx.size() < 2) {
        ladder.at_floor = true;
        return ladder;
    }
    ladder.order = fit_order(fx, fy);
    return ladder;
}

}  // namespace benney
