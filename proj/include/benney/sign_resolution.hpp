#pragma once

// Empirical arbitration of the two binary sign choices in the moment
// reconstruction: s_h (the depth moment orientation) and s_phi (the drift
// orientation inside the rational family). For each candidate convention the
// resolver rebuilds the family outputs, reconstructs the fields, and ladders
// the full Benney residual under grid refinement. Exactly one convention must
// converge; zero converging conventions means the family is broken, several
// mean the family cannot discriminate (e.g. h identically zero) and the
// caller must either supply a discriminating family or force the signs.

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "benney/families.hpp"
#include "benney/reconstruction.hpp"
#include "benney/verifier.hpp"

namespace benney {

struct SignResolutionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SignCandidate {
    SignConvention conv;
    ConvergenceReport report;
    bool converged = false;
    std::string error;
};

struct SignResolution {
    SignConvention chosen;
    std::vector<SignCandidate> candidates;
};

/// Maps a candidate convention to the family outputs the reconstruction
/// consumes. Families that never consume s_phi may ignore it; pass
/// sigma_observable = false so the resolver does not try both values of an
/// unobservable sign (which could only tie).
using FamilyBuilder =
    std::function<std::pair<DistributionG, BoundaryPair>(const SignConvention&)>;

namespace detail {
inline std::string describe(const SignConvention& c) {
    const auto fmt = [](int s) { return s >= 0 ? std::string("+1") : std::string("-1"); };
    return "(s_h=" + fmt(c.s_h) + ", s_phi=" + fmt(c.s_phi) + ")";
}
}  // namespace detail

inline SignResolution resolve_signs(const FamilyBuilder& builder, const GridSpec& base,
                                    bool sigma_observable = true, const SolveOptions& solve = {},
                                    const ProbeOptions& probe = {}, double required_order = 1.0) {
    std::vector<SignConvention> combos;
    for (const int sh : {+1, -1}) {
        combos.push_back(SignConvention{sh, +1});
        if (sigma_observable) combos.push_back(SignConvention{sh, -1});
    }
    const auto levels = refinement_levels(base, 3);

    SignResolution res;
    for (const auto& conv : combos) {
        SignCandidate cand;
        cand.conv = conv;
        try {
            const auto [G, pair] = builder(conv);
            const auto fields = make_fields(G, pair, conv, solve);
            cand.report = convergence_order(
                [&](const GridSpec& g) { return benney_residual(fields, g, probe); }, levels);
            cand.converged = cand.report.passes(required_order);
        } catch (const std::exception& e) {
            cand.error = e.what();
        }
        res.candidates.push_back(std::move(cand));
    }

    std::vector<const SignCandidate*> winners;
    for (const auto& c : res.candidates)
        if (c.converged) winners.push_back(&c);
    if (winners.empty())
        throw SignResolutionError(
            "resolve_signs: no sign combination makes the Benney residual converge");
    if (winners.size() > 1) {
        std::string msg = "resolve_signs: degenerate family, multiple conventions converge:";
        for (const auto* w : winners) msg += " " + detail::describe(w->conv);
        throw SignResolutionError(msg);
    }
    res.chosen = winners.front()->conv;
    return res;
}

}  // namespace benney
