#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "benney/verifier.hpp"

using namespace benney;

namespace {

GridSpec grid3(double t0, double t1, std::size_t nt, double x0, double x1, std::size_t nx,
               double y0, double y1, std::size_t ny) {
    return GridSpec{{{"t", t0, t1, nt}, {"x", x0, x1, nx}, {"y", y0, y1, ny}}};
}

GridSpec grid2(double t0, double t1, std::size_t nt, double x0, double x1, std::size_t nx) {
    return GridSpec{{{"t", t0, t1, nt}, {"x", x0, x1, nx}}};
}

SolutionFields synthetic_fields() {
    SolutionFields f;
    f.v = [](double, double, double) { return 0.0; };
    f.u = [](double, double, double) { return 0.0; };
    f.h = [](double, double) { return 0.0; };
    f.H_x = [](double, double) { return 0.0; };
    f.H_t = [](double, double) { return 0.0; };
    f.valid = [](double, double) { return true; };
    return f;
}

ConstFamily sigma_family() {
    return const_family(theta_sigma(2.0),
                        GridSpec{{{"t", 0.9, 2.1, 17}, {"x", -1.1, 1.1, 17}}},
                        {1.2222, 0.5556});
}

RationalFamily make_rational(int phi_sign) {
    return rational_family(
        RationalParams{expr::Ast::parse("g", {"g"}), expr::Ast::parse("0", {"g"}), 0.0, 1.0,
                       phi_sign},
        GridSpec{{{"t", 0.4, 2.2, 9}, {"x", -3.2, -1.8, 9}}});
}

/// Drift curvature of the U = g, V = 0 profile on [0, 1]: the moment
/// ∫ g/(t+g)² dg in closed form.
double drift_curvature(double t) {
    return std::log(1.0 + 1.0 / t) - 1.0 / (t + 1.0);
}

const ProbeOptions kParallel{8, 4, 32};

}  // namespace

TEST_CASE("probe coordinates are fixed span fractions") {
    const auto p = detail::probe_coords({"x", 0.0, 8.0, 5}, 8);
    REQUIRE(p.size() == 7);
    for (std::size_t j = 0; j < 7; ++j)
        CHECK(p[j] == Catch::Approx(static_cast<double>(j + 1)).margin(1e-14));
}

TEST_CASE("benney residual vanishes for a uniform shear flow") {
    auto f = synthetic_fields();
    f.v = [](double, double, double y) { return y; };
    f.h = [](double, double) { return 0.4; };
    const auto rep = benney_residual(f, grid3(0, 1, 9, 0, 1, 9, 0, 0.5, 9));
    CHECK(rep.equation("benney.r1").samples == 343);
    CHECK(rep.equation("benney.r2").samples == 49);
    CHECK(rep.total_masked() == 0);
    CHECK(rep.max_linf() <= 1e-13);
}

TEST_CASE("benney residual reproduces manufactured nonzero residuals exactly") {
    auto f = synthetic_fields();
    f.v = [](double, double x, double) { return x; };
    f.h = [](double, double) { return 0.3; };
    const auto rep = benney_residual(f, grid3(0, 1, 9, 1, 2, 9, 0, 0.5, 9));
    // r1 = v v_x = x peaks at the 7/8 probe; r2 = d/dx (x h) = h.
    CHECK(rep.equation("benney.r1").linf == Catch::Approx(1.875).margin(1e-12));
    CHECK(rep.equation("benney.r2").linf == Catch::Approx(0.3).margin(1e-12));
    CHECK(rep.equation("benney.r1").l2 > 0.0);
    CHECK(rep.equation("benney.r1").l2 <= rep.equation("benney.r1").linf);
}

TEST_CASE("benney residual masks everything when fields are invalid") {
    auto f = synthetic_fields();
    f.valid = [](double, double) { return false; };
    const auto rep = benney_residual(f, grid3(0, 1, 9, 0, 1, 9, 0, 0.5, 9));
    CHECK(rep.total_samples() == 0);
    CHECK(rep.equation("benney.r1").masked == 343);
    CHECK(rep.equation("benney.r2").masked == 49);
    CHECK(rep.masked_fraction() == Catch::Approx(1.0));
}

TEST_CASE("benney residual converges at second order on the hodograph family") {
    const auto fam = sigma_family();
    const auto fields = make_fields(fam.G, fam.boundary, {}, {});
    const auto levels = refinement_levels(grid3(1, 2, 33, -1, 1, 65, 0, 0.2, 17), 3);
    CHECK(levels[0].axis("t").spacing() == Catch::Approx(1.0 / 32));
    CHECK(levels[2].axis("x").spacing() == Catch::Approx(1.0 / 128));
    const auto rep = convergence_order(
        [&](const GridSpec& g) { return benney_residual(fields, g, kParallel); }, levels);
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order >= 1.9);
    CHECK(*rep.order <= 2.6);
    CHECK(rep.monotone);
    CHECK(rep.passes(1.9));
    for (const auto& e : rep.ladder) {
        CHECK(e.samples > 0);
        CHECK(e.masked == 0);
    }
}

TEST_CASE("benney residual flags a corrupted velocity field") {
    const auto fam = sigma_family();
    auto fields = make_fields(fam.G, fam.boundary, {}, {});
    fields.v = [orig = fields.v](double t, double x, double y) {
        return orig(t, x, y) + 1e-3 * std::sin(x);
    };
    const auto levels = refinement_levels(grid3(1, 2, 33, -1, 1, 65, 0, 0.2, 17), 3);
    const auto rep = convergence_order(
        [&](const GridSpec& g) { return benney_residual(fields, g, kParallel); }, levels);
    CHECK_FALSE(rep.passes(1.9));
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order <= 0.5);
    CHECK(rep.ladder.back().linf >= 1e-4);
}

TEST_CASE("substituted residual vanishes for exact quadratic data") {
    const double A = 2.0, nu = 0.7, h0 = 0.3;
    auto f = synthetic_fields();
    f.u = [=](double, double, double y) { return -A * y * y - nu * y; };
    f.H_x = [=](double, double) { return h0; };
    f.H_t = [=](double, double) { return A * h0 * h0 + nu * h0; };
    const auto rep = substituted_residual(f, grid3(0, 1, 9, 0, 1, 9, 0.05, 0.45, 9));
    CHECK(rep.equation("substituted.interior").samples == 343);
    CHECK(rep.equation("substituted.surface_bc").samples == 49);
    CHECK(rep.equation("substituted.bottom_bc").samples == 49);
    CHECK(rep.max_linf() <= 1e-12);

    auto shear = synthetic_fields();
    shear.u = [](double, double, double y) { return y; };
    const auto rep2 = substituted_residual(shear, grid3(0, 1, 9, 0, 1, 9, 0.05, 0.45, 9));
    CHECK(rep2.max_linf() <= 1e-13);

    // A depth field with nonzero x-slope: the forcing term must be the first
    // x-derivative of H_x, so this data is exact only under that stencil.
    auto tilted = synthetic_fields();
    tilted.u = [](double, double x, double y) { return x * y; };
    tilted.H_x = [](double, double x) { return 0.3 - 0.5 * x * x; };
    tilted.H_t = [](double, double x) { return -x * (0.3 - 0.5 * x * x); };
    const auto rep3 = substituted_residual(tilted, grid3(0, 1, 9, 0.1, 0.5, 9, 0.05, 0.45, 9));
    CHECK(rep3.equation("substituted.surface_bc").samples == 49);
    CHECK(rep3.max_linf() <= 1e-12);
}

TEST_CASE("substituted residual converges on the rational window") {
    const auto rat = make_rational(+1);
    const auto fields = make_fields(rat.G, rat.boundary, {}, {});
    const auto levels = refinement_levels(grid3(1, 2, 17, -3, -2, 17, 0.05, 0.15, 9), 3);
    const auto rep = convergence_order(
        [&](const GridSpec& g) { return substituted_residual(fields, g, kParallel); }, levels);
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order >= 1.9);
    CHECK(rep.passes(1.9));

    // The surface sits above the sampled y-range on most of the window, so
    // those columns are skipped and counted; where the depth does fall inside
    // the range the pairing u(t,x,h) = -H_t holds to quadrature accuracy.
    const auto one = substituted_residual(fields, levels[0], kParallel);
    CHECK(one.equation("substituted.surface_bc").samples == 3);
    CHECK(one.equation("substituted.surface_bc").masked == 46);
    CHECK(one.equation("substituted.surface_bc").linf <= 1e-10);
    CHECK(one.equation("substituted.bottom_bc").linf <= 1e-12);
}

TEST_CASE("kinetic residual is exact for constant and linear distributions") {
    DistributionG constant;
    constant.value = [](double, double, double) { return -0.25; };
    const auto grid = GridSpec{{{"t", 0, 1, 9}, {"x", 0, 1, 9}, {"lam", -1, 1, 9}}};
    const auto rep =
        kinetic_residual(constant, [](double t, double x) { return std::sin(t + x); }, grid);
    CHECK(rep.equation("kinetic").samples == 343);
    CHECK(rep.max_linf() <= 1e-14);

    DistributionG streaming;
    streaming.value = [](double t, double x, double lam) { return x + lam * t + lam; };
    const auto rep2 = kinetic_residual(streaming, [](double, double) { return 0.0; }, grid);
    CHECK(rep2.max_linf() <= 1e-12);
}

TEST_CASE("kinetic residual converges for smooth free-streaming data") {
    DistributionG G;
    G.value = [](double t, double x, double lam) { return std::sin(x + lam * t) + lam; };
    const auto levels = refinement_levels(
        GridSpec{{{"t", 0.2, 1.2, 17}, {"x", 0, 2, 17}, {"lam", 0.5, 1.5, 17}}}, 3);
    const auto rep = convergence_order(
        [&](const GridSpec& g) {
            return kinetic_residual(G, [](double, double) { return 0.0; }, g);
        },
        levels);
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order >= 1.9);
    CHECK(*rep.order <= 2.6);
    CHECK(rep.passes(1.9));
}

TEST_CASE("kinetic residual converges for the inverted rational distribution") {
    const auto rat = make_rational(+1);
    const auto levels = refinement_levels(
        GridSpec{{{"t", 1.0, 1.2, 9}, {"x", -2.2, -2.0, 9}, {"lam", 1.35, 1.6, 9}}}, 3);
    const auto rep = convergence_order(
        [&](const GridSpec& g) {
            return kinetic_residual(rat.G, rat.family.forcing, g, kParallel);
        },
        levels);
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order >= 1.9);
    CHECK(rep.passes(1.9));
    for (const auto& e : rep.ladder) CHECK(e.masked == 0);
}

TEST_CASE("monge residual vanishes for constant boundaries") {
    BoundaryPair pair{[](double, double) { return 1.2; }, [](double, double) { return 2.0; }};
    const auto rep =
        monge_residual(pair, [](double, double) { return 0.0; }, grid2(0, 1, 9, 0, 1, 9));
    CHECK(rep.equation("monge.nu").samples == 49);
    CHECK(rep.max_linf() <= 1e-14);
}

TEST_CASE("monge residual converges on closed-form boundary pairs") {
    const auto fam = sigma_family();
    auto zero = [](double, double) { return 0.0; };
    const auto levels = refinement_levels(grid2(1, 2, 17, -1, 1, 17), 3);
    const auto rep = convergence_order(
        [&](const GridSpec& g) { return monge_residual(fam.boundary, zero, g); }, levels);
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order >= 1.9);
    CHECK(rep.passes(1.9));

    const auto fs = freestream_family(expr::Ast::parse("xi + lam", {"xi", "lam"}), 1.0,
                                      GridSpec{{{"t", 0, 1.2, 5}, {"x", 0.8, 2.2, 5}}});
    const auto rep2 = convergence_order(
        [&](const GridSpec& g) { return monge_residual(fs.boundary, zero, g); },
        refinement_levels(grid2(0.1, 1.1, 17, 1, 2, 17), 3));
    REQUIRE(rep2.order.has_value());
    CHECK(*rep2.order >= 1.9);
}

TEST_CASE("master equation residual is zero for constant lambda") {
    LambdaFamily fam;
    fam.g_lo = 0;
    fam.g_hi = 1;
    fam.lambda = [](double, double, double) { return 2.0; };
    fam.lambda_t = [](double, double, double) { return 0.0; };
    fam.lambda_x = [](double, double, double) { return 0.0; };
    fam.lambda_g = [](double, double, double) { return 0.0; };
    fam.lambda_gx = [](double, double, double) { return 0.0; };
    const auto rep = cr_residual(fam, grid2(0, 1, 9, 0, 1, 9), {0.25, 0.75});
    CHECK(rep.equation("cr").samples == 98);
    CHECK(rep.max_linf() == 0.0);
}

TEST_CASE("master equation residual discriminates the drift sign") {
    const GridSpec grid = grid2(0.5, 2.0, 17, -3.0, -2.0, 9);
    const std::vector<double> g_probes{0.125, 0.5, 0.875};

    const auto resolved = make_rational(+1);
    const auto rep = cr_residual(resolved.family, grid, g_probes, -1, kParallel);
    CHECK(rep.equation("cr").samples == 147);
    CHECK(rep.max_linf() <= 1e-8);

    // Flipping the drift sign rebuilds the family; the residual collapses to
    // twice the drift curvature, largest at the smallest probed t.
    const auto flipped = make_rational(-1);
    const auto rep2 = cr_residual(flipped.family, grid, g_probes, -1, kParallel);
    const double expected = 2.0 * drift_curvature(0.5 + 1.5 / 8.0);
    CHECK(rep2.max_linf() == Catch::Approx(expected).margin(1e-6));
    CHECK(rep2.max_linf() >= 0.1 * drift_curvature(0.5));

    // Flipping the moment sign instead trips the same discriminator.
    const auto rep3 = cr_residual(resolved.family, grid, g_probes, +1, kParallel);
    CHECK(rep3.max_linf() == Catch::Approx(expected).margin(1e-6));
}

TEST_CASE("hamilton-jacobi residual is exact for stationary x-independent profiles") {
    LambdaFamily fam;
    fam.g_lo = 0;
    fam.g_hi = 1;
    fam.lambda = [](double, double, double g) { return g * g; };
    const auto grid = GridSpec{{{"t", 1, 2, 9}, {"x", 0, 1, 9}, {"g", 0, 1, 9}}};
    const auto rep = hj_residual(fam, grid, {0.3, 0.6}, 0.5);
    CHECK(rep.equation("hj").samples == 98);
    CHECK(rep.max_linf() <= 1e-12);
}

TEST_CASE("hamilton-jacobi residual converges on the rational family") {
    const auto rat = make_rational(+1);
    const auto levels = refinement_levels(
        GridSpec{{{"t", 1, 2, 17}, {"x", -3, -2, 17}, {"g", 0, 1, 17}}}, 3);
    const auto rep = convergence_order(
        [&](const GridSpec& g) {
            return hj_residual(rat.family, g, {0.25, 0.5, 0.75}, -2.5, -1, kParallel);
        },
        levels);
    REQUIRE(rep.order.has_value());
    CHECK(*rep.order >= 1.9);
    CHECK(*rep.order <= 2.6);
    CHECK(rep.passes(1.9));
}

TEST_CASE("hamilton-jacobi residual detects the wrong moment sign") {
    const auto rat = make_rational(+1);
    const auto grid = GridSpec{{{"t", 1, 2, 17}, {"x", -3, -2, 17}, {"g", 0, 1, 17}}};
    const auto rep = hj_residual(rat.family, grid, {0.5}, -2.5, +1, kParallel);
    // The gauge drift integrates twice the drift curvature over x - x0, so
    // the largest probe distance 3/8 at the smallest probed t dominates.
    const double expected = 2.0 * drift_curvature(1.0 + 1.0 / 8.0) * 0.375;
    CHECK(rep.max_linf() == Catch::Approx(expected).margin(0.02));
    CHECK(rep.max_linf() >= 0.05);
}

TEST_CASE("convergence ladders certify only monotone decays") {
    const auto levels = refinement_levels(grid2(0, 1, 5, 0, 1, 5), 3);
    auto synthetic = [](double value) {
        EquationResidual e{"syn"};
        e.add(value);
        e.finish();
        return ResidualReport{{e}};
    };

    const auto clean = convergence_order(
        [&](const GridSpec& g) { return synthetic(3.0 * std::pow(g.axis("x").spacing(), 2)); },
        levels);
    REQUIRE(clean.order.has_value());
    CHECK(*clean.order == Catch::Approx(2.0).margin(1e-9));
    CHECK(clean.passes(1.9));

    const auto flat = convergence_order(
        [&](const GridSpec&) { return synthetic(1e-3); }, levels);
    REQUIRE(flat.order.has_value());
    CHECK(*flat.order == Catch::Approx(0.0).margin(1e-12));
    CHECK(flat.monotone);
    CHECK_FALSE(flat.passes(1.9));

    std::size_t call = 0;
    const double bumpy[] = {1e-7, 2e-7, 1.5e-7};
    const auto wobble = convergence_order(
        [&](const GridSpec&) { return synthetic(bumpy[call++]); }, levels);
    CHECK_FALSE(wobble.monotone);
    CHECK_FALSE(wobble.passes(0.0));

    const auto floored = convergence_order(
        [&](const GridSpec&) { return synthetic(5e-13); }, levels);
    CHECK(floored.at_floor);
    CHECK_FALSE(floored.order.has_value());
    CHECK(floored.passes(3.9));

    const auto empty = convergence_order(
        [&](const GridSpec&) { return ResidualReport{{EquationResidual{"syn"}}}; }, levels);
    CHECK_FALSE(empty.passes(0.0));

    const std::vector<GridSpec> two_levels{levels[0], levels[1]};
    CHECK_THROWS_AS(convergence_order([&](const GridSpec&) { return synthetic(1.0); }, two_levels),
                    VerifyError);
}

TEST_CASE("residual norms are independent of the thread count") {
    const auto fam = sigma_family();
    const auto fields = make_fields(fam.G, fam.boundary, {}, {});
    const auto grid = grid3(1, 2, 17, -1, 1, 17, 0, 0.2, 9);
    const auto serial = benney_residual(fields, grid, {8, 1, 32});
    const auto parallel = benney_residual(fields, grid, {8, 4, 32});
    CHECK(serial.equation("benney.r1").linf == parallel.equation("benney.r1").linf);
    CHECK(serial.equation("benney.r2").l2 == parallel.equation("benney.r2").l2);
}
