#include <catch_amalgamated.hpp>

#include <array>

#include "freeprob/subordination.hpp"
#include "oracles.hpp"

using namespace freeprob;

namespace {

void require_close(cplx a, cplx b, double tol) {
    INFO(a << " vs " << b);
    REQUIRE(std::abs(a - b) <= tol);
}

template <class F>
void require_error(ErrorCode code, F&& f) {
    try {
        f();
        FAIL("expected " << to_string(code));
    } catch (const Error& e) {
        REQUIRE(e.code() == code);
    }
}

// Roots of w^3 + a w^2 + b w + c by Durand-Kerner.
std::array<cplx, 3> cubic_roots(cplx a, cplx b, cplx c) {
    std::array<cplx, 3> r = {cplx(0.4, 0.9), cplx(0.4, 0.9) * cplx(0.4, 0.9),
                             cplx(0.4, 0.9) * cplx(0.4, 0.9) * cplx(0.4, 0.9)};
    for (int it = 0; it < 500; ++it) {
        for (int i = 0; i < 3; ++i) {
            const cplx w = r[i];
            cplx denom = 1.0;
            for (int j = 0; j < 3; ++j) {
                if (j != i) denom *= w - r[j];
            }
            r[i] = w - (((w + a) * w + b) * w + c) / denom;
        }
    }
    return r;
}

// Free product of two free projections of trace 1/2: half an atom at 0 plus
// half the arcsine law on [0, 1].
cplx projections_eta(cplx z) {
    const cplx w = 1.0 / z;
    cplx s = std::sqrt(w) * std::sqrt(w - 1.0);
    const cplx g = 0.5 / w + 0.5 / s;
    const cplx psi = g / z - 1.0;
    return psi / (1.0 + psi);
}

const Measure semicircle1 = make_measure(family::Semicircle{0.0, 1.0});
const Measure bernoulli_pm = make_measure(family::TwoAtom{-1.0, 1.0, 0.5});

}  // namespace

TEST_CASE("semicircle plus semicircle gives the doubled variance") {
    const auto s = solve_additive(semicircle1, semicircle1, cplx(0.0, 1.0));
    require_close(s.omega1, cplx(0.0, 1.5), 1e-12);
    require_close(s.omega2, cplx(0.0, 1.5), 1e-12);
    require_close(s.value, cplx(0.0, 2.0), 1e-12);
    REQUIRE(s.residual < 1e-12);

    const auto sc2 = make_measure(family::Semicircle{0.0, 2.0});
    for (cplx z : {cplx(0.3, 0.1), cplx(-2.5, 0.01), cplx(5.0, 3.0)}) {
        const auto t = solve_additive(semicircle1, semicircle1, z);
        require_close(t.value, sc2.reciprocal_cauchy(z), 1e-11);
    }
}

TEST_CASE("semicircle plus symmetric Bernoulli matches the cubic") {
    // with w = omega for the Bernoulli side, w^3 - z w^2 + z = 0 and G = w/(w^2 - 1)
    for (cplx z : {cplx(0.5, 1.0), cplx(0.0, 2.0), cplx(-1.0, 0.5), cplx(2.2, 0.2)}) {
        const auto roots = cubic_roots(-z, 0.0, z);
        cplx w = roots[0];
        for (cplx r : roots) {
            if (r.imag() > w.imag()) w = r;
        }
        const auto s = solve_additive(bernoulli_pm, semicircle1, z);
        require_close(s.omega1, w, 1e-11);
        const cplx g = w / (w * w - 1.0);
        require_close(s.value, 1.0 / g, 1e-10);
        require_close(s.omega2, 1.0 / g + g, 1e-10);
    }
}

TEST_CASE("swapping the arguments swaps the subordination functions exactly") {
    const auto mp = make_measure(family::MarchenkoPastur{0.5, 1.0});
    const auto at = make_measure(family::Atomic{{{0.5, 0.3}, {2.0, 0.7}}}, Carrier::positive_half_line);
    for (cplx z : {cplx(0.3, 0.4), cplx(-1.5, 0.2)}) {
        const auto a = solve_additive(mp, bernoulli_pm, cplx(z.real(), std::abs(z.imag())));
        const auto b = solve_additive(bernoulli_pm, mp, cplx(z.real(), std::abs(z.imag())));
        REQUIRE(a.omega1 == b.omega2);
        REQUIRE(a.omega2 == b.omega1);
        const auto c = solve_multiplicative_positive(mp, at, z);
        const auto d = solve_multiplicative_positive(at, mp, z);
        REQUIRE(c.omega1 == d.omega2);
        REQUIRE(c.omega2 == d.omega1);
    }
}

TEST_CASE("free projections: multiplicative solve matches the closed law") {
    const auto proj = make_measure(family::TwoAtom{0.0, 1.0, 0.5}, Carrier::positive_half_line);
    for (cplx z : {cplx(0.5, 0.5), cplx(-2.0, 0.0), cplx(3.0, 0.1), cplx(0.2, -0.4)}) {
        const auto s = solve_multiplicative_positive(proj, proj, z);
        require_close(s.value, projections_eta(z), 1e-11);
        REQUIRE(s.residual < 1e-11);
    }
}

TEST_CASE("multiplicative moments follow the free product rule") {
    const auto mp = make_measure(family::MarchenkoPastur{0.3, 2.0});
    const auto at = make_measure(family::Atomic{{{0.5, 0.3}, {2.0, 0.7}}}, Carrier::positive_half_line);
    const double a1 = 2.0, a2 = 4.0 * 1.3;
    const double b1 = 0.3 * 0.5 + 0.7 * 2.0, b2 = 0.3 * 0.25 + 0.7 * 4.0;
    const double m1 = a1 * b1;
    const double m2 = a2 * b1 * b1 + a1 * a1 * b2 - a1 * a1 * b1 * b1;
    const double z = -1e-5;
    const auto s = solve_multiplicative_positive(mp, at, z);
    const cplx psi = s.value / (1.0 - s.value);
    const double m2_est = ((psi - m1 * z) / (z * z)).real();
    REQUIRE(std::abs(m2_est - m2) < 1e-2);

    // unit circle: same rule for the first two moments
    const auto u1 = make_measure(family::CircleAtomic{{{0.3, 0.5}, {1.1, 0.25}, {4.0, 0.25}}});
    const auto u2 = make_measure(family::CircleAtomic{{{0.0, 0.6}, {2.0, 0.4}}});
    auto moment = [](const Measure& m, int k) {
        cplx acc = 0.0;
        const auto& spec = std::get<family::CircleAtomic>(m.spec());
        for (const auto& a : spec.atoms) acc += a.weight * std::polar(1.0, k * a.location);
        return acc;
    };
    const cplx p1 = moment(u1, 1), p2 = moment(u1, 2), q1 = moment(u2, 1), q2 = moment(u2, 2);
    const cplx c1 = p1 * q1;
    const cplx c2 = p2 * q1 * q1 + p1 * p1 * q2 - p1 * p1 * q1 * q1;
    const cplx zc(1e-3, 5e-4);
    const auto t = solve_multiplicative_circle(u1, u2, zc);
    const cplx psi_c = t.value / (1.0 - t.value);
    require_close((psi_c - c1 * zc) / (zc * zc), c2, 5e-3);
}

TEST_CASE("point-mass shortcuts") {
    const auto d3 = make_measure(family::PointMass{3.0});
    const cplx z(0.5, 0.5);
    const auto s = solve_additive(d3, semicircle1, z);
    REQUIRE(s.stats.shortcut);
    require_close(s.omega2, z - 3.0, 1e-15);
    require_close(s.value, semicircle1.reciprocal_cauchy(z - 3.0), 1e-14);

    const auto d2 = make_measure(family::PointMass{2.0}, Carrier::positive_half_line);
    const auto mp = make_measure(family::MarchenkoPastur{0.5, 1.0});
    const auto t = solve_multiplicative_positive(mp, d2, z);
    require_close(t.omega1, 2.0 * z, 1e-15);
    require_close(t.value, mp.eta(2.0 * z), 1e-15);

    const auto rot = make_measure(family::PointMass{0.7}, Carrier::unit_circle);
    const auto u = make_measure(family::CircleAtomic{{{0.3, 0.5}, {2.0, 0.5}}});
    const auto r = solve_multiplicative_circle(u, rot, cplx(0.2, 0.3));
    require_close(r.omega1, std::polar(1.0, 0.7) * cplx(0.2, 0.3), 1e-15);
}

TEST_CASE("precondition and carrier errors") {
    const auto rot = make_measure(family::PointMass{0.7}, Carrier::unit_circle);
    require_error(ErrorCode::carrier_mismatch, [&] { solve_additive(rot, semicircle1, {0, 1}); });
    require_error(ErrorCode::carrier_mismatch,
                  [&] { solve_multiplicative_positive(bernoulli_pm, semicircle1, {0, 1}); });
    require_error(ErrorCode::invalid_argument,
                  [&] { solve_additive(semicircle1, semicircle1, {1, 0}); });
    const auto zero_mean = make_measure(family::CircleAtomic{{{0.0, 0.5}, {pi, 0.5}}});
    require_error(ErrorCode::zero_first_moment,
                  [&] { solve_multiplicative_circle(zero_mean, rot, {0.1, 0.1}); });
    const auto d0 = make_measure(family::PointMass{0.0}, Carrier::positive_half_line);
    const auto mp = make_measure(family::MarchenkoPastur{0.5, 1.0});
    require_error(ErrorCode::point_mass_input,
                  [&] { solve_multiplicative_positive(mp, d0, {0.1, 0.1}); });
}

TEST_CASE("boundary values and derivatives outside the support") {
    SubordinationSolution sol(ConvolutionKind::additive_real, semicircle1, semicircle1);
    const double x = 4.0;
    const double root = std::sqrt(x * x - 8.0);
    const double g = (x - root) / 4.0;
    const double f = 1.0 / g;
    const auto bv = sol.boundary(x);
    REQUIRE_FALSE(bv.omega1_pole);
    require_close(bv.omega1, 0.5 * (x + f), 1e-10);
    require_close(bv.omega2, 0.5 * (x + f), 1e-10);
    REQUIRE(bv.consistency_residual < 1e-10);

    const double gp = (1.0 - x / root) / 4.0;
    const double fp = -gp / (g * g);
    const auto d = sol.derivative(x, Which::omega1, x - 2.0 * std::sqrt(2.0));
    require_close(d.value, 0.5 * (1.0 + fp), 1e-8);
    REQUIRE(d.difference < 1e-6);
}

TEST_CASE("pole of a subordination function inside a gap") {
    const auto narrow = make_measure(family::Semicircle{0.0, 1e-3});
    SubordinationSolution sol(ConvolutionKind::additive_real, bernoulli_pm, narrow);
    const auto bv = sol.boundary(0.0);
    REQUIRE(bv.omega2_pole);
    require_close(bv.omega1, 0.0, 1e-12);

    // with an exact point mass the shortcut reports the same pole
    const auto d0 = make_measure(family::PointMass{0.0});
    SubordinationSolution exact(ConvolutionKind::additive_real, bernoulli_pm, d0);
    const auto ev = exact.boundary(0.5);
    require_close(ev.omega2, (0.25 - 1.0) / 0.5, 1e-14);
    require_close(ev.omega1, 0.5, 1e-15);
}

TEST_CASE("circle boundary values stay on the circle") {
    const auto u1 = make_measure(family::CircleAtomic{{{0.0, 0.5}, {0.4, 0.5}}});
    const auto u2 = make_measure(family::CircleAtomic{{{0.1, 0.7}, {0.3, 0.3}}});
    SubordinationSolution sol(ConvolutionKind::multiplicative_circle, u1, u2);
    const auto bv = sol.boundary(std::polar(1.0, pi));
    REQUIRE(std::abs(std::abs(bv.omega1) - 1.0) < 1e-9);
    REQUIRE(std::abs(std::abs(bv.omega2) - 1.0) < 1e-9);
    REQUIRE(bv.consistency_residual < 1e-9);
}
