#include <catch_amalgamated.hpp>

#include "freeprob/measure.hpp"
#include "oracles.hpp"

using namespace freeprob;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

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

}  // namespace

TEST_CASE("semicircle transforms match closed values") {
    const auto sc = make_measure(family::Semicircle{0.0, 1.0});
    require_close(sc.cauchy(3.0), (3.0 - std::sqrt(5.0)) / 2.0, 1e-15);
    require_close(sc.cauchy(cplx(0, 1)), cplx(0, -(std::sqrt(5.0) - 1.0) / 2.0), 1e-15);
    // F(z) = z - G(z) for the standard semicircle
    const cplx z(0.3, 0.7);
    require_close(sc.reciprocal_cauchy(z), z - sc.cauchy(z), 1e-14);
    require_close(sc.cauchy(cplx(-3.0, 0.0)), -(3.0 - std::sqrt(5.0)) / 2.0, 1e-15);
}

TEST_CASE("closed-form Cauchy transforms agree with quadrature") {
    const auto sc = make_measure(family::Semicircle{0.5, 2.0});
    for (cplx z : {cplx(4.0, 0.0), cplx(0.2, 0.5), cplx(-3.0, 2.0), cplx(0.5, 0.05)}) {
        require_close(sc.cauchy(z), oracle::semicircle_cauchy_quad(z, 0.5, 2.0), 1e-9);
    }
    for (double lambda : {0.25, 2.5}) {
        const auto mp = make_measure(family::MarchenkoPastur{lambda, 1.5});
        for (cplx z : {cplx(-1.0, 0.0), cplx(2.0, 1.0), cplx(12.0, 0.0), cplx(0.7, 0.05)}) {
            require_close(mp.cauchy(z), oracle::mp_cauchy(z, lambda, 1.5), 1e-8);
        }
    }
    // ratio 1 has an x^{-1/2} edge at 0; compare with (u - S)/(2u)/sigma instead
    const auto mp1 = make_measure(family::MarchenkoPastur{1.0, 1.5});
    const double u = -1.0 / 1.5;
    require_close(mp1.cauchy(-1.0), (u + std::sqrt(u * (u - 4.0))) / (2.0 * u) / 1.5, 1e-15);
    const auto as = make_measure(family::Arcsine{1.0, 2.0});
    require_close(as.cauchy(cplx(3.0, 0.0) + 1.0), 1.0 / std::sqrt(9.0 - 4.0), 1e-15);
}

TEST_CASE("derivatives agree with central differences") {
    const std::vector<Measure> ms = {
        make_measure(family::Semicircle{0.0, 1.0}), make_measure(family::Arcsine{0.0, 1.0}),
        make_measure(family::MarchenkoPastur{0.5, 1.0}),
        make_measure(family::MarchenkoPastur{3.0, 0.5}),
        make_measure(family::TwoAtom{-1.0, 2.0, 0.3})};
    const double h = 1e-5;
    for (const auto& m : ms) {
        for (cplx z : {cplx(0.4, 0.8), cplx(5.0, 0.0), cplx(-2.0, 0.3)}) {
            const cplx fd = (m.cauchy(z + h) - m.cauchy(z - h)) / (2 * h);
            require_close(m.cauchy_derivative(z), fd, 1e-8);
            const cplx ffd = (m.reciprocal_cauchy(z + h) - m.reciprocal_cauchy(z - h)) / (2 * h);
            require_close(m.reciprocal_cauchy_derivative(z), ffd, 1e-7);
        }
        for (cplx z : {cplx(0.05, 0.02), cplx(-0.3, 0.1), cplx(1e-6, 1e-6)}) {
            const cplx pfd = (m.psi(z + h * 1e-2) - m.psi(z - h * 1e-2)) / (2 * h * 1e-2);
            require_close(m.psi_derivative(z), pfd, 1e-6);
            const cplx efd = (m.eta(z + h * 1e-2) - m.eta(z - h * 1e-2)) / (2 * h * 1e-2);
            require_close(m.eta_derivative(z), efd, 1e-6);
        }
    }
}

TEST_CASE("psi and G are linked by psi(z) = G(1/z)/z - 1") {
    const auto mp = make_measure(family::MarchenkoPastur{0.5, 2.0});
    const auto at = make_measure(family::Atomic{{{0.5, 0.25}, {1.0, 0.5}, {3.0, 0.25}}},
                                 Carrier::positive_half_line);
    for (const auto& m : {mp, at}) {
        for (cplx z : {cplx(0.1, 0.3), cplx(-2.0, 0.0), cplx(1e-5, 2e-5)}) {
            require_close(m.psi(z), m.cauchy(1.0 / z) / z - 1.0, 1e-12 * (1 + std::abs(m.psi(z))));
        }
    }
    // small-argument series keeps the first moment
    require_close(mp.psi(cplx(1e-9, 0.0)) / 1e-9, 2.0, 1e-7);
    require_close(mp.eta(cplx(1e-9, 0.0)) / 1e-9, 2.0, 1e-7);
}

TEST_CASE("circle atoms and point masses") {
    const auto haar_like = make_measure(family::CircleAtomic{{{0.0, 0.5}, {pi, 0.5}}});
    REQUIRE(haar_like.carrier() == Carrier::unit_circle);
    require_close(haar_like.first_moment(), 0.0, 1e-15);
    // psi(z) = z^2/(1 - z^2) for atoms at +-1
    const cplx z(0.3, 0.2);
    require_close(haar_like.psi(z), z * z / (1.0 - z * z), 1e-15);

    const auto rot = make_measure(family::PointMass{pi / 3}, Carrier::unit_circle);
    REQUIRE(rot.is_point_mass());
    require_close(rot.point_mass_location(), std::polar(1.0, pi / 3), 1e-15);
    require_close(rot.eta(z), std::polar(1.0, pi / 3) * z, 1e-15);

    const auto two = make_measure(family::TwoAtom{2.0, 2.0, 0.4});
    REQUIRE(two.is_point_mass());
    REQUIRE(two.point_mass_location() == cplx(2.0));
}

TEST_CASE("supports and distances") {
    const auto mp = make_measure(family::MarchenkoPastur{2.0, 1.0});
    REQUIRE(mp.support_components().size() == 2);
    REQUIRE(mp.support_components()[0].length() == 0.0);
    REQUIRE_THAT(mp.support_upper(), WithinRel(std::pow(1 + std::sqrt(2.0), 2), 1e-14));
    const auto at = make_measure(family::Atomic{{{3.0, 0.5}, {-1.0, 0.5}}});
    REQUIRE_THAT(at.distance_to_support(cplx(1.0, 0.0)), WithinAbs(2.0, 1e-15));
    REQUIRE_THAT(at.support_radius(), WithinAbs(3.0, 0.0));
    const auto emp = make_measure(family::Empirical{{0.1, 0.7, 0.4}});
    REQUIRE(emp.support_components().size() == 1);
    REQUIRE_THAT(emp.mean(), WithinAbs(0.4, 1e-15));
}

TEST_CASE("quantiles") {
    const auto sc = make_measure(family::Semicircle{1.0, 4.0});
    REQUIRE_THAT(sc.quantile(0.5), WithinAbs(1.0, 1e-12));
    const auto as = make_measure(family::Arcsine{0.0, 1.0});
    REQUIRE_THAT(as.quantile(0.75), WithinAbs(std::sqrt(0.5), 1e-15));
    // MP quantile inverts the quadrature CDF
    const double lambda = 0.5;
    const auto mp = make_measure(family::MarchenkoPastur{lambda, 1.0});
    const double q = mp.quantile(0.3);
    const double a = (1 - std::sqrt(lambda)) * (1 - std::sqrt(lambda));
    const cplx cdf = oracle::edge_quadrature(
        [&](double x) { return x <= q ? cplx(oracle::mp_density(x, lambda, 1.0)) : cplx(0.0); }, a,
        q + 1e-300 > a ? q : a, 4000);
    REQUIRE_THAT(cdf.real(), WithinAbs(0.3, 1e-6));
    const auto mp2 = make_measure(family::MarchenkoPastur{4.0, 1.0});
    REQUIRE(mp2.quantile(0.7) == 0.0);
    REQUIRE(mp2.quantile(0.8) > 0.0);
    const auto at = make_measure(family::TwoAtom{-1.0, 1.0, 0.25});
    REQUIRE(at.quantile(0.2) == -1.0);
    REQUIRE(at.quantile(0.3) == 1.0);
}

TEST_CASE("validation errors carry their codes") {
    require_error(ErrorCode::invalid_weights,
                  [] { make_measure(family::Atomic{{{0.0, 0.5}, {1.0, 0.4}}}); });
    require_error(ErrorCode::invalid_weights,
                  [] { make_measure(family::Atomic{{{0.0, -0.5}, {1.0, 1.5}}}); });
    require_error(ErrorCode::off_carrier_atom, [] {
        make_measure(family::Atomic{{{-1.0, 0.5}, {1.0, 0.5}}}, Carrier::positive_half_line);
    });
    require_error(ErrorCode::off_carrier_atom,
                  [] { make_measure(family::Semicircle{0.0, 1.0}, Carrier::unit_circle); });
    require_error(ErrorCode::negative_variance_family,
                  [] { make_measure(family::Semicircle{0.0, -1.0}); });
    require_error(ErrorCode::negative_variance_family,
                  [] { make_measure(family::MarchenkoPastur{0.0, 1.0}); });
    const auto sc = make_measure(family::Semicircle{0.0, 1.0});
    require_error(ErrorCode::evaluation_on_support, [&] { sc.cauchy(0.5); });
    const auto at = make_measure(family::TwoAtom{-1.0, 1.0, 0.5});
    require_error(ErrorCode::evaluation_on_support, [&] { at.cauchy(1.0); });
    const auto two = make_measure(family::TwoAtom{1.0, 3.0, 0.5});
    // 1 + psi(z) = 0.5/(1 - z) + 0.5/(1 - 3z) vanishes at z = 1/2
    require_error(ErrorCode::eta_undefined, [&] { two.eta(0.5); });
}

TEST_CASE("fingerprints identify equal measures") {
    const auto a = make_measure(family::TwoAtom{-1.0, 1.0, 0.5});
    const auto b = make_measure(family::Atomic{{{1.0, 0.5}, {-1.0, 0.5}}});
    REQUIRE(a.fingerprint() == b.fingerprint());
    REQUIRE(a == b);
    const auto c = make_measure(family::Semicircle{0.0, 1.0});
    REQUIRE_FALSE(a == c);
}
