#include <catch_amalgamated.hpp>

#include "freeprob/outliers.hpp"
#include "oracles.hpp"

using namespace freeprob;

namespace {

constexpr int instances = 100;

// Real-line measure drawn from the families, plus a copy shifted by c.
std::pair<Measure, Measure> real_measure(oracle::Gen& g, double c = 0.0) {
    switch (g.integer(0, 3)) {
        case 0: {
            const double m = g.uniform(-2, 2), v = g.uniform(0.1, 2);
            return {make_measure(family::Semicircle{m, v}), make_measure(family::Semicircle{m + c, v})};
        }
        case 1: {
            const double m = g.uniform(-2, 2), r = g.uniform(0.2, 2);
            return {make_measure(family::Arcsine{m, r}), make_measure(family::Arcsine{m + c, r})};
        }
        case 2: {
            const double a = g.uniform(-3, 0), b = g.uniform(0.1, 3), p = g.uniform(0.1, 0.9);
            return {make_measure(family::TwoAtom{a, b, p}), make_measure(family::TwoAtom{a + c, b + c, p})};
        }
        default: {
            std::vector<Atom> at, shifted;
            double total = 0;
            for (int i = 0; i < 3; ++i) {
                at.push_back({g.uniform(-3, 3), g.uniform(0.1, 1)});
                total += at.back().weight;
            }
            for (auto& a : at) {
                a.weight /= total;
                shifted.push_back({a.location + c, a.weight});
            }
            return {make_measure(family::Atomic{at}), make_measure(family::Atomic{shifted})};
        }
    }
}

// Half-line measure and its dilation by c.
std::pair<Measure, Measure> positive_measure(oracle::Gen& g, double c = 1.0) {
    if (g.integer(0, 1) == 0) {
        const double l = g.uniform(0.1, 3), s = g.uniform(0.3, 2);
        return {make_measure(family::MarchenkoPastur{l, s}), make_measure(family::MarchenkoPastur{l, s * c})};
    }
    std::vector<Atom> at, scaled;
    double total = 0;
    for (int i = 0; i < 3; ++i) {
        at.push_back({g.uniform(0.1, 4), g.uniform(0.1, 1)});
        total += at.back().weight;
    }
    for (auto& a : at) {
        a.weight /= total;
        scaled.push_back({a.location * c, a.weight});
    }
    return {make_measure(family::Atomic{at}, Carrier::positive_half_line),
            make_measure(family::Atomic{scaled}, Carrier::positive_half_line)};
}

std::pair<Measure, Measure> circle_measure(oracle::Gen& g, double rot = 0.0) {
    for (;;) {
        std::vector<Atom> at, rotated;
        double total = 0;
        const double base = g.uniform(0, two_pi);
        for (int i = 0; i < 3; ++i) {
            at.push_back({wrap_angle(base + g.uniform(0, 2)), g.uniform(0.1, 1)});
            total += at.back().weight;
        }
        for (auto& a : at) {
            a.weight /= total;
            rotated.push_back({wrap_angle(a.location + rot), a.weight});
        }
        auto m = make_measure(family::CircleAtomic{at});
        if (std::abs(m.first_moment()) > 0.05) return {m, make_measure(family::CircleAtomic{rotated})};
    }
}

cplx upper(oracle::Gen& g) { return {g.uniform(-5, 5), std::pow(10.0, g.uniform(-3, 1))}; }

}  // namespace

TEST_CASE("transforms map half-planes and discs as they should") {
    oracle::Gen g(101);
    for (int i = 0; i < instances; ++i) {
        const auto mu = real_measure(g).first;
        const cplx z = upper(g);
        CHECK(mu.cauchy(z).imag() < 0.0);
        CHECK(mu.reciprocal_cauchy(z).imag() >= z.imag() * (1 - 1e-12));

        const auto nu = positive_measure(g).first;
        const cplx w = upper(g);
        const cplx e = nu.eta(w);
        CHECK(e.imag() > 0.0);
        CHECK(std::arg(e) >= std::arg(w) - 1e-12);

        const auto u = circle_measure(g).first;
        const cplx d = std::polar(g.uniform(0.01, 0.99), g.uniform(0, two_pi));
        CHECK(std::abs(u.eta(d)) <= std::abs(d) * (1 + 1e-12));
    }
}

TEST_CASE("subordination functions are self-maps with small residuals") {
    oracle::Gen g(202);
    for (int i = 0; i < instances; ++i) {
        const auto mu = real_measure(g).first, nu = real_measure(g).first;
        const cplx z = upper(g);
        const auto s = solve_additive(mu, nu, z);
        INFO(i << " " << z);
        CHECK(s.residual < 1e-10);
        CHECK(s.omega1.imag() >= z.imag() * (1 - 1e-10));
        CHECK(s.omega2.imag() >= z.imag() * (1 - 1e-10));

        const auto a = positive_measure(g).first, b = positive_measure(g).first;
        const cplx w = upper(g);
        const auto p = solve_multiplicative_positive(a, b, w);
        CHECK(p.residual < 1e-10);
        CHECK(std::arg(p.omega1) >= std::arg(w) - 1e-10);
        CHECK(std::arg(p.omega2) >= std::arg(w) - 1e-10);

        const auto c1 = circle_measure(g).first, c2 = circle_measure(g).first;
        const cplx d = std::polar(g.uniform(0.01, 0.95), g.uniform(0, two_pi));
        const auto q = solve_multiplicative_circle(c1, c2, d);
        CHECK(q.residual < 1e-10);
        CHECK(std::abs(q.omega1) <= std::abs(d) * (1 + 1e-10));
        CHECK(std::abs(q.omega2) <= std::abs(d) * (1 + 1e-10));
    }
}

TEST_CASE("omega derivatives are at least one to the right of the support") {
    oracle::Gen g(303);
    for (int i = 0; i < instances; ++i) {
        const auto mu = real_measure(g).first, nu = real_measure(g).first;
        const double gap = g.uniform(0.2, 2.0);
        const double x = mu.support_upper() + nu.support_upper() + gap;
        SubordinationSolution sol(ConvolutionKind::additive_real, mu, nu);
        for (Which w : {Which::omega1, Which::omega2}) {
            const auto d = sol.derivative(x, w, gap);
            INFO(i << " x " << x << " derivative " << d.value);
            CHECK(std::abs(d.value.imag()) < 1e-6);
            CHECK(d.value.real() >= 1.0 - 1e-8);
        }
    }
}

TEST_CASE("swapping the measures swaps the subordination functions") {
    oracle::Gen g(404);
    for (int i = 0; i < instances; ++i) {
        const auto mu = real_measure(g).first, nu = real_measure(g).first;
        const cplx z = upper(g);
        const auto s = solve_additive(mu, nu, z), t = solve_additive(nu, mu, z);
        CHECK(s.omega1 == t.omega2);
        CHECK(s.omega2 == t.omega1);
        CHECK(s.value == t.value);

        const auto a = positive_measure(g).first, b = positive_measure(g).first;
        const auto p = solve_multiplicative_positive(a, b, z), q = solve_multiplicative_positive(b, a, z);
        CHECK(p.omega1 == q.omega2);
        CHECK(p.value == q.value);

        const auto c1 = circle_measure(g).first, c2 = circle_measure(g).first;
        const cplx d = std::polar(g.uniform(0.01, 0.95), g.uniform(0, two_pi));
        const auto r = solve_multiplicative_circle(c1, c2, d), u = solve_multiplicative_circle(c2, c1, d);
        CHECK(r.omega1 == u.omega2);
        CHECK(r.value == u.value);
    }
}

TEST_CASE("translation, dilation and rotation covariance") {
    oracle::Gen g(505);
    for (int i = 0; i < instances; ++i) {
        const double c = g.uniform(-2, 2);
        const auto [mu, mu_c] = real_measure(g, c);
        const auto nu = real_measure(g).first;
        const cplx z = upper(g);
        const auto s = solve_additive(mu_c, nu, z);
        const auto t = solve_additive(mu, nu, z - c);
        INFO(i << " shift " << c << " z " << z);
        CHECK(std::abs(s.value - t.value) < 1e-10 * (1 + std::abs(t.value)));
        CHECK(std::abs(s.omega1 - (t.omega1 + c)) < 1e-10 * (1 + std::abs(t.omega1)));
        CHECK(std::abs(s.omega2 - t.omega2) < 1e-10 * (1 + std::abs(t.omega2)));

        const double k = g.uniform(0.3, 3);
        const auto [a, a_k] = positive_measure(g, k);
        const auto b = positive_measure(g).first;
        const cplx w = upper(g);
        const auto p = solve_multiplicative_positive(a_k, b, w);
        const auto q = solve_multiplicative_positive(a, b, k * w);
        CHECK(std::abs(p.value - q.value) < 1e-10 * (1 + std::abs(q.value)));

        // point-mass dilation is exact
        const auto dk = make_measure(family::PointMass{k}, Carrier::positive_half_line);
        const auto e = solve_multiplicative_positive(a, dk, w);
        CHECK(std::abs(e.value - a.eta(k * w)) <= 1e-12 * (1 + std::abs(e.value)));

        const double rot = g.uniform(0, two_pi);
        const auto [c1, c1r] = circle_measure(g, rot);
        const auto c2 = circle_measure(g).first;
        const cplx d = std::polar(g.uniform(0.01, 0.95), g.uniform(0, two_pi));
        const auto r = solve_multiplicative_circle(c1r, c2, d);
        const auto u = solve_multiplicative_circle(c1, c2, std::polar(1.0, rot) * d);
        CHECK(std::abs(r.value - u.value) < 1e-10);
    }
}

TEST_CASE("outliers follow translations of the spiked side") {
    oracle::Gen g(606);
    for (int i = 0; i < instances; ++i) {
        const double c = g.uniform(-1, 1);
        const auto [mu, mu_c] = real_measure(g, c);
        const auto sc = make_measure(family::Semicircle{0.0, g.uniform(0.2, 1.0)});
        const double theta = mu.support_upper() + g.uniform(0.5, 3.0);
        const auto r = predict(ConvolutionKind::additive_real, make_spiked_model(mu, {theta}),
                               make_spiked_model(sc, {}));
        const auto s = predict(ConvolutionKind::additive_real, make_spiked_model(mu_c, {theta + c}),
                               make_spiked_model(sc, {}));
        INFO(i << " theta " << theta << " shift " << c);
        REQUIRE(r.outliers.size() == s.outliers.size());
        for (std::size_t k = 0; k < r.outliers.size(); ++k) {
            CHECK(std::abs(s.outliers[k].position - r.outliers[k].position - c) < 1e-7);
            CHECK(std::abs(*s.outliers[k].weight_a - *r.outliers[k].weight_a) < 1e-6);
        }
    }
}
