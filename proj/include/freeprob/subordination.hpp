#pragma once

// Subordination functions of free additive and multiplicative convolution,
// computed as attracting fixed points, continued to the boundary and
// differentiated there.

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "freeprob/error.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/numeric.hpp"

namespace freeprob {

enum class ConvolutionKind { additive_real, multiplicative_positive, multiplicative_circle };

constexpr std::string_view to_string(ConvolutionKind k) noexcept {
    switch (k) {
        case ConvolutionKind::additive_real: return "additive-real";
        case ConvolutionKind::multiplicative_positive: return "multiplicative-positive";
        case ConvolutionKind::multiplicative_circle: return "multiplicative-circle";
    }
    return "unknown";
}

constexpr Carrier carrier_of(ConvolutionKind k) noexcept {
    switch (k) {
        case ConvolutionKind::additive_real: return Carrier::real_line;
        case ConvolutionKind::multiplicative_positive: return Carrier::positive_half_line;
        case ConvolutionKind::multiplicative_circle: return Carrier::unit_circle;
    }
    return Carrier::real_line;
}

/// A measure is usable for a kind when its carrier fits: half-line measures
/// are also real-line measures.
inline bool carrier_fits(const Measure& m, ConvolutionKind k) {
    switch (k) {
        case ConvolutionKind::additive_real: return m.carrier() != Carrier::unit_circle;
        case ConvolutionKind::multiplicative_positive:
            return m.carrier() == Carrier::positive_half_line ||
                   (m.carrier() == Carrier::real_line && m.support_lower() >= 0.0);
        case ConvolutionKind::multiplicative_circle: return m.carrier() == Carrier::unit_circle;
    }
    return false;
}

struct SolverOptions {
    /// Stopping rule |w_{k+1} - w_k| < tolerance * (scale + |w_k|).
    double tolerance = 1e-13;
    int max_iterations = 10000;
    /// Relaxation used once plain iteration is detected to be slow.
    double damping = 0.5;
    int slow_check_after = 30;
    double slow_ratio = 0.9;
    std::vector<double> epsilon_ladder = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8};
    double ladder_tolerance = 1e-9;
    double residual_tolerance = 1e-10;
    /// Margin from the support for boundary work, as a fraction of the support diameter.
    double support_margin_fraction = 1e-3;
};

struct IterationStats {
    int iterations = 0;
    double final_step = 0.0;
    bool accelerated = false;  // switched away from plain iteration
    int newton_steps = 0;
    int damped_steps = 0;
    bool shortcut = false;  // closed-form point-mass formula used
};

struct PointSolution {
    cplx omega1;
    cplx omega2;
    /// F of the convolution (additive) or eta of the convolution (multiplicative).
    cplx value;
    double residual = 0.0;
    IterationStats stats;
};

struct BoundaryValue {
    cplx omega1;
    cplx omega2;
    bool omega1_pole = false;
    bool omega2_pole = false;
    double ladder_difference = 0.0;
    /// omega2 - (h_mu(omega1) + x) additively; 1/omega2 - omega1/(x eta_mu(omega1)) otherwise.
    double consistency_residual = 0.0;
    bool polished = false;
};

enum class Which { omega1, omega2 };

struct BoundaryDerivative {
    cplx value;          // Richardson-extrapolated central differences
    cplx contour_value;  // Cauchy integral cross-check
    double difference = 0.0;
};

namespace detail {

/// One half of the alternating subordination iteration, mapping omega_1 to
/// omega_2 through the first measure (and vice versa with roles exchanged).
struct HalfStep {
    ConvolutionKind kind;
    const Measure* m;
    cplx z;

    cplx operator()(cplx w) const {
        if (kind == ConvolutionKind::additive_real) return m->reciprocal_cauchy(w) - w + z;
        return z * m->eta(w) / w;
    }
    cplx derivative(cplx w) const {
        if (kind == ConvolutionKind::additive_real) return m->reciprocal_cauchy_derivative(w) - 1.0;
        return z * (m->eta_derivative(w) * w - m->eta(w)) / (w * w);
    }
};

enum class Domain { upper_half_plane, lower_half_plane, off_positive_axis, disc, real_line,
                    unit_circle_closure };

inline bool in_domain(Domain d, cplx w) {
    if (!std::isfinite(w.real()) || !std::isfinite(w.imag())) return false;
    switch (d) {
        case Domain::upper_half_plane: return w.imag() > 0;
        case Domain::lower_half_plane: return w.imag() < 0;
        case Domain::off_positive_axis: return !(w.imag() == 0 && w.real() >= 0);
        case Domain::disc: return std::abs(w) < 1.0;
        case Domain::real_line: return true;
        case Domain::unit_circle_closure: return std::abs(w) <= 1.0 + 1e-9;
    }
    return false;
}

struct FixedPoint {
    cplx w;
    IterationStats stats;
};

/// Attracting fixed point of w -> second(first(w)). Plain iteration first;
/// when the step ratio shows slow geometric convergence, Newton steps on
/// T(w) - w are tried and damped iteration is the fallback.
inline FixedPoint iterate_fixed_point(const HalfStep& first, const HalfStep& second, cplx w,
                                      double scale, Domain domain, const SolverOptions& opts,
                                      bool newton_from_start = false) {
    IterationStats stats;
    stats.accelerated = newton_from_start;
    double prev_step = std::numeric_limits<double>::infinity();
    cplx u = first(w);
    cplx t = second(u);
    for (int it = 1; it <= opts.max_iterations; ++it) {
        stats.iterations = it;
        const cplx g = t - w;
        cplx next;
        if (!stats.accelerated) {
            next = t;
            const double step = std::abs(g);
            if (it > opts.slow_check_after && step > opts.slow_ratio * prev_step) {
                stats.accelerated = true;
            }
            prev_step = step;
        } else {
            const cplx gp = second.derivative(u) * first.derivative(w) - 1.0;
            const cplx direction = -g / gp;
            bool accepted = false;
            // backtracking: near-parabolic points overshoot by orders of magnitude
            double lambda = 1.0;
            for (int trial = 0; trial < 60 && !accepted; ++trial, lambda *= 0.5) {
                const cplx cand = w + lambda * direction;
                if (!in_domain(domain, cand)) continue;
                try {
                    const cplx un = first(cand);
                    const cplx tn = second(un);
                    if (std::abs(tn - cand) < std::abs(g)) {
                        stats.final_step = std::abs(cand - w);
                        ++stats.newton_steps;
                        const bool done = stats.final_step < opts.tolerance * (scale + std::abs(w));
                        w = cand;
                        u = un;
                        t = tn;
                        accepted = true;
                        if (done) return {w, stats};
                    }
                } catch (const Error&) {
                    // candidate left the region where the transforms are defined
                }
            }
            if (accepted) continue;
            next = (1.0 - opts.damping) * w + opts.damping * t;
            ++stats.damped_steps;
        }
        stats.final_step = std::abs(next - w);
        const bool done = stats.final_step < opts.tolerance * (scale + std::abs(w));
        w = next;
        if (done) return {w, stats};
        u = first(w);
        t = second(u);
    }
    throw ConvergenceError("fixed point iteration exhausted " +
                               std::to_string(opts.max_iterations) + " iterations",
                           stats.final_step, stats.iterations);
}

inline bool canonical_swap(const Measure& mu, const Measure& nu) {
    return nu.fingerprint() < mu.fingerprint();
}

inline void check_first_moment(const Measure& m) {
    if (std::abs(m.first_moment()) < 1e-14) {
        throw Error(ErrorCode::zero_first_moment, "measure has zero first moment");
    }
}

}  // namespace detail

/// Immutable evaluator for omega_1, omega_2 of a pair (mu, nu).
class SubordinationSolution {
public:
    SubordinationSolution(ConvolutionKind kind, Measure mu, Measure nu, SolverOptions opts = {})
        : kind_(kind), mu_(std::move(mu)), nu_(std::move(nu)), opts_(std::move(opts)) {
        if (!carrier_fits(mu_, kind_) || !carrier_fits(nu_, kind_)) {
            throw Error(ErrorCode::carrier_mismatch,
                        "measure carrier does not match " + std::string(to_string(kind_)));
        }
        if (kind_ == ConvolutionKind::multiplicative_circle) {
            detail::check_first_moment(mu_);
            detail::check_first_moment(nu_);
        }
        if (kind_ == ConvolutionKind::multiplicative_positive) {
            const bool mu0 = mu_.is_point_mass() && mu_.point_mass_location() == cplx(0.0);
            const bool nu0 = nu_.is_point_mass() && nu_.point_mass_location() == cplx(0.0);
            if (mu0 || nu0) {
                throw Error(ErrorCode::point_mass_input,
                            "delta_0 on the half-line needs the degenerate-atom treatment");
            }
        }
    }

    ConvolutionKind kind() const noexcept { return kind_; }
    const Measure& mu() const noexcept { return mu_; }
    const Measure& nu() const noexcept { return nu_; }
    const SolverOptions& options() const noexcept { return opts_; }

    bool uses_shortcut() const noexcept { return mu_.is_point_mass() || nu_.is_point_mass(); }

    /// Solves at an interior point: z off the real line (additive), off
    /// [0, inf) (half-line) or inside the unit disc (circle).
    PointSolution at(cplx z) const {
        switch (kind_) {
            case ConvolutionKind::additive_real:
                if (z.imag() == 0.0) {
                    throw Error(ErrorCode::invalid_argument, "additive solve needs Im z != 0");
                }
                if (z.imag() < 0) return conjugate(at(std::conj(z)));
                break;
            case ConvolutionKind::multiplicative_positive:
                if (z.imag() == 0.0 && z.real() >= 0.0) {
                    throw Error(ErrorCode::invalid_argument, "half-line solve needs z off [0, inf)");
                }
                if (z.imag() < 0) return conjugate(at(std::conj(z)));
                break;
            case ConvolutionKind::multiplicative_circle:
                if (!(std::abs(z) < 1.0)) {
                    throw Error(ErrorCode::invalid_argument, "circle solve needs |z| < 1");
                }
                if (z == cplx(0.0)) {
                    PointSolution s{0.0, 0.0, 0.0, 0.0, {}};
                    return s;
                }
                break;
        }
        if (uses_shortcut()) return shortcut(z);
        const bool swap = detail::canonical_swap(mu_, nu_);
        const Measure& a = swap ? nu_ : mu_;
        const Measure& b = swap ? mu_ : nu_;
        auto s = solve_ordered(a, b, z, start_value(b, z), interior_domain(z), false);
        if (swap) std::swap(s.omega1, s.omega2);
        s.residual = residual_of(s.omega1, s.omega2, z);
        if (!(s.residual < opts_.residual_tolerance * (1.0 + std::abs(s.value)))) {
            throw ConvergenceError("residual above tolerance after convergence", s.residual,
                                   s.stats.iterations);
        }
        return s;
    }

    cplx omega1(cplx z) const { return at(z).omega1; }
    cplx omega2(cplx z) const { return at(z).omega2; }
    double residual(cplx z) const { return at(z).residual; }

    /// Defining-identity residual |F_mu(w1) - F_nu(w2)| or |eta_mu(w1) - eta_nu(w2)|,
    /// together with the companion identity.
    double residual_of(cplx w1, cplx w2, cplx z) const {
        if (kind_ == ConvolutionKind::additive_real) {
            const cplx f1 = mu_.reciprocal_cauchy(w1);
            const cplx f2 = nu_.reciprocal_cauchy(w2);
            return std::max(std::abs(f1 - f2), std::abs(w1 + w2 - z - f1));
        }
        const cplx e1 = mu_.eta(w1);
        const cplx e2 = nu_.eta(w2);
        return std::max(std::abs(e1 - e2), std::abs(w1 * w2 / z - e1));
    }

    /// The point at which the ladder approaches a boundary point x from inside.
    cplx ladder_point(cplx x, double eps) const {
        if (kind_ == ConvolutionKind::multiplicative_circle) return (1.0 - eps) * x;
        return {x.real(), eps};
    }

    /// Boundary values at x (real for the line kinds, unit modulus for the
    /// circle), x outside the support of the convolution.
    BoundaryValue boundary(cplx x) const {
        if (kind_ != ConvolutionKind::multiplicative_circle) x = {x.real(), 0.0};
        if (kind_ == ConvolutionKind::multiplicative_circle) x /= std::abs(x);
        if (uses_shortcut()) return shortcut_boundary(x);

        const auto& ladder = opts_.epsilon_ladder;
        std::vector<cplx> w1s, w2s;
        for (double eps : ladder) {
            const auto s = at(ladder_point(x, eps));
            w1s.push_back(s.omega1);
            w2s.push_back(s.omega2);
        }
        BoundaryValue bv;
        if (kind_ == ConvolutionKind::additive_real) {
            const double big = 1e6 * (1.0 + std::abs(x) + mu_.support_radius() + nu_.support_radius());
            bv.omega1_pole = is_pole(w1s, big);
            bv.omega2_pole = is_pole(w2s, big);
        }
        auto extrapolate = [&](const std::vector<cplx>& ws) {
            const auto diag = richardson_diagonal(ws, 1.0 / ladder_ratio());
            const cplx best = diag.back();
            const double diff = std::abs(diag.back() - diag[diag.size() - 2]);
            if (!(diff < opts_.ladder_tolerance * (1.0 + std::abs(best)))) {
                throw Error(ErrorCode::ladder_non_convergence,
                            "extrapolants differ by " + std::to_string(diff));
            }
            bv.ladder_difference = std::max(bv.ladder_difference, diff);
            return best;
        };
        if (bv.omega1_pole && bv.omega2_pole) {
            throw Error(ErrorCode::ladder_non_convergence, "both subordination functions blow up");
        }
        if (bv.omega1_pole) {
            bv.omega1 = cplx(std::numeric_limits<double>::infinity(), 0.0);
            extrapolate(w2s);
            bv.omega2 = x - mu_.mean();
            return bv;
        }
        if (bv.omega2_pole) {
            bv.omega2 = cplx(std::numeric_limits<double>::infinity(), 0.0);
            extrapolate(w1s);
            bv.omega1 = x - nu_.mean();
            return bv;
        }
        cplx w1 = extrapolate(w1s);
        cplx w2 = extrapolate(w2s);
        if (kind_ != ConvolutionKind::multiplicative_circle) {
            w1 = w1.real();
            w2 = w2.real();
        }
        polish(x, w1, w2, bv);
        bv.consistency_residual = consistency(x, bv.omega1, bv.omega2);
        return bv;
    }

    /// Derivative of omega_j at a boundary point. `gap_radius` is the
    /// distance from x to the support of the convolution (an angle on the circle).
    BoundaryDerivative derivative(cplx x, Which which, double gap_radius) const {
        if (!(gap_radius > 0)) throw Error(ErrorCode::stencil_leaves_gap, "no room around x");
        if (kind_ != ConvolutionKind::multiplicative_circle) x = {x.real(), 0.0};
        const bool circle = kind_ == ConvolutionKind::multiplicative_circle;
        auto curve = [&](double t) { return circle ? x * std::polar(1.0, t) : x + t; };
        auto value_at = [&](double t) {
            const auto bv = boundary(curve(t));
            const bool pole = which == Which::omega1 ? bv.omega1_pole : bv.omega2_pole;
            if (pole) throw Error(ErrorCode::stencil_leaves_gap, "pole inside the stencil");
            return which == Which::omega1 ? bv.omega1 : bv.omega2;
        };

        BoundaryDerivative out;
        std::optional<Error> last_error;
        double h0 = 0.25 * gap_radius;
        for (int attempt = 0; attempt < 3; ++attempt, h0 *= 0.25) {
            try {
                std::vector<cplx> ds;
                double h = h0;
                for (int level = 0; level < 5; ++level, h *= 0.5) {
                    ds.push_back((value_at(h) - value_at(-h)) / (2.0 * h));
                }
                const auto diag = richardson_diagonal(ds, 4.0);
                cplx d = diag.back();
                if (circle) d /= cplx(0.0, 1.0) * x;
                const cplx c = contour_derivative(x, which, 2.0 * h0);
                out.value = d;
                out.contour_value = c;
                out.difference = std::abs(d - c);
                if (out.difference < 1e-6 * (1.0 + std::abs(d))) return out;
                last_error = Error(ErrorCode::inconsistent_extrapolation,
                                   "difference " + std::to_string(out.difference));
            } catch (const Error& e) {
                last_error = e;
            }
        }
        throw *last_error;
    }

private:
    double ladder_ratio() const {
        const auto& l = opts_.epsilon_ladder;
        return l.size() >= 2 ? l[1] / l[0] : 0.1;
    }

    static PointSolution conjugate(PointSolution s) {
        s.omega1 = std::conj(s.omega1);
        s.omega2 = std::conj(s.omega2);
        s.value = std::conj(s.value);
        return s;
    }

    static bool is_pole(const std::vector<cplx>& ws, double big) {
        const std::size_t n = ws.size();
        if (n < 3) return false;
        const double a = std::abs(ws[n - 1]), b = std::abs(ws[n - 2]), c = std::abs(ws[n - 3]);
        return a > big && a > 3.0 * b && b > 3.0 * c;
    }

    detail::Domain interior_domain(cplx z) const {
        switch (kind_) {
            case ConvolutionKind::additive_real: return detail::Domain::upper_half_plane;
            case ConvolutionKind::multiplicative_positive:
                return z.imag() > 0 ? detail::Domain::upper_half_plane
                                    : detail::Domain::off_positive_axis;
            case ConvolutionKind::multiplicative_circle: return detail::Domain::disc;
        }
        return detail::Domain::real_line;
    }

    cplx start_value(const Measure& second, cplx z) const {
        if (kind_ == ConvolutionKind::additive_real) return z;
        return z * second.first_moment();
    }

    PointSolution solve_ordered(const Measure& a, const Measure& b, cplx z, cplx start,
                                detail::Domain domain, bool newton_only,
                                const SolverOptions* opts = nullptr) const {
        const detail::HalfStep first{kind_, &a, z};
        const detail::HalfStep second{kind_, &b, z};
        const double scale = kind_ == ConvolutionKind::additive_real ? 1.0 : std::abs(z);
        const auto fp =
            detail::iterate_fixed_point(first, second, start, scale, domain, opts ? *opts : opts_,
                                        newton_only);
        PointSolution s;
        s.omega1 = fp.w;
        s.omega2 = first(fp.w);
        s.value = kind_ == ConvolutionKind::additive_real ? a.reciprocal_cauchy(s.omega1)
                                                          : a.eta(s.omega1);
        s.stats = fp.stats;
        return s;
    }

    /// Exact formulas when one side is a point mass: translation, dilation or rotation.
    PointSolution shortcut(cplx z) const {
        PointSolution s;
        s.stats.shortcut = true;
        if (kind_ == ConvolutionKind::additive_real) {
            if (mu_.is_point_mass() && nu_.is_point_mass()) {
                s.omega1 = z - nu_.mean();
                s.omega2 = z - mu_.mean();
            } else if (mu_.is_point_mass()) {
                const double c = mu_.mean();
                s.omega2 = z - c;
                s.omega1 = nu_.reciprocal_cauchy(z - c) + c;
            } else {
                const double c = nu_.mean();
                s.omega1 = z - c;
                s.omega2 = mu_.reciprocal_cauchy(z - c) + c;
            }
            s.value = mu_.reciprocal_cauchy(s.omega1);
        } else {
            if (mu_.is_point_mass() && nu_.is_point_mass()) {
                s.omega1 = nu_.point_mass_location() * z;
                s.omega2 = mu_.point_mass_location() * z;
            } else if (nu_.is_point_mass()) {
                const cplx c = nu_.point_mass_location();
                s.omega1 = c * z;
                s.omega2 = mu_.eta(c * z) / c;
            } else {
                const cplx c = mu_.point_mass_location();
                s.omega2 = c * z;
                s.omega1 = nu_.eta(c * z) / c;
            }
            s.value = mu_.eta(s.omega1);
        }
        s.residual = residual_of(s.omega1, s.omega2, z);
        return s;
    }

    BoundaryValue shortcut_boundary(cplx x) const {
        BoundaryValue bv;
        bv.polished = true;
        if (kind_ == ConvolutionKind::additive_real) {
            // F of the non-degenerate side may blow up where its G vanishes
            auto pole_of = [&](const Measure& m, double c) {
                return std::abs(m.cauchy(x - c)) < 1e-14;
            };
            if (mu_.is_point_mass() && !nu_.is_point_mass() && pole_of(nu_, mu_.mean())) {
                bv.omega1_pole = true;
                bv.omega1 = cplx(std::numeric_limits<double>::infinity(), 0.0);
                bv.omega2 = x - mu_.mean();
                return bv;
            }
            if (nu_.is_point_mass() && !mu_.is_point_mass() && pole_of(mu_, nu_.mean())) {
                bv.omega2_pole = true;
                bv.omega2 = cplx(std::numeric_limits<double>::infinity(), 0.0);
                bv.omega1 = x - nu_.mean();
                return bv;
            }
        }
        const auto s = shortcut(x);
        bv.omega1 = s.omega1;
        bv.omega2 = s.omega2;
        if (kind_ != ConvolutionKind::multiplicative_circle) {
            bv.omega1 = bv.omega1.real();
            bv.omega2 = bv.omega2.real();
        }
        bv.consistency_residual = consistency(x, bv.omega1, bv.omega2);
        return bv;
    }

    /// Newton on the boundary itself, started from the extrapolant.
    void polish(cplx x, cplx w1, cplx w2, BoundaryValue& bv) const {
        bv.omega1 = w1;
        bv.omega2 = w2;
        const bool swap = detail::canonical_swap(mu_, nu_);
        const Measure& a = swap ? nu_ : mu_;
        const Measure& b = swap ? mu_ : nu_;
        const cplx start = swap ? w2 : w1;
        const auto domain = kind_ == ConvolutionKind::multiplicative_circle
                                ? detail::Domain::unit_circle_closure
                                : detail::Domain::real_line;
        try {
            SolverOptions o = opts_;
            o.max_iterations = 50;
            auto s = solve_ordered(a, b, x, start, domain, true, &o);
            if (swap) std::swap(s.omega1, s.omega2);
            const double moved = std::abs(s.omega1 - w1) + std::abs(s.omega2 - w2);
            const double scale = 1.0 + std::abs(w1) + std::abs(w2);
            if (moved < 1e-6 * scale &&
                residual_of(s.omega1, s.omega2, x) <= residual_of(w1, w2, x)) {
                bv.omega1 = s.omega1;
                bv.omega2 = s.omega2;
                if (kind_ != ConvolutionKind::multiplicative_circle) {
                    bv.omega1 = bv.omega1.real();
                    bv.omega2 = bv.omega2.real();
                }
                bv.polished = true;
            }
        } catch (const Error&) {
            // keep the extrapolated values
        }
    }

    double consistency(cplx x, cplx w1, cplx w2) const {
        if (kind_ == ConvolutionKind::additive_real) {
            return std::abs(w2 - (mu_.reciprocal_cauchy(w1) - w1 + x));
        }
        return std::abs(1.0 / w2 - w1 / (x * mu_.eta(w1)));
    }

    cplx reflected_value(cplx zeta, Which which) const {
        auto pick = [&](const PointSolution& s) {
            return which == Which::omega1 ? s.omega1 : s.omega2;
        };
        if (kind_ == ConvolutionKind::multiplicative_circle) {
            if (std::abs(zeta) < 1.0) return pick(at(zeta));
            return 1.0 / std::conj(pick(at(1.0 / std::conj(zeta))));
        }
        return pick(at(zeta));  // conjugate symmetry handled by at()
    }

    cplx contour_derivative(cplx x, Which which, double radius) const {
        constexpr int nodes = 64;
        CompensatedComplexSum acc;
        for (int m = 0; m < nodes; ++m) {
            const double theta = two_pi * (m + 0.5) / nodes;
            const cplx e = std::polar(1.0, theta);
            acc.add(reflected_value(x + radius * e, which) / e);
        }
        return acc.value() / (static_cast<double>(nodes) * radius);
    }

    ConvolutionKind kind_;
    Measure mu_;
    Measure nu_;
    SolverOptions opts_;
};

/// omega_1, omega_2 and F of mu [+] nu at z in the upper half-plane.
inline PointSolution solve_additive(const Measure& mu, const Measure& nu, cplx z,
                                    const SolverOptions& opts = {}) {
    if (!(z.imag() > 0)) throw Error(ErrorCode::invalid_argument, "need Im z > 0");
    return SubordinationSolution(ConvolutionKind::additive_real, mu, nu, opts).at(z);
}

/// omega_1, omega_2 and eta of mu [x] nu at z off [0, inf).
inline PointSolution solve_multiplicative_positive(const Measure& mu, const Measure& nu, cplx z,
                                                   const SolverOptions& opts = {}) {
    return SubordinationSolution(ConvolutionKind::multiplicative_positive, mu, nu, opts).at(z);
}

/// omega_1, omega_2 and eta of mu [x] nu at z in the unit disc.
inline PointSolution solve_multiplicative_circle(const Measure& mu, const Measure& nu, cplx z,
                                                 const SolverOptions& opts = {}) {
    return SubordinationSolution(ConvolutionKind::multiplicative_circle, mu, nu, opts).at(z);
}

/// Boundary values at x; when `support` is given, x must keep `margin` from it.
inline BoundaryValue continue_to_boundary(ConvolutionKind kind, const Measure& mu,
                                          const Measure& nu, cplx x, const SolverOptions& opts = {},
                                          const std::vector<Interval>* support = nullptr,
                                          double margin = 0.0);

inline BoundaryDerivative derivative_at(const SubordinationSolution& solution, cplx x, Which which,
                                        double gap_radius) {
    return solution.derivative(x, which, gap_radius);
}

/// Distance from a boundary point to a set of support components; on the
/// circle both are measured in angle.
inline double distance_to_components(ConvolutionKind kind, cplx x,
                                     const std::vector<Interval>& comps) {
    double best = std::numeric_limits<double>::infinity();
    if (kind == ConvolutionKind::multiplicative_circle) {
        const double a = wrap_angle(std::arg(x));
        for (const auto& c : comps) {
            const double mid = 0.5 * (c.lo + c.hi), half = 0.5 * (c.hi - c.lo);
            best = std::min(best, std::max(0.0, std::abs(angle_difference(a, mid)) - half));
        }
        return best;
    }
    for (const auto& c : comps) {
        const double d = x.real() < c.lo ? c.lo - x.real() : (x.real() > c.hi ? x.real() - c.hi : 0.0);
        best = std::min(best, d);
    }
    return best;
}

inline BoundaryValue continue_to_boundary(ConvolutionKind kind, const Measure& mu,
                                          const Measure& nu, cplx x, const SolverOptions& opts,
                                          const std::vector<Interval>* support, double margin) {
    if (support && distance_to_components(kind, x, *support) < margin) {
        throw Error(ErrorCode::too_close_to_support, "boundary point within the support margin");
    }
    return SubordinationSolution(kind, mu, nu, opts).boundary(x);
}

}  // namespace freeprob
