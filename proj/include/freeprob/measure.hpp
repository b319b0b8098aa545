#pragma once

// Compactly supported probability measures on the real line, the positive
// half-line and the unit circle, with their Cauchy-type transforms.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "freeprob/error.hpp"
#include "freeprob/numeric.hpp"

namespace freeprob {

enum class Carrier { real_line, positive_half_line, unit_circle };

constexpr std::string_view to_string(Carrier c) noexcept {
    switch (c) {
        case Carrier::real_line: return "real-line";
        case Carrier::positive_half_line: return "positive-half-line";
        case Carrier::unit_circle: return "unit-circle";
    }
    return "unknown";
}

enum class TransformKind { G, F, psi, eta, h };

/// A single atom. On the unit circle `location` is an angle in radians.
struct Atom {
    double location = 0.0;
    double weight = 0.0;
};

/// Closed interval; on the unit circle the endpoints are angles and the arc
/// runs counter-clockwise from `lo` to `hi` (with hi possibly exceeding 2pi).
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    double length() const noexcept { return hi - lo; }
    bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

namespace family {
struct Semicircle {
    double mean = 0.0;
    double variance = 1.0;
};
struct Arcsine {
    double center = 0.0;
    double half_width = 1.0;
};
struct MarchenkoPastur {
    double ratio = 1.0;
    double scale = 1.0;
};
/// On the unit circle the location is an angle.
struct PointMass {
    double location = 0.0;
};
struct TwoAtom {
    double a = -1.0;
    double b = 1.0;
    double weight_a = 0.5;
};
struct Atomic {
    std::vector<Atom> atoms;
};
struct CircleAtomic {
    std::vector<Atom> atoms;
};
struct Empirical {
    std::vector<double> samples;
};
}  // namespace family

using MeasureSpec = std::variant<family::Semicircle, family::Arcsine, family::MarchenkoPastur,
                                 family::PointMass, family::TwoAtom, family::Atomic,
                                 family::CircleAtomic, family::Empirical>;

/// Distance below which a transform argument counts as lying on the support.
inline constexpr double on_support_distance = 1e-12;

class Measure;
Measure make_measure(const MeasureSpec& spec, std::optional<Carrier> carrier = std::nullopt);

/// Immutable, validated probability measure. Copies share the underlying data.
class Measure {
public:
    Carrier carrier() const noexcept { return d_->carrier; }
    const MeasureSpec& spec() const noexcept { return d_->spec; }

    bool is_point_mass() const noexcept { return d_->point_mass.has_value(); }
    /// The location of a point mass (a unit complex number on the circle).
    cplx point_mass_location() const { return d_->point_mass.value(); }

    /// First moment; complex on the circle.
    cplx first_moment() const noexcept { return d_->first_moment; }
    double mean() const noexcept { return d_->first_moment.real(); }
    double variance() const noexcept { return d_->variance; }

    /// Smallest R with supp in [-R, R]; 1 on the circle.
    double support_radius() const noexcept { return d_->support_radius; }
    double support_lower() const noexcept { return d_->support_lo; }
    double support_upper() const noexcept { return d_->support_hi; }

    /// Sorted support components. Atoms appear as zero-length components.
    /// Empirical samples stand in for a continuous law and report their hull.
    const std::vector<Interval>& support_components() const noexcept { return d_->components; }

    /// Euclidean distance from z to the support in the complex plane.
    double distance_to_support(cplx z) const {
        const Data& d = *d_;
        if (d.closed_form != ClosedForm::none) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& c : d.components) best = std::min(best, distance_to_segment(z, c));
            return best;
        }
        if (d.carrier == Carrier::unit_circle) {
            double best = std::numeric_limits<double>::infinity();
            for (const auto& p : d.points) best = std::min(best, std::abs(z - p));
            return best;
        }
        // real atoms are sorted: the nearest one neighbours Re z
        const auto& xs = d.real_points;
        auto it = std::lower_bound(xs.begin(), xs.end(), z.real());
        double best = std::numeric_limits<double>::infinity();
        if (it != xs.end()) best = std::abs(z - cplx(*it, 0.0));
        if (it != xs.begin()) best = std::min(best, std::abs(z - cplx(*std::prev(it), 0.0)));
        return best;
    }

    /// Cauchy transform G(z) = int 1/(z - t) dmu(t).
    cplx cauchy(cplx z) const {
        check_off_support(z);
        return cauchy_unchecked(z);
    }

    /// G'(z) = -int 1/(z - t)^2 dmu(t).
    cplx cauchy_derivative(cplx z) const {
        check_off_support(z);
        const Data& d = *d_;
        switch (d.closed_form) {
            case ClosedForm::semicircle: {
                const cplx w = z - d.p0;
                const double r = 2.0 * std::sqrt(d.p1);
                const cplx s = sqrt_product(w, -r, r);
                return -cauchy_unchecked(z) / s;
            }
            case ClosedForm::arcsine: {
                const cplx w = z - d.p0;
                const cplx s = sqrt_product(w, -d.p1, d.p1);
                return -w / (s * s * s);
            }
            case ClosedForm::marchenko_pastur: {
                const double lambda = d.p0, sigma = d.p1;
                const cplx u = z / sigma;
                const cplx s = sqrt_product(u, d.mp_a, d.mp_b);
                const cplx g = 2.0 / (u + lambda - 1.0 + s);
                return (lambda * g * g - g) / s / (sigma * sigma);
            }
            case ClosedForm::none: break;
        }
        CompensatedComplexSum acc;
        for (std::size_t i = 0; i < d.points.size(); ++i) {
            const cplx r = 1.0 / (z - d.points[i]);
            acc.add(-d.weights[i] * r * r);
        }
        return acc.value();
    }

    cplx reciprocal_cauchy(cplx z) const { return 1.0 / cauchy(z); }

    /// F'(z) = -G'(z) / G(z)^2.
    cplx reciprocal_cauchy_derivative(cplx z) const {
        const cplx g = cauchy(z);
        return -cauchy_derivative(z) / (g * g);
    }

    /// psi(z) = int tz/(1 - tz) dmu(t).
    cplx psi(cplx z) const {
        if (z == cplx(0.0)) return 0.0;
        check_off_support(1.0 / z);
        const Data& d = *d_;
        if (d.closed_form == ClosedForm::none) {
            CompensatedComplexSum acc;
            for (std::size_t i = 0; i < d.points.size(); ++i) {
                const cplx tz = d.points[i] * z;
                acc.add(d.weights[i] * tz / (1.0 - tz));
            }
            return acc.value();
        }
        if (std::abs(z) * d.support_radius < series_cutoff) {
            cplx acc = 0.0, zk = 1.0;
            for (double m : d.raw_moments) {
                zk *= z;
                acc += m * zk;
            }
            return acc;
        }
        return cauchy_unchecked(1.0 / z) / z - 1.0;
    }

    cplx psi_derivative(cplx z) const {
        const Data& d = *d_;
        if (z != cplx(0.0)) check_off_support(1.0 / z);
        if (d.closed_form == ClosedForm::none) {
            CompensatedComplexSum acc;
            for (std::size_t i = 0; i < d.points.size(); ++i) {
                const cplx one_minus = 1.0 - d.points[i] * z;
                acc.add(d.weights[i] * d.points[i] / (one_minus * one_minus));
            }
            return acc.value();
        }
        if (std::abs(z) * d.support_radius < series_cutoff) {
            cplx acc = 0.0, zk = 1.0;
            for (std::size_t k = 0; k < d.raw_moments.size(); ++k) {
                acc += static_cast<double>(k + 1) * d.raw_moments[k] * zk;
                zk *= z;
            }
            return acc;
        }
        const cplx inv = 1.0 / z;
        check_off_support(inv);
        return -cauchy_unchecked(inv) * inv * inv - cauchy_derivative(inv) * inv * inv * inv;
    }

    /// eta(z) = psi(z) / (1 + psi(z)).
    cplx eta(cplx z) const {
        const cplx p = psi(z);
        const cplx denom = 1.0 + p;
        if (std::abs(denom) < 1e-300) {
            throw Error(ErrorCode::eta_undefined, "1 + psi vanishes");
        }
        return p / denom;
    }

    cplx eta_derivative(cplx z) const {
        const cplx denom = 1.0 + psi(z);
        if (std::abs(denom) < 1e-300) {
            throw Error(ErrorCode::eta_undefined, "1 + psi vanishes");
        }
        return psi_derivative(z) / (denom * denom);
    }

    cplx transform(TransformKind kind, cplx z) const {
        switch (kind) {
            case TransformKind::G: return cauchy(z);
            case TransformKind::F: return reciprocal_cauchy(z);
            case TransformKind::psi: return psi(z);
            case TransformKind::eta: return eta(z);
            case TransformKind::h: return reciprocal_cauchy(z) - z;
        }
        return 0.0;
    }

    /// Generalized inverse of the distribution function at u in (0, 1).
    /// On the circle the result is an angle in [0, 2pi).
    double quantile(double u) const {
        const Data& d = *d_;
        switch (d.closed_form) {
            case ClosedForm::semicircle: {
                const double s = std::sqrt(d.p1);
                auto cdf = [](double t) {
                    return 0.5 + (t * std::sqrt(std::max(0.0, 1.0 - t * t)) + std::asin(t)) / pi;
                };
                double lo = -1.0, hi = 1.0;
                for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
                    const double mid = 0.5 * (lo + hi);
                    (cdf(mid) < u ? lo : hi) = mid;
                }
                return d.p0 + 2.0 * s * 0.5 * (lo + hi);
            }
            case ClosedForm::arcsine:
                return d.p0 + d.p1 * std::sin(pi * (u - 0.5));
            case ClosedForm::marchenko_pastur: return mp_quantile(u);
            case ClosedForm::none: break;
        }
        // atoms are stored sorted by location (angle on the circle)
        double cumulative = 0.0;
        for (std::size_t i = 0; i < d.sorted_locations.size(); ++i) {
            cumulative += d.sorted_weights[i];
            if (cumulative >= u) return d.sorted_locations[i];
        }
        return d.sorted_locations.back();
    }

    /// Canonical text form; totally orders measures for symmetric solves.
    const std::string& fingerprint() const noexcept { return d_->fingerprint; }

    friend bool operator==(const Measure& a, const Measure& b) {
        return a.fingerprint() == b.fingerprint();
    }

    friend Measure make_measure(const MeasureSpec& spec, std::optional<Carrier> carrier);

private:
    enum class ClosedForm { none, semicircle, arcsine, marchenko_pastur };
    static constexpr double series_cutoff = 1e-4;

    struct Data {
        Carrier carrier = Carrier::real_line;
        MeasureSpec spec;
        ClosedForm closed_form = ClosedForm::none;
        double p0 = 0.0, p1 = 0.0;  // family parameters
        double mp_a = 0.0, mp_b = 0.0;
        std::vector<cplx> points;  // atoms (unit complex on the circle)
        std::vector<double> weights;
        std::vector<double> real_points;  // sorted, real carriers only
        std::vector<double> sorted_locations, sorted_weights;
        std::optional<cplx> point_mass;
        cplx first_moment = 0.0;
        double variance = 0.0;
        double support_radius = 0.0, support_lo = 0.0, support_hi = 0.0;
        std::vector<Interval> components;
        std::vector<double> raw_moments;  // m_1..m_4, closed forms only
        std::string fingerprint;
    };

    explicit Measure(std::shared_ptr<const Data> d) : d_(std::move(d)) {}

    static double distance_to_segment(cplx z, const Interval& c) {
        const double x = std::clamp(z.real(), c.lo, c.hi);
        return std::abs(z - cplx(x, 0.0));
    }

    void check_off_support(cplx z) const {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) {
            throw Error(ErrorCode::evaluation_on_support, "non-finite argument");
        }
        if (distance_to_support(z) < on_support_distance) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "z = %.17g%+.17gi", z.real(), z.imag());
            throw Error(ErrorCode::evaluation_on_support, buf);
        }
    }

    cplx cauchy_unchecked(cplx z) const {
        const Data& d = *d_;
        switch (d.closed_form) {
            case ClosedForm::semicircle: {
                const cplx w = z - d.p0;
                const double r = 2.0 * std::sqrt(d.p1);
                return 2.0 / (w + sqrt_product(w, -r, r));
            }
            case ClosedForm::arcsine: {
                const cplx w = z - d.p0;
                return 1.0 / sqrt_product(w, -d.p1, d.p1);
            }
            case ClosedForm::marchenko_pastur: {
                const double lambda = d.p0, sigma = d.p1;
                const cplx u = z / sigma;
                return 2.0 / (u + lambda - 1.0 + sqrt_product(u, d.mp_a, d.mp_b)) / sigma;
            }
            case ClosedForm::none: break;
        }
        CompensatedComplexSum acc;
        for (std::size_t i = 0; i < d.points.size(); ++i) acc.add(d.weights[i] / (z - d.points[i]));
        return acc.value();
    }

    double mp_density_unit(double x) const {
        const Data& d = *d_;
        const double v = (d.mp_b - x) * (x - d.mp_a);
        return v <= 0 ? 0.0 : std::sqrt(v) / (two_pi * d.p0 * x);
    }

    // Continuous part of the unit-scale law integrated over [a, x(t)] with
    // x(t) = (a+b)/2 - (b-a)/2 cos t; the substitution removes the edge roots.
    double mp_continuous_cdf(double t) const {
        const Data& d = *d_;
        const double half = 0.5 * (d.mp_b - d.mp_a), mid = 0.5 * (d.mp_a + d.mp_b);
        const int n = 400;
        auto integrand = [&](double s) {
            const double x = mid - half * std::cos(s);
            const double sn = std::sin(s);
            return x <= 0 ? 0.0 : half * half * sn * sn / (two_pi * d.p0 * x);
        };
        if (t <= 0) return 0.0;
        const double h = t / n;
        CompensatedSum acc;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
            acc.add(w * integrand(i * h));
        }
        return acc.value() * h / 3.0;
    }

    double mp_quantile(double u) const {
        const Data& d = *d_;
        const double lambda = d.p0, sigma = d.p1;
        const double atom = lambda > 1.0 ? 1.0 - 1.0 / lambda : 0.0;
        if (u <= atom) return 0.0;
        const double target = u - atom;
        double lo = 0.0, hi = pi;
        for (int i = 0; i < 60; ++i) {
            const double mid = 0.5 * (lo + hi);
            (mp_continuous_cdf(mid) < target ? lo : hi) = mid;
        }
        const double half = 0.5 * (d.mp_b - d.mp_a), mid = 0.5 * (d.mp_a + d.mp_b);
        return sigma * (mid - half * std::cos(0.5 * (lo + hi)));
    }

    std::shared_ptr<const Data> d_;
};

namespace detail {

inline std::string hexd(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%a", x);
    return buf;
}

inline void validate_weights(const std::vector<Atom>& atoms) {
    if (atoms.empty()) throw Error(ErrorCode::invalid_weights, "no atoms");
    CompensatedSum total;
    for (const auto& a : atoms) {
        if (!(a.weight >= 0.0) || !std::isfinite(a.location)) {
            throw Error(ErrorCode::invalid_weights, "negative or non-finite weight");
        }
        total.add(a.weight);
    }
    if (std::abs(total.value() - 1.0) > 1e-12) {
        throw Error(ErrorCode::invalid_weights,
                    "weights sum to " + std::to_string(total.value()));
    }
}

}  // namespace detail

/// Validates a representation and builds the measure. The carrier defaults
/// to the natural one for the representation.
inline Measure make_measure(const MeasureSpec& spec, std::optional<Carrier> carrier) {
    using D = Measure::Data;
    using CF = Measure::ClosedForm;
    auto d = std::make_shared<D>();
    d->spec = spec;

    std::vector<Atom> atoms;  // for atomic representations
    bool circle_atoms = false;

    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, family::Semicircle>) {
                if (!(s.variance > 0)) {
                    throw Error(ErrorCode::negative_variance_family, "semicircle variance <= 0");
                }
                d->closed_form = CF::semicircle;
                d->p0 = s.mean;
                d->p1 = s.variance;
                const double r = 2.0 * std::sqrt(s.variance);
                d->components = {{s.mean - r, s.mean + r}};
                d->first_moment = s.mean;
                d->variance = s.variance;
                const double m = s.mean, v = s.variance;
                d->raw_moments = {m, m * m + v, m * m * m + 3 * m * v,
                                  m * m * m * m + 6 * m * m * v + 2 * v * v};
                d->fingerprint = "semicircle " + detail::hexd(m) + " " + detail::hexd(v);
                carrier = carrier.value_or(Carrier::real_line);
            } else if constexpr (std::is_same_v<T, family::Arcsine>) {
                if (!(s.half_width > 0)) {
                    throw Error(ErrorCode::negative_variance_family, "arcsine half-width <= 0");
                }
                d->closed_form = CF::arcsine;
                d->p0 = s.center;
                d->p1 = s.half_width;
                d->components = {{s.center - s.half_width, s.center + s.half_width}};
                d->first_moment = s.center;
                const double c = s.center, v = 0.5 * s.half_width * s.half_width;
                const double k4 = 3.0 * std::pow(s.half_width, 4) / 8.0;
                d->variance = v;
                d->raw_moments = {c, c * c + v, c * c * c + 3 * c * v,
                                  c * c * c * c + 6 * c * c * v + k4};
                d->fingerprint = "arcsine " + detail::hexd(c) + " " + detail::hexd(s.half_width);
                carrier = carrier.value_or(Carrier::real_line);
            } else if constexpr (std::is_same_v<T, family::MarchenkoPastur>) {
                if (!(s.ratio > 0) || !(s.scale > 0)) {
                    throw Error(ErrorCode::negative_variance_family,
                                "Marchenko-Pastur ratio and scale must be positive");
                }
                d->closed_form = CF::marchenko_pastur;
                d->p0 = s.ratio;
                d->p1 = s.scale;
                const double sq = std::sqrt(s.ratio);
                d->mp_a = (1 - sq) * (1 - sq);
                d->mp_b = (1 + sq) * (1 + sq);
                if (s.ratio > 1.0) d->components.push_back({0.0, 0.0});
                d->components.push_back({s.scale * d->mp_a, s.scale * d->mp_b});
                d->first_moment = s.scale;
                d->variance = s.scale * s.scale * s.ratio;
                const double l = s.ratio, c = s.scale;
                d->raw_moments = {c, c * c * (1 + l), c * c * c * (1 + 3 * l + l * l),
                                  c * c * c * c * (1 + 6 * l + 6 * l * l + l * l * l)};
                d->fingerprint = "marchenko-pastur " + detail::hexd(l) + " " + detail::hexd(c);
                carrier = carrier.value_or(Carrier::positive_half_line);
            } else if constexpr (std::is_same_v<T, family::PointMass>) {
                atoms = {{s.location, 1.0}};
                circle_atoms = carrier == Carrier::unit_circle;
                carrier = carrier.value_or(Carrier::real_line);
            } else if constexpr (std::is_same_v<T, family::TwoAtom>) {
                if (!(s.weight_a >= 0.0 && s.weight_a <= 1.0)) {
                    throw Error(ErrorCode::invalid_weights, "two-atom weight outside [0,1]");
                }
                atoms = {{s.a, s.weight_a}, {s.b, 1.0 - s.weight_a}};
                carrier = carrier.value_or(Carrier::real_line);
            } else if constexpr (std::is_same_v<T, family::Atomic>) {
                atoms = s.atoms;
                carrier = carrier.value_or(Carrier::real_line);
            } else if constexpr (std::is_same_v<T, family::CircleAtomic>) {
                atoms = s.atoms;
                circle_atoms = true;
                if (carrier && *carrier != Carrier::unit_circle) {
                    throw Error(ErrorCode::off_carrier_atom, "circle atoms on a real carrier");
                }
                carrier = Carrier::unit_circle;
            } else if constexpr (std::is_same_v<T, family::Empirical>) {
                if (s.samples.empty()) throw Error(ErrorCode::invalid_weights, "no samples");
                const double w = 1.0 / static_cast<double>(s.samples.size());
                atoms.reserve(s.samples.size());
                for (double x : s.samples) atoms.push_back({x, w});
                carrier = carrier.value_or(Carrier::real_line);
            }
        },
        spec);

    d->carrier = *carrier;

    if (d->closed_form != CF::none) {
        if (d->carrier == Carrier::unit_circle) {
            throw Error(ErrorCode::off_carrier_atom, "real family declared on the unit circle");
        }
        d->support_lo = d->components.front().lo;
        d->support_hi = d->components.back().hi;
    } else {
        const bool empirical = std::holds_alternative<family::Empirical>(spec);
        if (empirical) {
            // uniform weights sum to 1 only up to rounding of 1/n
            for (const auto& a : atoms) {
                if (!std::isfinite(a.location)) {
                    throw Error(ErrorCode::invalid_weights, "non-finite sample");
                }
            }
        } else {
            detail::validate_weights(atoms);
        }
        if (d->carrier == Carrier::unit_circle && !circle_atoms) {
            throw Error(ErrorCode::off_carrier_atom, "real atoms declared on the unit circle");
        }
        std::sort(atoms.begin(), atoms.end(), [&](const Atom& x, const Atom& y) {
            return circle_atoms ? wrap_angle(x.location) < wrap_angle(y.location)
                                : x.location < y.location;
        });
        CompensatedComplexSum m1;
        CompensatedSum m2;
        std::string fp = circle_atoms ? "circle" : "atoms";
        if (empirical) fp = "empirical";
        for (const auto& a : atoms) {
            const double loc = circle_atoms ? wrap_angle(a.location) : a.location;
            const cplx p = circle_atoms ? std::polar(1.0, loc) : cplx(loc, 0.0);
            d->points.push_back(p);
            d->weights.push_back(a.weight);
            d->sorted_locations.push_back(loc);
            d->sorted_weights.push_back(a.weight);
            if (!circle_atoms) d->real_points.push_back(loc);
            m1.add(a.weight * p);
            fp += " " + detail::hexd(loc) + ":" + detail::hexd(a.weight);
        }
        d->first_moment = m1.value();
        if (!circle_atoms) {
            for (const auto& a : atoms) {
                const double c = a.location - d->first_moment.real();
                m2.add(a.weight * c * c);
            }
            d->variance = m2.value();
            d->support_lo = d->real_points.front();
            d->support_hi = d->real_points.back();
            if (empirical) {
                d->components = {{d->support_lo, d->support_hi}};
            } else {
                for (double x : d->real_points) {
                    if (d->components.empty() || d->components.back().hi != x) {
                        d->components.push_back({x, x});
                    }
                }
            }
        } else {
            for (double loc : d->sorted_locations) {
                if (d->components.empty() || d->components.back().hi != loc) {
                    d->components.push_back({loc, loc});
                }
            }
            d->support_lo = d->sorted_locations.front();
            d->support_hi = d->sorted_locations.back();
        }
        // single-atom measures are point masses regardless of representation
        std::size_t nonzero = 0;
        cplx where = 0.0;
        for (std::size_t i = 0; i < d->points.size(); ++i) {
            if (d->weights[i] > 0) {
                ++nonzero;
                where = d->points[i];
            }
        }
        bool all_same = true;
        for (std::size_t i = 0; i < d->points.size(); ++i) {
            if (d->weights[i] > 0 && d->points[i] != where) all_same = false;
        }
        if (nonzero >= 1 && all_same) d->point_mass = where;
        d->fingerprint = fp;
    }

    if (d->carrier == Carrier::positive_half_line && d->support_lo < 0.0) {
        throw Error(ErrorCode::off_carrier_atom, "support extends below 0 on the half-line");
    }
    d->support_radius = d->carrier == Carrier::unit_circle
                            ? 1.0
                            : std::max(std::abs(d->support_lo), std::abs(d->support_hi));
    d->fingerprint = std::string(to_string(d->carrier)) + " " + d->fingerprint;
    return Measure(std::move(d));
}

}  // namespace freeprob
