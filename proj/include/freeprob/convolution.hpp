#pragma once

// Density and support of mu [+] nu, mu [x] nu on a grid, by Stieltjes
// inversion of the subordinated transform at a small height.

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "freeprob/error.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/numeric.hpp"
#include "freeprob/subordination.hpp"

namespace freeprob {

struct DensityGrid {
    ConvolutionKind kind = ConvolutionKind::additive_real;
    std::vector<double> abscissae;  // angles on the circle
    std::vector<double> densities;
    double height = 1e-6;

    /// Trapezoid rule over the grid; on the circle the grid wraps around.
    double mass() const {
        CompensatedSum acc;
        for (std::size_t i = 1; i < abscissae.size(); ++i) {
            acc.add(0.5 * (densities[i] + densities[i - 1]) * (abscissae[i] - abscissae[i - 1]));
        }
        if (kind == ConvolutionKind::multiplicative_circle && abscissae.size() > 1) {
            const double gap = abscissae.front() + two_pi - abscissae.back();
            acc.add(0.5 * (densities.front() + densities.back()) * gap);
        }
        return acc.value();
    }
};

struct AtomCandidate {
    double location = 0.0;
    double estimated_weight = 0.0;
};

struct SupportSet {
    ConvolutionKind kind = ConvolutionKind::additive_real;
    /// Sorted disjoint closed intervals; arcs on the circle with lo in [0, 2pi).
    std::vector<Interval> components;
    double threshold = 1e-4;
    /// Indices of components narrower than three grid steps.
    std::vector<std::size_t> narrow;
    std::vector<AtomCandidate> atom_candidates;
    /// True when the components come from an exact formula rather than the density.
    bool exact = false;

    double lower() const { return components.empty() ? 0.0 : components.front().lo; }
    double upper() const { return components.empty() ? 0.0 : components.back().hi; }
};

struct DensityOptions {
    double height = 1e-6;
    std::size_t points = 2001;
    double threshold = 1e-4;
    double merge_steps = 2.0;
    double refine_tolerance = 1e-6;
    /// Height used while bisecting endpoints; the Poisson tail of an inverse
    /// square-root edge at the grid height would push endpoints outwards.
    double refine_height = 1e-9;
    /// Fractional padding of the window beyond the plausible support.
    double padding = 0.05;
    SolverOptions solver;
};

/// Window that must contain the support of the convolution.
inline Interval plausible_window(const Measure& mu, const Measure& nu, ConvolutionKind kind,
                                 double padding = 0.05) {
    switch (kind) {
        case ConvolutionKind::additive_real: {
            const double lo = mu.support_lower() + nu.support_lower();
            const double hi = mu.support_upper() + nu.support_upper();
            const double pad = padding * std::max(hi - lo, 1e-3 * (1.0 + std::abs(hi) + std::abs(lo)));
            return {lo - pad, hi + pad};
        }
        case ConvolutionKind::multiplicative_positive: {
            const double hi = mu.support_upper() * nu.support_upper();
            return {0.0, hi * (1.0 + padding)};
        }
        case ConvolutionKind::multiplicative_circle: return {0.0, two_pi};
    }
    return {0.0, 1.0};
}

inline std::vector<double> uniform_grid(const Interval& w, std::size_t n, bool periodic) {
    std::vector<double> xs(n);
    const double h = periodic ? (w.hi - w.lo) / static_cast<double>(n)
                              : (w.hi - w.lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) xs[i] = w.lo + h * static_cast<double>(i);
    return xs;
}

/// Density of the convolution at a single abscissa, at inversion height y.
inline double density_at(const SubordinationSolution& sol, double x, double y) {
    switch (sol.kind()) {
        case ConvolutionKind::additive_real: {
            const auto s = sol.at(cplx(x, y));
            return -sol.mu().cauchy(s.omega1).imag() / pi;
        }
        case ConvolutionKind::multiplicative_positive: {
            // G(zeta) = (1 + psi(1/zeta))/zeta with psi = eta/(1 - eta)
            const cplx zeta(x, y);
            const auto s = sol.at(1.0 / zeta);
            const cplx psi = s.value / (1.0 - s.value);
            return -((1.0 + psi) / zeta).imag() / pi;
        }
        case ConvolutionKind::multiplicative_circle: {
            // Poisson kernel: Re(1 + 2 psi(r e^{-i beta})) / (2 pi)
            const auto s = sol.at(std::polar(1.0 - y, -x));
            const cplx psi = s.value / (1.0 - s.value);
            return (1.0 + 2.0 * psi).real() / two_pi;
        }
    }
    return 0.0;
}

inline DensityGrid density(const SubordinationSolution& sol, const std::vector<double>& abscissae,
                           double y) {
    if (!(y > 0)) throw Error(ErrorCode::invalid_argument, "inversion height must be positive");
    for (std::size_t i = 1; i < abscissae.size(); ++i) {
        if (!(abscissae[i] > abscissae[i - 1])) {
            throw Error(ErrorCode::invalid_argument, "abscissae must increase strictly");
        }
    }
    DensityGrid g;
    g.kind = sol.kind();
    g.abscissae = abscissae;
    g.height = y;
    g.densities.resize(abscissae.size());
    for (std::size_t i = 0; i < abscissae.size(); ++i) {
        try {
            g.densities[i] = std::max(0.0, density_at(sol, abscissae[i], y));
        } catch (const ConvergenceError& e) {
            throw ConvergenceError("at abscissa index " + std::to_string(i) + ": " + e.what(),
                                   e.last_residual(), e.iterations());
        }
    }
    return g;
}

inline DensityGrid density(const Measure& mu, const Measure& nu, ConvolutionKind kind,
                           const std::vector<double>& abscissae, double y,
                           const SolverOptions& opts = {}) {
    return density(SubordinationSolution(kind, mu, nu, opts), abscissae, y);
}

/// Density on the default grid over the plausible window.
inline DensityGrid density(const Measure& mu, const Measure& nu, ConvolutionKind kind,
                           const DensityOptions& opts = {}) {
    const SubordinationSolution sol(kind, mu, nu, opts.solver);
    const auto window = plausible_window(mu, nu, kind, opts.padding);
    return density(sol, uniform_grid(window, opts.points, kind == ConvolutionKind::multiplicative_circle),
                   opts.height);
}

namespace detail {

/// Exact support when one side is a point mass: translate, dilate or rotate
/// the components of the other side.
inline std::optional<std::vector<Interval>> exact_support(const Measure& mu, const Measure& nu,
                                                          ConvolutionKind kind) {
    if (!mu.is_point_mass() && !nu.is_point_mass()) return std::nullopt;
    const bool mu_point = mu.is_point_mass();
    const Measure& other = mu_point ? nu : mu;
    const cplx c = (mu_point ? mu : nu).point_mass_location();
    std::vector<Interval> out;
    for (const auto& comp : other.support_components()) {
        switch (kind) {
            case ConvolutionKind::additive_real:
                out.push_back({comp.lo + c.real(), comp.hi + c.real()});
                break;
            case ConvolutionKind::multiplicative_positive:
                out.push_back({comp.lo * c.real(), comp.hi * c.real()});
                break;
            case ConvolutionKind::multiplicative_circle: {
                const double lo = wrap_angle(comp.lo + std::arg(c));
                out.push_back({lo, lo + comp.length()});
                break;
            }
        }
    }
    std::sort(out.begin(), out.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    // dilation by 0 collapses everything onto the origin
    std::vector<Interval> merged;
    for (const auto& iv : out) {
        if (!merged.empty() && iv.lo <= merged.back().hi) {
            merged.back().hi = std::max(merged.back().hi, iv.hi);
        } else {
            merged.push_back(iv);
        }
    }
    return merged;
}

}  // namespace detail

/// Support of the convolution: where the density at the inversion height
/// exceeds the threshold, with endpoints refined by bisection.
inline SupportSet support(const Measure& mu, const Measure& nu, ConvolutionKind kind,
                          const DensityOptions& opts = {}) {
    SupportSet out;
    out.kind = kind;
    out.threshold = opts.threshold;
    if (auto exact = detail::exact_support(mu, nu, kind)) {
        out.components = *exact;
        out.exact = true;
        return out;
    }
    const SubordinationSolution sol(kind, mu, nu, opts.solver);
    const bool circle = kind == ConvolutionKind::multiplicative_circle;
    const auto window = plausible_window(mu, nu, kind, opts.padding);
    const auto grid = density(sol, uniform_grid(window, opts.points, circle), opts.height);
    const auto& xs = grid.abscissae;
    const auto& ps = grid.densities;
    const std::size_t n = xs.size();
    const double h = xs[1] - xs[0];

    // runs of above-threshold grid points, as index ranges
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t i = 0; i < n; ++i) {
        if (ps[i] <= opts.threshold) continue;
        if (!runs.empty() && runs.back().second + 1 == i) {
            runs.back().second = i;
        } else {
            runs.push_back({i, i});
        }
    }
    if (runs.empty()) return out;

    auto excess = [&](double x) { return density_at(sol, x, opts.refine_height) - opts.threshold; };
    // bisection on the threshold crossing between an outside abscissa and the
    // first grid point, walking inwards, that is above threshold at the refine height
    auto refine = [&](std::size_t first, std::size_t last, double outside) {
        const int step = first <= last ? 1 : -1;
        for (std::size_t i = first;; i += step) {
            const double inside = xs[i];
            const double f_in = excess(inside);
            if (f_in > 0) {
                return bisect(excess, std::min(inside, outside), std::max(inside, outside),
                              inside < outside ? f_in : excess(outside), opts.refine_tolerance);
            }
            outside = inside;
            if (i == last) return inside;
        }
    };

    std::vector<Interval> comps;
    for (const auto& [a, b] : runs) {
        double lo = xs[a], hi = xs[b];
        if (a > 0) {
            lo = refine(a, b, xs[a - 1]);
        } else if (circle) {
            lo = refine(a, b, xs[n - 1] - two_pi);
        }
        if (b + 1 < n) {
            hi = refine(b, a, xs[b + 1]);
        } else if (circle) {
            hi = refine(b, a, xs[0] + two_pi);
        }
        comps.push_back({lo, hi});
    }

    // merge components whose gap is narrower than the merge width
    std::vector<Interval> merged;
    std::vector<std::size_t> widths;  // grid points per component
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const std::size_t pts = runs[i].second - runs[i].first + 1;
        if (!merged.empty() && comps[i].lo - merged.back().hi < opts.merge_steps * h) {
            merged.back().hi = comps[i].hi;
            widths.back() += pts;
        } else {
            merged.push_back(comps[i]);
            widths.push_back(pts);
        }
    }
    if (circle && merged.size() > 1 &&
        merged.front().lo + two_pi - merged.back().hi < opts.merge_steps * h) {
        merged.front().lo = merged.back().lo - two_pi;
        widths.front() += widths.back();
        merged.pop_back();
        widths.pop_back();
    }
    if (circle) {
        for (auto& c : merged) {
            const double shift = wrap_angle(c.lo) - c.lo;
            c.lo += shift;
            c.hi += shift;
        }
        std::sort(merged.begin(), merged.end(),
                  [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    }
    out.components = merged;
    for (std::size_t i = 0; i < merged.size(); ++i) {
        if (merged[i].length() < 3.0 * h) out.narrow.push_back(i);
    }

    // isolated atoms show as single-cell spikes much taller than both neighbours
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (ps[i] > opts.threshold && ps[i] > ps[i - 1] + ps[i + 1] && ps[i] * h > 1e-3) {
            out.atom_candidates.push_back({xs[i], ps[i] * h});
        }
    }
    return out;
}

inline void write_csv(std::ostream& os, const DensityGrid& g) {
    os << "abscissa,density\n";
    char buf[64];
    for (std::size_t i = 0; i < g.abscissae.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", g.abscissae[i], g.densities[i]);
        os << buf;
    }
}

inline nlohmann::json to_json(const SupportSet& s) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(s.kind));
    j["threshold"] = s.threshold;
    j["exact"] = s.exact;
    j["components"] = nlohmann::json::array();
    for (const auto& c : s.components) j["components"].push_back({c.lo, c.hi});
    j["narrow_components"] = s.narrow;
    j["atom_candidates"] = nlohmann::json::array();
    for (const auto& a : s.atom_candidates) {
        j["atom_candidates"].push_back({{"location", a.location}, {"weight", a.estimated_weight}});
    }
    return j;
}

}  // namespace freeprob
