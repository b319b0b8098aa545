#pragma once

// Outlier locations, multiplicities and eigenvector overlaps for spiked
// deformations of A + U*BU, A^{1/2}U*BUA^{1/2} and AU*BU.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "freeprob/convolution.hpp"
#include "freeprob/error.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/numeric.hpp"
#include "freeprob/subordination.hpp"

namespace freeprob {

/// A spike value with its multiplicity; an angle on the circle.
struct Spike {
    double location = 0.0;
    int multiplicity = 1;
};

struct SpikedModel {
    Measure bulk;
    std::vector<Spike> spikes;  // sorted in decreasing order
};

inline cplx spike_point(const Measure& bulk, double location) {
    return bulk.carrier() == Carrier::unit_circle ? std::polar(1.0, location) : cplx(location, 0.0);
}

/// Groups equal values, sorts them decreasingly and checks that every spike
/// lies off the support of the bulk.
inline SpikedModel make_spiked_model(Measure bulk, const std::vector<double>& values) {
    const bool circle = bulk.carrier() == Carrier::unit_circle;
    std::vector<double> v;
    for (double x : values) v.push_back(circle ? wrap_angle(x) : x);
    std::sort(v.begin(), v.end(), std::greater<>());
    SpikedModel m{std::move(bulk), {}};
    for (double x : v) {
        if (!std::isfinite(x)) throw Error(ErrorCode::invalid_argument, "non-finite spike");
        if (m.bulk.carrier() == Carrier::positive_half_line && x < 0) {
            throw Error(ErrorCode::off_carrier_atom, "negative spike on the half-line");
        }
        if (m.bulk.distance_to_support(spike_point(m.bulk, x)) < on_support_distance) {
            throw Error(ErrorCode::invalid_argument,
                        "spike " + std::to_string(x) + " lies on the bulk support");
        }
        if (!m.spikes.empty() && m.spikes.back().location == x) {
            ++m.spikes.back().multiplicity;
        } else {
            m.spikes.push_back({x, 1});
        }
    }
    return m;
}

struct OutlierRecord {
    double position = 0.0;  // rho, or its angle on the circle
    int k = 0;              // spikes of A mapped here
    int ell = 0;            // spikes of B mapped here
    std::vector<std::string> sources;
    std::optional<double> weight_a;
    std::optional<double> weight_b;
    bool degenerate = false;       // tangential root, count unreliable
    bool weight_check_failed = false;  // a weight fell outside (0, 1]
    double epsilon = 0.0;          // half the distance to the rest of K'
    double residual = 0.0;         // |phi(rho) - spike| at the reported root
};

struct RejectedRoot {
    double position = 0.0;
    std::string source;
    std::string reason;
};

struct OutlierReport {
    ConvolutionKind kind = ConvolutionKind::additive_real;
    SupportSet K;
    std::vector<OutlierRecord> outliers;  // sorted by position
    std::vector<RejectedRoot> rejected;
    double margin = 0.0;
    /// Half-line model with a delta_0 bulk: handled by the limit of the perturbed model.
    bool degenerate_bulk = false;

    /// K' = K plus the outlier positions.
    std::vector<double> k_prime_points() const {
        std::vector<double> out;
        for (const auto& o : outliers) out.push_back(o.position);
        return out;
    }
};

struct PredictOptions {
    DensityOptions density;
    int scan_points = 512;
    double root_tolerance = 1e-12;
    double verify_tolerance = 1e-9;
    bool compute_weights = true;
    /// Overrides the default margin (support margin fraction times the diameter of K).
    std::optional<double> margin;
};

namespace detail {

inline std::string source_label(char side, double value, int multiplicity) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%c:%.12g", side, value);
    std::string s = buf;
    if (multiplicity > 1) s += "x" + std::to_string(multiplicity);
    return s;
}

/// Boundary point at which phi_j is evaluated for a candidate rho.
inline cplx boundary_argument(ConvolutionKind kind, double rho) {
    switch (kind) {
        case ConvolutionKind::additive_real: return rho;
        case ConvolutionKind::multiplicative_positive: return 1.0 / rho;
        case ConvolutionKind::multiplicative_circle: return std::polar(1.0, -rho);
    }
    return rho;
}

struct PhiValues {
    cplx phi1, phi2;
    bool ok = false;
};

/// phi_j(rho) = omega_j(rho) additively, 1/omega_j(1/rho) otherwise; the
/// equations phi_1 = theta and phi_2 = tau locate the outliers.
inline PhiValues phi_at(const SubordinationSolution& sol, double rho) {
    PhiValues out;
    try {
        const auto bv = sol.boundary(boundary_argument(sol.kind(), rho));
        const double inf = std::numeric_limits<double>::infinity();
        if (sol.kind() == ConvolutionKind::additive_real) {
            out.phi1 = bv.omega1_pole ? cplx(inf, 0.0) : bv.omega1;
            out.phi2 = bv.omega2_pole ? cplx(inf, 0.0) : bv.omega2;
        } else {
            out.phi1 = bv.omega1 == cplx(0.0) ? cplx(inf, 0.0) : 1.0 / bv.omega1;
            out.phi2 = bv.omega2 == cplx(0.0) ? cplx(inf, 0.0) : 1.0 / bv.omega2;
        }
        out.ok = true;
    } catch (const Error&) {
        out.ok = false;
    }
    return out;
}

inline double mismatch(ConvolutionKind kind, cplx phi, double spike) {
    if (kind == ConvolutionKind::multiplicative_circle) {
        return angle_difference(std::arg(phi), spike);
    }
    return phi.real() - spike;
}

struct Region {
    double lo, hi;
};

inline std::vector<Region> scan_regions(ConvolutionKind kind, const SupportSet& K, double margin,
                                        double far) {
    std::vector<Region> out;
    const auto& c = K.components;
    if (c.empty()) return out;
    if (kind == ConvolutionKind::multiplicative_circle) {
        for (std::size_t i = 0; i < c.size(); ++i) {
            const double lo = c[i].hi + margin;
            const double hi = (i + 1 < c.size() ? c[i + 1].lo : c[0].lo + two_pi) - margin;
            if (hi > lo) out.push_back({lo, hi});
        }
        return out;
    }
    if (kind == ConvolutionKind::additive_real) {
        out.push_back({c.front().lo - far, c.front().lo - margin});
    } else if (c.front().lo > 2.0 * margin) {
        out.push_back({margin, c.front().lo - margin});
    }
    for (std::size_t i = 0; i + 1 < c.size(); ++i) {
        const double lo = c[i].hi + margin, hi = c[i + 1].lo - margin;
        if (hi > lo) out.push_back({lo, hi});
    }
    out.push_back({c.back().hi + margin, c.back().hi + far});
    return out;
}

/// Distance from the boundary argument of rho to the singular set of omega_j.
inline double boundary_gap_radius(ConvolutionKind kind, double rho, const SupportSet& K) {
    if (kind == ConvolutionKind::multiplicative_circle) {
        return distance_to_components(kind, std::polar(1.0, rho), K.components);
    }
    if (kind == ConvolutionKind::additive_real) {
        return distance_to_components(kind, rho, K.components);
    }
    // the singular set in the 1/rho coordinate is {1/t : t in K}
    const double x = 1.0 / rho;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& c : K.components) {
        const double lo = c.hi > 0 ? 1.0 / c.hi : std::numeric_limits<double>::infinity();
        const double hi = c.lo > 0 ? 1.0 / c.lo : std::numeric_limits<double>::infinity();
        const double d = x < lo ? lo - x : (x > hi ? x - hi : 0.0);
        best = std::min(best, d);
    }
    return best;
}

inline double position_distance(ConvolutionKind kind, double a, double b) {
    if (kind == ConvolutionKind::multiplicative_circle) return std::abs(angle_difference(a, b));
    return std::abs(a - b);
}

}  // namespace detail

/// Overlap weights of an outlier record: 1/omega_j'(rho) additively and
/// rho omega_j(1/rho)/omega_j'(1/rho) for the multiplicative models.
inline std::pair<std::optional<double>, std::optional<double>> overlap_weights(
    const SubordinationSolution& sol, const OutlierRecord& rec, const SupportSet& K,
    bool* check_failed = nullptr) {
    const ConvolutionKind kind = sol.kind();
    const double radius = detail::boundary_gap_radius(kind, rec.position, K);
    const cplx x = detail::boundary_argument(kind, rec.position);
    bool failed = false;
    auto one = [&](Which which, int count) -> std::optional<double> {
        if (count == 0) return 0.0;
        const cplx d = sol.derivative(x, which, radius).value;
        double w;
        if (kind == ConvolutionKind::additive_real) {
            w = 1.0 / d.real();
        } else {
            const auto bv = sol.boundary(x);
            const cplx omega = which == Which::omega1 ? bv.omega1 : bv.omega2;
            const cplx rho = kind == ConvolutionKind::multiplicative_circle
                                 ? std::polar(1.0, rec.position)
                                 : cplx(rec.position, 0.0);
            const cplx v = rho * omega / d;
            if (std::abs(v.imag()) > 1e-6 * (1.0 + std::abs(v))) failed = true;
            w = v.real();
        }
        if (w > 1.0 && w <= 1.0 + 1e-9) w = 1.0;
        if (!(w > 0.0 && w <= 1.0)) failed = true;
        return w;
    };
    auto a = one(Which::omega1, rec.k);
    auto b = one(Which::omega2, rec.ell);
    if (check_failed) *check_failed = failed;
    return {a, b};
}

namespace detail {

inline OutlierReport predict_degenerate_bulk(const SpikedModel& A, const SpikedModel& B) {
    // delta_0 bulk on the half-line: spikes of the other side scale by its first moment
    OutlierReport r;
    r.kind = ConvolutionKind::multiplicative_positive;
    r.degenerate_bulk = true;
    r.K.kind = r.kind;
    r.K.exact = true;
    r.K.components = {{0.0, 0.0}};
    auto is_zero = [](const Measure& m) {
        return m.is_point_mass() && m.point_mass_location() == cplx(0.0);
    };
    if (is_zero(A.bulk) && is_zero(B.bulk)) return r;
    const bool b_zero = is_zero(B.bulk);
    const SpikedModel& spiked = b_zero ? B : A;
    const double gamma = (b_zero ? A.bulk : B.bulk).mean();
    for (const auto& s : spiked.spikes) {
        OutlierRecord rec;
        rec.position = s.location * gamma;
        (b_zero ? rec.ell : rec.k) = s.multiplicity;
        rec.sources.push_back(source_label(b_zero ? 'B' : 'A', s.location, s.multiplicity));
        r.outliers.push_back(rec);
    }
    std::sort(r.outliers.begin(), r.outliers.end(),
              [](const auto& a, const auto& b) { return a.position < b.position; });
    for (auto& o : r.outliers) {
        double d = std::abs(o.position);
        for (const auto& p : r.outliers) {
            if (&p != &o) d = std::min(d, std::abs(p.position - o.position));
        }
        o.epsilon = 0.5 * d;
    }
    return r;
}

}  // namespace detail

inline OutlierReport predict(ConvolutionKind kind, const SpikedModel& A, const SpikedModel& B,
                             const PredictOptions& opts = {}) {
    if (!carrier_fits(A.bulk, kind) || !carrier_fits(B.bulk, kind)) {
        throw Error(ErrorCode::carrier_mismatch, "bulk carrier does not match the model");
    }
    if (kind == ConvolutionKind::multiplicative_positive) {
        auto is_zero = [](const Measure& m) {
            return m.is_point_mass() && m.point_mass_location() == cplx(0.0);
        };
        if (is_zero(A.bulk) || is_zero(B.bulk)) return detail::predict_degenerate_bulk(A, B);
    }

    OutlierReport report;
    report.kind = kind;
    report.K = support(A.bulk, B.bulk, kind, opts.density);
    const SubordinationSolution sol(kind, A.bulk, B.bulk, opts.density.solver);
    const auto& comps = report.K.components;
    if (comps.empty()) throw Error(ErrorCode::resolution_too_coarse, "no support detected");

    const bool circle = kind == ConvolutionKind::multiplicative_circle;
    const double diameter =
        std::max(report.K.upper() - report.K.lower(), 1e-3 * (1.0 + std::abs(report.K.upper())));
    report.margin = opts.margin.value_or(opts.density.solver.support_margin_fraction * diameter);

    double max_a = 0.0, max_b = 0.0;
    for (const auto& s : A.spikes) max_a = std::max(max_a, std::abs(s.location));
    for (const auto& s : B.spikes) max_b = std::max(max_b, std::abs(s.location));
    const double ra = A.bulk.support_radius(), rb = B.bulk.support_radius();
    double far;
    if (kind == ConvolutionKind::additive_real) {
        far = 4.0 * (ra + rb) + 2.0 * std::max(max_a, max_b) + std::abs(A.bulk.mean()) +
              std::abs(B.bulk.mean()) + 1.0;
    } else {
        far = 4.0 * ra * rb + 2.0 * (max_a * rb + max_b * ra) + 1.0;
    }

    struct Root {
        double position;
        char side;
        Spike spike;
        bool degenerate;
        double residual;
    };
    std::vector<Root> roots;

    for (const auto& region : detail::scan_regions(kind, report.K, report.margin, far)) {
        const int n = std::max(opts.scan_points, 2);
        std::vector<double> xs(n);
        std::vector<detail::PhiValues> phis(n);
        for (int i = 0; i < n; ++i) {
            xs[i] = region.lo + (region.hi - region.lo) * i / (n - 1);
            phis[i] = detail::phi_at(sol, xs[i]);
        }
        auto solve_side = [&](char side, const SpikedModel& model) {
            for (const auto& sp : model.spikes) {
                auto g_of = [&](const detail::PhiValues& p) {
                    return detail::mismatch(kind, side == 'A' ? p.phi1 : p.phi2, sp.location);
                };
                auto g = [&](double x) {
                    const auto p = detail::phi_at(sol, x);
                    return p.ok ? g_of(p) : std::numeric_limits<double>::quiet_NaN();
                };
                std::vector<double> gs(n);
                for (int i = 0; i < n; ++i) {
                    gs[i] = phis[i].ok ? g_of(phis[i]) : std::numeric_limits<double>::quiet_NaN();
                }
                auto record = [&](double rho, bool degenerate) {
                    const auto p = detail::phi_at(sol, rho);
                    const double res = p.ok ? std::abs(g_of(p)) : std::numeric_limits<double>::infinity();
                    const std::string label = detail::source_label(side, sp.location, sp.multiplicity);
                    if (!(res < opts.verify_tolerance)) {
                        report.rejected.push_back({rho, label, "verification failed (pole or jump)"});
                        return;
                    }
                    roots.push_back({rho, side, sp, degenerate, res});
                };
                for (int i = 0; i + 1 < n; ++i) {
                    if (std::isnan(gs[i]) || std::isnan(gs[i + 1])) continue;
                    if (gs[i] == 0.0) {
                        record(xs[i], false);
                        continue;
                    }
                    if ((gs[i] < 0) != (gs[i + 1] < 0) && gs[i + 1] != 0.0) {
                        const double rho =
                            bisect(g, xs[i], xs[i + 1], gs[i], opts.root_tolerance);
                        record(rho, false);
                    }
                }
                if (n > 0 && gs[n - 1] == 0.0) record(xs[n - 1], false);
                // tangential roots: a local minimum of |g| without a sign change
                for (int i = 1; i + 1 < n; ++i) {
                    if (std::isnan(gs[i - 1]) || std::isnan(gs[i]) || std::isnan(gs[i + 1])) continue;
                    const bool same = (gs[i - 1] < 0) == (gs[i] < 0) && (gs[i] < 0) == (gs[i + 1] < 0);
                    if (!same || !(std::abs(gs[i]) < std::abs(gs[i - 1])) ||
                        !(std::abs(gs[i]) < std::abs(gs[i + 1]))) {
                        continue;
                    }
                    if (std::abs(gs[i]) > 1e-2 * (1.0 + std::abs(sp.location))) continue;
                    double a = xs[i - 1], b = xs[i + 1];
                    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
                    for (int it = 0; it < 80 && b - a > opts.root_tolerance; ++it) {
                        const double c = b - r * (b - a), d = a + r * (b - a);
                        const double gc = std::abs(g(c)), gd = std::abs(g(d));
                        if (std::isnan(gc) || std::isnan(gd)) break;
                        (gc < gd ? b : a) = gc < gd ? d : c;
                    }
                    const double m = 0.5 * (a + b);
                    const double gm = std::abs(g(m));
                    if (gm < opts.verify_tolerance) record(m, true);
                }
                // a sign change between the support edge and the margin is reported only
                for (const double edge_side : {region.lo, region.hi}) {
                    const bool at_lo = edge_side == region.lo;
                    const double inner = at_lo ? region.lo - 0.9 * report.margin
                                               : region.hi + 0.9 * report.margin;
                    const bool unbounded = kind != ConvolutionKind::multiplicative_circle &&
                                           ((at_lo && region.lo < report.K.lower()) ||
                                            (!at_lo && region.hi > report.K.upper()));
                    if (unbounded) continue;
                    const double g_edge = g(inner);
                    const double g_first = at_lo ? gs[0] : gs[n - 1];
                    if (std::isnan(g_edge) || std::isnan(g_first)) continue;
                    if ((g_edge < 0) != (g_first < 0) && std::isfinite(g_edge) && std::isfinite(g_first)) {
                        report.rejected.push_back(
                            {inner, detail::source_label(side, sp.location, sp.multiplicity),
                             "root within the support margin"});
                    }
                }
            }
        };
        solve_side('A', A);
        solve_side('B', B);
    }

    // merge coinciding roots
    std::sort(roots.begin(), roots.end(),
              [](const Root& a, const Root& b) { return a.position < b.position; });
    for (const auto& r : roots) {
        const std::string label = detail::source_label(r.side, r.spike.location, r.spike.multiplicity);
        if (!report.outliers.empty() &&
            detail::position_distance(kind, report.outliers.back().position, r.position) <
                1e-9 * (1.0 + std::abs(r.position))) {
            auto& o = report.outliers.back();
            if (std::find(o.sources.begin(), o.sources.end(), label) != o.sources.end()) continue;
            (r.side == 'A' ? o.k : o.ell) += r.spike.multiplicity;
            o.sources.push_back(label);
            o.degenerate = o.degenerate || r.degenerate;
            o.residual = std::max(o.residual, r.residual);
            continue;
        }
        OutlierRecord o;
        o.position = circle ? wrap_angle(r.position) : r.position;
        (r.side == 'A' ? o.k : o.ell) = r.spike.multiplicity;
        o.sources.push_back(label);
        o.degenerate = r.degenerate;
        o.residual = r.residual;
        report.outliers.push_back(o);
    }
    if (circle) {
        std::sort(report.outliers.begin(), report.outliers.end(),
                  [](const auto& a, const auto& b) { return a.position < b.position; });
    }

    for (auto& o : report.outliers) {
        double d = circle ? distance_to_components(kind, std::polar(1.0, o.position), comps)
                          : distance_to_components(ConvolutionKind::additive_real, o.position, comps);
        for (const auto& p : report.outliers) {
            if (&p != &o) d = std::min(d, detail::position_distance(kind, o.position, p.position));
        }
        o.epsilon = 0.5 * d;
        if (opts.compute_weights && !o.degenerate) {
            bool failed = false;
            auto [wa, wb] = overlap_weights(sol, o, report.K, &failed);
            o.weight_a = wa;
            o.weight_b = wb;
            o.weight_check_failed = failed;
        }
    }
    return report;
}

inline nlohmann::json to_json(const OutlierReport& r) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(r.kind));
    j["support"] = to_json(r.K);
    j["margin"] = r.margin;
    j["degenerate_bulk"] = r.degenerate_bulk;
    j["k_prime_points"] = r.k_prime_points();
    j["outliers"] = nlohmann::json::array();
    for (const auto& o : r.outliers) {
        nlohmann::json e;
        e["rho"] = o.position;
        e["k"] = o.k;
        e["ell"] = o.ell;
        e["sources"] = o.sources;
        e["weight_a"] = o.weight_a ? nlohmann::json(*o.weight_a) : nlohmann::json(nullptr);
        e["weight_b"] = o.weight_b ? nlohmann::json(*o.weight_b) : nlohmann::json(nullptr);
        e["degenerate"] = o.degenerate;
        e["weight_check_failed"] = o.weight_check_failed;
        e["epsilon"] = o.epsilon;
        e["residual"] = o.residual;
        j["outliers"].push_back(e);
    }
    j["rejected"] = nlohmann::json::array();
    for (const auto& x : r.rejected) {
        j["rejected"].push_back({{"position", x.position}, {"source", x.source}, {"reason", x.reason}});
    }
    return j;
}

inline void write_csv(std::ostream& os, const OutlierReport& r) {
    os << "rho,k,ell,weightA,weightB,sources\n";
    char buf[160];
    for (const auto& o : r.outliers) {
        std::string wa = o.weight_a ? std::to_string(*o.weight_a) : "NA";
        std::string wb = o.weight_b ? std::to_string(*o.weight_b) : "NA";
        if (o.weight_a) {
            std::snprintf(buf, sizeof buf, "%.15g", *o.weight_a);
            wa = buf;
        }
        if (o.weight_b) {
            std::snprintf(buf, sizeof buf, "%.15g", *o.weight_b);
            wb = buf;
        }
        std::string src;
        for (const auto& s : o.sources) src += (src.empty() ? "" : ";") + s;
        std::snprintf(buf, sizeof buf, "%.15g,%d,%d,", o.position, o.k, o.ell);
        os << buf << wa << "," << wb << "," << src << "\n";
    }
}

}  // namespace freeprob
