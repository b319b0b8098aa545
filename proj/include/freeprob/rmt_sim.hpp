#pragma once

// Monte Carlo sampling of the spiked models A + U*BU, A^{1/2}U*BUA^{1/2} and
// AU*BU with Haar U, measured against an OutlierReport.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>
#include <lapacke.h>

#include "freeprob/error.hpp"
#include "freeprob/measure.hpp"
#include "freeprob/numeric.hpp"
#include "freeprob/outliers.hpp"
#include "freeprob/subordination.hpp"

extern "C" void openblas_set_num_threads(int);

namespace freeprob {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Index = Eigen::Index;

namespace detail {

inline lapack_complex_double* lp(cplx* p) { return reinterpret_cast<lapack_complex_double*>(p); }

/// Threaded BLAS would make results depend on scheduling.
inline void single_threaded_blas() {
    static const bool once = [] {
        openblas_set_num_threads(1);
        return true;
    }();
    (void)once;
}

inline cplx complex_normal(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    const double re = n(rng);
    const double im = n(rng);
    return cplx(re, im) / std::sqrt(2.0);
}

}  // namespace detail

/// Haar unitary from the QR factorization of a complex Ginibre matrix, with
/// the phases of diag(R) moved into Q.
inline CMatrix haar_unitary(Index n, std::mt19937_64& rng) {
    if (n < 1) throw Error(ErrorCode::invalid_argument, "dimension must be positive");
    detail::single_threaded_blas();
    for (;;) {
        CMatrix q(n, n);
        for (Index j = 0; j < n; ++j) {
            for (Index i = 0; i < n; ++i) q(i, j) = detail::complex_normal(rng);
        }
        CVector tau(n);
        if (LAPACKE_zgeqrf(LAPACK_COL_MAJOR, n, n, detail::lp(q.data()), n, detail::lp(tau.data())) != 0) {
            continue;
        }
        CVector phase(n);
        bool degenerate = false;
        for (Index i = 0; i < n; ++i) {
            const double r = std::abs(q(i, i));
            if (r == 0.0) degenerate = true;
            phase(i) = degenerate ? cplx(1.0) : q(i, i) / r;
        }
        if (degenerate) continue;
        if (LAPACKE_zungqr(LAPACK_COL_MAJOR, n, n, n, detail::lp(q.data()), n, detail::lp(tau.data())) != 0) {
            continue;
        }
        return q * phase.asDiagonal();
    }
}

inline CMatrix haar_unitary(Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return haar_unitary(n, rng);
}

inline double unitarity_residual(const CMatrix& u) {
    return (u.adjoint() * u - CMatrix::Identity(u.rows(), u.cols())).cwiseAbs().maxCoeff();
}

/// How the bulk of a deterministic matrix is produced.
struct MatrixRecipe {
    enum class Source { quantile, explicit_values, gaussian_hermitian };
    Source source = Source::quantile;
    std::optional<Measure> measure;  // quantile source
    std::vector<double> values;      // explicit source (angles on the circle)
    double scale = 1.0;              // gaussian source
    bool circle = false;             // entries are angles mapped to the unit circle
    std::vector<Spike> spikes;

    static MatrixRecipe from_measure(const Measure& m, std::vector<Spike> spikes = {}) {
        MatrixRecipe r;
        r.source = Source::quantile;
        r.measure = m;
        r.circle = m.carrier() == Carrier::unit_circle;
        r.spikes = std::move(spikes);
        return r;
    }
    static MatrixRecipe gaussian(double scale, std::vector<Spike> spikes = {}) {
        MatrixRecipe r;
        r.source = Source::gaussian_hermitian;
        r.scale = scale;
        r.spikes = std::move(spikes);
        return r;
    }
    static MatrixRecipe explicit_diagonal(std::vector<double> values, std::vector<Spike> spikes = {},
                                          bool circle = false) {
        MatrixRecipe r;
        r.source = Source::explicit_values;
        r.values = std::move(values);
        r.circle = circle;
        r.spikes = std::move(spikes);
        return r;
    }

    int spike_count() const {
        int p = 0;
        for (const auto& s : spikes) p += s.multiplicity;
        return p;
    }
};

/// A deterministic matrix: diagonal, or a dense Hermitian block followed by
/// diagonal spikes. Spike eigenvectors are coordinate vectors.
struct Operand {
    CVector diagonal;  // used when `dense` is empty
    CMatrix dense;
    std::vector<Index> spike_indices;
    std::vector<double> spike_values;  // angles on the circle

    Index size() const { return dense.size() ? dense.rows() : diagonal.size(); }
    bool is_diagonal() const { return dense.size() == 0; }
    CMatrix to_dense() const {
        if (!is_diagonal()) return dense;
        return diagonal.asDiagonal();
    }
    /// Coordinates whose spike value equals v.
    std::vector<Index> spike_coordinates(double v) const {
        std::vector<Index> out;
        for (std::size_t i = 0; i < spike_indices.size(); ++i) {
            // labels carry 12 significant digits
            if (std::abs(spike_values[i] - v) <= 1e-10 * (1.0 + std::abs(v))) out.push_back(spike_indices[i]);
        }
        return out;
    }
};

inline Operand build_diagonal(const MatrixRecipe& recipe, Index n, std::mt19937_64& rng) {
    const int p = recipe.spike_count();
    if (n < p || n - p < 1) {
        throw Error(ErrorCode::n_too_small, "N = " + std::to_string(n) + " with " +
                                                std::to_string(p) + " spikes");
    }
    const Index m = n - p;
    auto entry = [&](double v) { return recipe.circle ? std::polar(1.0, v) : cplx(v, 0.0); };
    Operand op;
    switch (recipe.source) {
        case MatrixRecipe::Source::quantile: {
            if (!recipe.measure) throw Error(ErrorCode::config_error, "quantile recipe without measure");
            op.diagonal.resize(n);
            for (Index i = 0; i < m; ++i) {
                const double u = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
                op.diagonal(i) = entry(recipe.measure->quantile(u));
            }
            break;
        }
        case MatrixRecipe::Source::explicit_values: {
            if (static_cast<Index>(recipe.values.size()) != m) {
                throw Error(ErrorCode::shape_mismatch, "explicit bulk has " +
                                                           std::to_string(recipe.values.size()) +
                                                           " values, expected " + std::to_string(m));
            }
            op.diagonal.resize(n);
            for (Index i = 0; i < m; ++i) op.diagonal(i) = entry(recipe.values[i]);
            break;
        }
        case MatrixRecipe::Source::gaussian_hermitian: {
            std::normal_distribution<double> normal(0.0, 1.0);
            op.dense = CMatrix::Zero(n, n);
            for (Index j = 0; j < m; ++j) {
                op.dense(j, j) = normal(rng) * recipe.scale;
                for (Index i = 0; i < j; ++i) {
                    const cplx g = detail::complex_normal(rng) * recipe.scale;
                    op.dense(i, j) = g;
                    op.dense(j, i) = std::conj(g);
                }
            }
            break;
        }
    }
    Index at = m;
    for (const auto& s : recipe.spikes) {
        for (int k = 0; k < s.multiplicity; ++k, ++at) {
            if (op.is_diagonal()) {
                op.diagonal(at) = entry(s.location);
            } else {
                op.dense(at, at) = entry(s.location);
            }
            op.spike_indices.push_back(at);
            op.spike_values.push_back(s.location);
        }
    }
    return op;
}

inline Operand build_diagonal(const MatrixRecipe& recipe, Index n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return build_diagonal(recipe, n, rng);
}

namespace detail {

struct HermitianEigen {
    Eigen::VectorXd values;  // ascending
    CMatrix vectors;
};

inline HermitianEigen hermitian_eigen(CMatrix h, bool vectors = true) {
    single_threaded_blas();
    const Index n = h.rows();
    HermitianEigen out;
    out.values.resize(n);
    if (vectors) out.vectors.resize(n, n);
    Eigen::VectorXi support(2 * n);
    lapack_int found = 0;
    CMatrix dummy(1, 1);
    const int info = LAPACKE_zheevr(LAPACK_COL_MAJOR, vectors ? 'V' : 'N', 'A', 'U', n,
                                    lp(h.data()), n, 0.0, 0.0, 0, 0, 0.0, &found,
                                    out.values.data(), lp(vectors ? out.vectors.data() : dummy.data()),
                                    n, support.data());
    if (info != 0 || found != n) {
        throw Error(ErrorCode::non_convergence, "Hermitian eigensolver failed, info " + std::to_string(info));
    }
    return out;
}

inline CMatrix hermitian_sqrt(const Operand& a) {
    if (a.is_diagonal()) {
        CVector s(a.size());
        for (Index i = 0; i < a.size(); ++i) {
            const cplx v = a.diagonal(i);
            if (v.real() < -1e-12 || std::abs(v.imag()) > 1e-12) {
                throw Error(ErrorCode::negativity_violation, "diagonal entry " + std::to_string(v.real()));
            }
            s(i) = std::sqrt(std::max(v.real(), 0.0));
        }
        return s.asDiagonal();
    }
    const auto e = hermitian_eigen(a.dense);
    if (e.values.minCoeff() < -1e-12 * (1.0 + e.values.cwiseAbs().maxCoeff())) {
        throw Error(ErrorCode::negativity_violation, "operand is not positive semidefinite");
    }
    const Eigen::VectorXd r = e.values.cwiseMax(0.0).cwiseSqrt();
    return e.vectors * r.cast<cplx>().asDiagonal() * e.vectors.adjoint();
}

inline void check_unitary(const Operand& a) {
    const double res = a.is_diagonal()
                           ? (a.diagonal.cwiseAbs().array() - 1.0).abs().maxCoeff()
                           : unitarity_residual(a.dense);
    if (!(res < 1e-10)) throw Error(ErrorCode::non_unitary_input, "residual " + std::to_string(res));
}

/// U* B U using the structure of B.
inline CMatrix conjugate(const Operand& b, const CMatrix& u) {
    if (b.is_diagonal()) return u.adjoint() * (b.diagonal.asDiagonal() * u);
    return u.adjoint() * (b.dense * u);
}

}  // namespace detail

/// Model matrix X for the given kind.
inline CMatrix assemble(ConvolutionKind kind, const Operand& a, const Operand& b, const CMatrix& u) {
    const Index n = a.size();
    if (b.size() != n || u.rows() != n || u.cols() != n) {
        throw Error(ErrorCode::shape_mismatch, "operands and unitary differ in size");
    }
    detail::single_threaded_blas();
    switch (kind) {
        case ConvolutionKind::additive_real: {
            CMatrix x = detail::conjugate(b, u);
            if (a.is_diagonal()) {
                x.diagonal() += a.diagonal;
            } else {
                x += a.dense;
            }
            return 0.5 * (x + x.adjoint());
        }
        case ConvolutionKind::multiplicative_positive: {
            detail::hermitian_sqrt(b);  // checks B >= 0
            const CMatrix s = detail::hermitian_sqrt(a);
            CMatrix x;
            if (a.is_diagonal()) {
                const CVector d = s.diagonal();
                x = d.asDiagonal() * detail::conjugate(b, u) * d.asDiagonal();
            } else {
                x = s * detail::conjugate(b, u) * s;
            }
            return 0.5 * (x + x.adjoint());
        }
        case ConvolutionKind::multiplicative_circle: {
            detail::check_unitary(a);
            detail::check_unitary(b);
            const CMatrix c = detail::conjugate(b, u);
            if (a.is_diagonal()) return a.diagonal.asDiagonal() * c;
            return a.dense * c;
        }
    }
    return {};
}

/// Eigenvalues (ascending; by angle in [0, 2pi) on the circle) and eigenvectors.
struct Spectrum {
    std::vector<cplx> values;
    CMatrix vectors;
};

/// Eigen-decomposition of a Hermitian model matrix.
inline Spectrum hermitian_spectrum(const CMatrix& x, bool vectors = true) {
    auto e = detail::hermitian_eigen(x, vectors);
    Spectrum s;
    s.values.resize(e.values.size());
    for (Index i = 0; i < e.values.size(); ++i) s.values[i] = e.values(i);
    s.vectors = std::move(e.vectors);
    return s;
}

/// Eigen-decomposition of a unitary matrix through the Cayley transform
/// H = i(I - Y)(I + Y)^{-1}, Y = conj(c) X, which is Hermitian with the same
/// eigenvectors; -c must lie in a spectral gap of X.
inline Spectrum unitary_spectrum(const CMatrix& x, double gap_angle) {
    detail::single_threaded_blas();
    const Index n = x.rows();
    const cplx c = -std::polar(1.0, gap_angle);
    const CMatrix y = std::conj(c) * x;
    const CMatrix id = CMatrix::Identity(n, n);
    // H^* = H; solve (I + Y)^T H^T = (i (I - Y))^T via H = i (I+Y)^{-1} (I-Y) since they commute
    CMatrix h = (id + y).partialPivLu().solve(cplx(0.0, 1.0) * (id - y));
    h = 0.5 * (h + h.adjoint()).eval();
    auto e = detail::hermitian_eigen(h, true);
    Spectrum s;
    std::vector<std::pair<double, Index>> order;
    std::vector<cplx> lambdas(n);
    for (Index i = 0; i < n; ++i) {
        // y = (1 + i h)/(1 - i h) inverts h = i(1 - y)/(1 + y)
        const cplx ih(0.0, e.values(i));
        lambdas[i] = c * (1.0 + ih) / (1.0 - ih);
        order.push_back({wrap_angle(std::arg(lambdas[i])), i});
    }
    std::sort(order.begin(), order.end());
    s.vectors.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        s.values.push_back(lambdas[order[k].second]);
        s.vectors.col(k) = e.vectors.col(order[k].second);
    }
    return s;
}

/// Angle in the middle of the widest gap between the components of K and
/// the predicted outliers.
inline double widest_gap_angle(const OutlierReport& report) {
    std::vector<Interval> blocks = report.K.components;
    for (const auto& o : report.outliers) blocks.push_back({o.position, o.position});
    if (blocks.empty()) return pi;
    std::sort(blocks.begin(), blocks.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
    double best = -1.0, angle = pi;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        const double start = blocks[i].hi;
        const double end = i + 1 < blocks.size() ? blocks[i + 1].lo : blocks[0].lo + two_pi;
        if (end - start > best) {
            best = end - start;
            angle = wrap_angle(0.5 * (start + end));
        }
    }
    return angle;
}

/// A window around a predicted outlier; positions are angles on the circle.
struct Window {
    double center = 0.0;
    double epsilon = 0.0;
    int expected = 0;
    std::vector<double> a_spikes;  // spike values of A mapped here
    std::vector<double> b_spikes;
    std::optional<double> weight_a, weight_b;
};

inline double spectral_distance(ConvolutionKind kind, cplx lambda, double position) {
    if (kind == ConvolutionKind::multiplicative_circle) {
        return std::abs(angle_difference(std::arg(lambda), position));
    }
    return std::abs(lambda.real() - position);
}

inline double distance_to_support(ConvolutionKind kind, cplx lambda, const std::vector<Interval>& comps) {
    if (kind == ConvolutionKind::multiplicative_circle) {
        return distance_to_components(kind, lambda / std::abs(lambda), comps);
    }
    return distance_to_components(ConvolutionKind::additive_real, lambda.real(), comps);
}

namespace detail {

inline double parse_spike_label(const std::string& s, char& side) {
    side = s.at(0);
    const auto colon = s.find(':');
    const auto x = s.find('x', colon);
    return std::stod(s.substr(colon + 1, x == std::string::npos ? std::string::npos : x - colon - 1));
}

}  // namespace detail

/// Windows from a report, with optional per-window epsilon overrides; checks
/// that they are disjoint from each other and from K_epsilon.
inline std::vector<Window> windows_from_report(const OutlierReport& report,
                                               const std::vector<std::optional<double>>& overrides = {}) {
    std::vector<Window> out;
    for (std::size_t i = 0; i < report.outliers.size(); ++i) {
        const auto& o = report.outliers[i];
        Window w;
        w.center = o.position;
        w.epsilon = i < overrides.size() && overrides[i] ? *overrides[i] : o.epsilon;
        w.expected = o.k + o.ell;
        w.weight_a = o.weight_a;
        w.weight_b = o.weight_b;
        for (const auto& s : o.sources) {
            char side;
            const double v = detail::parse_spike_label(s, side);
            (side == 'A' ? w.a_spikes : w.b_spikes).push_back(v);
        }
        if (!(w.epsilon > 0)) throw Error(ErrorCode::window_overlap, "window has no width");
        out.push_back(w);
    }
    const auto kind = report.kind;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const cplx c = kind == ConvolutionKind::multiplicative_circle ? std::polar(1.0, out[i].center)
                                                                       : cplx(out[i].center, 0.0);
        if (!report.degenerate_bulk &&
            distance_to_support(kind, c, report.K.components) < 2.0 * out[i].epsilon * (1.0 - 1e-9)) {
            throw Error(ErrorCode::window_overlap, "window meets K_epsilon");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (spectral_distance(kind, c, out[j].center) < out[i].epsilon + out[j].epsilon) {
                throw Error(ErrorCode::window_overlap, "windows overlap");
            }
        }
    }
    return out;
}

struct WindowMeasurement {
    int count = 0;
    std::vector<cplx> values;
    double overlap_a = 0.0;  // ||P E_X(W) P||
    double overlap_b = 0.0;  // same on the B side
    /// ||E_A({theta}) xi||^2 per eigenvector when only one side contributes.
    std::vector<double> vector_overlaps_a;
    std::vector<double> vector_overlaps_b;
    /// Trace of P E_X(W) P: the orthonormal-basis sum.
    double basis_sum_a = 0.0;
};

struct TrialRecord {
    std::size_t trial = 0;
    std::uint64_t seed = 0;
    std::vector<cplx> eigenvalues;
    std::vector<WindowMeasurement> windows;
    std::vector<cplx> detected;          // eigenvalues farther than the outlier distance from K
    std::vector<int> detected_window;    // window containing each detected value, or -1
    double max_modulus_defect = 0.0;     // circle model: max ||lambda| - 1|
};

namespace detail {

/// Largest eigenvalue of M M^* for the rows `rows` of `v`, and the per-column squared norms.
inline std::pair<double, std::vector<double>> compressed_norm(const CMatrix& v, const std::vector<Index>& rows) {
    std::vector<double> per_column(v.cols(), 0.0);
    if (rows.empty() || v.cols() == 0) return {0.0, per_column};
    CMatrix m(rows.size(), v.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) m.row(r) = v.row(rows[r]);
    for (Index c = 0; c < v.cols(); ++c) per_column[c] = m.col(c).squaredNorm();
    const CMatrix g = m * m.adjoint();
    Eigen::SelfAdjointEigenSolver<CMatrix> es(g, Eigen::EigenvaluesOnly);
    return {es.eigenvalues().maxCoeff(), per_column};
}

inline std::vector<Index> coordinates_for(const Operand& op, const std::vector<double>& values) {
    std::vector<Index> out;
    for (double v : values) {
        const auto c = op.spike_coordinates(v);
        out.insert(out.end(), c.begin(), c.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

/// Counts and overlaps of one sampled matrix in every window.
inline TrialRecord measure_trial(ConvolutionKind kind, const Spectrum& spec, const std::vector<Window>& windows,
                                 const std::vector<Interval>& K, const Operand& a, const Operand& b,
                                 const CMatrix& u, double outlier_distance) {
    TrialRecord rec;
    rec.eigenvalues = spec.values;
    const Index n = static_cast<Index>(spec.values.size());
    if (kind == ConvolutionKind::multiplicative_circle) {
        for (const auto& l : spec.values) {
            rec.max_modulus_defect = std::max(rec.max_modulus_defect, std::abs(std::abs(l) - 1.0));
        }
    }
    for (const auto& l : spec.values) {
        if (distance_to_support(kind, l, K) > outlier_distance) {
            rec.detected.push_back(l);
            int where = -1;
            for (std::size_t w = 0; w < windows.size(); ++w) {
                if (spectral_distance(kind, l, windows[w].center) < windows[w].epsilon) where = static_cast<int>(w);
            }
            rec.detected_window.push_back(where);
        }
    }
    for (const auto& w : windows) {
        WindowMeasurement m;
        std::vector<Index> cols;
        for (Index i = 0; i < n; ++i) {
            if (spectral_distance(kind, spec.values[i], w.center) < w.epsilon) {
                cols.push_back(i);
                m.values.push_back(spec.values[i]);
            }
        }
        m.count = static_cast<int>(cols.size());
        if (!cols.empty() && spec.vectors.size()) {
            CMatrix v(n, cols.size());
            for (std::size_t c = 0; c < cols.size(); ++c) v.col(c) = spec.vectors.col(cols[c]);
            const auto rows_a = detail::coordinates_for(a, w.a_spikes);
            auto [na, pa] = detail::compressed_norm(v, rows_a);
            m.overlap_a = na;
            for (double x : pa) m.basis_sum_a += x;
            // B side: eigenvectors of the role-swapped model
            CMatrix vb;
            switch (kind) {
                case ConvolutionKind::additive_real: vb = u * v; break;
                case ConvolutionKind::multiplicative_positive: {
                    const CMatrix sa = detail::hermitian_sqrt(a);
                    const CMatrix sb = detail::hermitian_sqrt(b);
                    vb = sb * (u * (sa * v));
                    for (Index c = 0; c < vb.cols(); ++c) {
                        const double nrm = vb.col(c).norm();
                        if (nrm > 0) vb.col(c) /= nrm;
                    }
                    break;
                }
                case ConvolutionKind::multiplicative_circle: vb = u * (a.to_dense().adjoint() * v); break;
            }
            const auto rows_b = detail::coordinates_for(b, w.b_spikes);
            auto [nb, pb] = detail::compressed_norm(vb, rows_b);
            m.overlap_b = nb;
            if (w.a_spikes.empty() || w.b_spikes.empty()) {
                m.vector_overlaps_a = pa;
                m.vector_overlaps_b = pb;
            }
        }
        rec.windows.push_back(std::move(m));
    }
    return rec;
}

/// F_N(z) = I_p - P (z - X')^{-1} P^* Theta for the additive model, where X'
/// replaces the spikes of A by a value alpha from the bulk support.
class DeterminantReduction {
public:
    DeterminantReduction(const Operand& a, const Operand& b, const CMatrix& u, double alpha) {
        if (!a.is_diagonal()) throw Error(ErrorCode::invalid_argument, "A must be diagonal");
        const Index n = a.size();
        const Index p = static_cast<Index>(a.spike_indices.size());
        CMatrix xp = detail::conjugate(b, u);
        CVector ad = a.diagonal;
        theta_ = Eigen::VectorXd(p);
        for (Index i = 0; i < p; ++i) {
            const Index at = a.spike_indices[i];
            theta_(i) = ad(at).real() - alpha;
            ad(at) = alpha;
        }
        xp.diagonal() += ad;
        xp = 0.5 * (xp + xp.adjoint()).eval();
        auto e = detail::hermitian_eigen(xp, true);
        lambdas_ = e.values;
        w_ = CMatrix(p, n);
        for (Index i = 0; i < p; ++i) w_.row(i) = e.vectors.row(a.spike_indices[i]);
        scale_ = 1.0 + lambdas_.cwiseAbs().maxCoeff();
    }

    Index p() const { return theta_.size(); }
    const Eigen::VectorXd& spike_free_spectrum() const { return lambdas_; }

    CMatrix operator()(cplx z) const {
        const Index p = theta_.size();
        const Index n = lambdas_.size();
        Eigen::VectorXcd r(n);
        for (Index k = 0; k < n; ++k) {
            const cplx d = z - lambdas_(k);
            if (std::abs(d) < 1e-13 * scale_) throw Error(ErrorCode::z_in_spectrum, "z is an eigenvalue of X'");
            r(k) = 1.0 / d;
        }
        CMatrix f = CMatrix::Identity(p, p) - w_ * r.asDiagonal() * w_.adjoint() * theta_.cast<cplx>().asDiagonal();
        return f;
    }

    /// det F_N(x), real for real x.
    double determinant(double x) const {
        if (theta_.size() == 0) return 1.0;
        return (*this)(cplx(x, 0.0)).determinant().real();
    }

    /// Zero of det F_N between lo and hi by bisection.
    double root(double lo, double hi, double tol = 1e-13) const {
        auto f = [&](double x) { return determinant(x); };
        const double flo = f(lo);
        if ((flo < 0) == (f(hi) < 0)) throw Error(ErrorCode::invalid_argument, "no sign change");
        return bisect(f, lo, hi, flo, tol, 400);
    }

private:
    Eigen::VectorXd theta_;
    Eigen::VectorXd lambdas_;
    CMatrix w_;
    double scale_ = 1.0;
};

struct SimulationConfig {
    ConvolutionKind kind = ConvolutionKind::additive_real;
    MatrixRecipe a, b;
    Index n = 1000;
    int trials = 1;
    std::uint64_t master_seed = 0;
    std::vector<std::optional<double>> epsilon_overrides;
    double outlier_distance = 0.1;
    bool keep_eigenvalues = true;
};

/// Seed of trial k: SplitMix64 applied to master + k times the golden-ratio increment.
inline std::uint64_t trial_seed(std::uint64_t master, std::size_t k) {
    return splitmix64(master + static_cast<std::uint64_t>(k) * 0x9E3779B97F4A7C15ULL);
}

struct WindowSummary {
    Window window;
    double mean_count = 0.0;
    double fraction_exact_count = 0.0;
    double mean_overlap_a = 0.0, sd_overlap_a = 0.0;
    double mean_overlap_b = 0.0, sd_overlap_b = 0.0;
    double mean_location_delta = 0.0;  // mean |lambda - rho| over eigenvalues in the window
    double max_location_delta = 0.0;
};

struct SimulationResult {
    ConvolutionKind kind = ConvolutionKind::additive_real;
    Index n = 0;
    std::uint64_t master_seed = 0;
    std::vector<Interval> K;
    std::vector<Window> windows;
    std::vector<TrialRecord> trials;
    std::vector<WindowSummary> summaries;
    /// Trials whose detected outliers sit one per expected count in the windows.
    double fraction_trials_matching = 0.0;
    double max_modulus_defect = 0.0;
};

/// Samples, solves and measures one trial.
inline TrialRecord run_trial(const SimulationConfig& cfg, const OutlierReport& report,
                             const std::vector<Window>& windows, std::size_t k) {
    const std::uint64_t seed = trial_seed(cfg.master_seed, k);
    std::mt19937_64 rng(seed);
    const Operand a = build_diagonal(cfg.a, cfg.n, rng);
    const Operand b = build_diagonal(cfg.b, cfg.n, rng);
    const CMatrix u = haar_unitary(cfg.n, rng);
    const CMatrix x = assemble(cfg.kind, a, b, u);
    const Spectrum spec = cfg.kind == ConvolutionKind::multiplicative_circle
                              ? unitary_spectrum(x, widest_gap_angle(report))
                              : hermitian_spectrum(x, true);
    TrialRecord rec = measure_trial(cfg.kind, spec, windows, report.K.components, a, b, u, cfg.outlier_distance);
    rec.trial = k;
    rec.seed = seed;
    if (!cfg.keep_eigenvalues) rec.eigenvalues.clear();
    return rec;
}

inline SimulationResult run_monte_carlo(const SimulationConfig& cfg, const OutlierReport& report) {
    if (cfg.trials < 1) throw Error(ErrorCode::config_error, "trials must be at least 1");
    SimulationResult res;
    res.kind = cfg.kind;
    res.n = cfg.n;
    res.master_seed = cfg.master_seed;
    res.K = report.K.components;
    res.windows = windows_from_report(report, cfg.epsilon_overrides);
    for (int k = 0; k < cfg.trials; ++k) {
        res.trials.push_back(run_trial(cfg, report, res.windows, static_cast<std::size_t>(k)));
    }
    int matching = 0;
    for (const auto& t : res.trials) {
        res.max_modulus_defect = std::max(res.max_modulus_defect, t.max_modulus_defect);
        bool ok = true;
        std::vector<int> per_window(res.windows.size(), 0);
        for (int w : t.detected_window) {
            if (w < 0) {
                ok = false;
            } else {
                ++per_window[w];
            }
        }
        for (std::size_t w = 0; w < res.windows.size(); ++w) {
            if (t.windows[w].count != res.windows[w].expected) ok = false;
        }
        matching += ok ? 1 : 0;
    }
    res.fraction_trials_matching = static_cast<double>(matching) / cfg.trials;
    for (std::size_t w = 0; w < res.windows.size(); ++w) {
        WindowSummary s;
        s.window = res.windows[w];
        double sa = 0, sa2 = 0, sb = 0, sb2 = 0, deltas = 0;
        int exact = 0, nvalues = 0;
        for (const auto& t : res.trials) {
            const auto& m = t.windows[w];
            s.mean_count += m.count;
            exact += m.count == s.window.expected ? 1 : 0;
            sa += m.overlap_a;
            sa2 += m.overlap_a * m.overlap_a;
            sb += m.overlap_b;
            sb2 += m.overlap_b * m.overlap_b;
            for (const auto& l : m.values) {
                const double d = spectral_distance(cfg.kind, l, s.window.center);
                deltas += d;
                ++nvalues;
                s.max_location_delta = std::max(s.max_location_delta, d);
            }
        }
        const double t = cfg.trials;
        s.mean_count /= t;
        s.fraction_exact_count = exact / t;
        s.mean_overlap_a = sa / t;
        s.mean_overlap_b = sb / t;
        s.sd_overlap_a = std::sqrt(std::max(0.0, sa2 / t - s.mean_overlap_a * s.mean_overlap_a));
        s.sd_overlap_b = std::sqrt(std::max(0.0, sb2 / t - s.mean_overlap_b * s.mean_overlap_b));
        s.mean_location_delta = nvalues ? deltas / nvalues : 0.0;
        res.summaries.push_back(s);
    }
    return res;
}

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Real eigenvalues print as numbers, circle eigenvalues as their angle.
inline std::string fmt_eigen(ConvolutionKind kind, cplx v) {
    return kind == ConvolutionKind::multiplicative_circle ? fmt(wrap_angle(std::arg(v))) : fmt(v.real());
}

}  // namespace detail

inline void write_spectra_csv(std::ostream& os, const SimulationResult& r) {
    os << "trial,rank,eigenvalue\n";
    for (const auto& t : r.trials) {
        for (std::size_t i = 0; i < t.eigenvalues.size(); ++i) {
            os << t.trial << "," << i << "," << detail::fmt_eigen(r.kind, t.eigenvalues[i]) << "\n";
        }
    }
}

inline void write_outliers_csv(std::ostream& os, const SimulationResult& r) {
    os << "trial,window,count,values\n";
    for (const auto& t : r.trials) {
        for (std::size_t w = 0; w < t.windows.size(); ++w) {
            os << t.trial << "," << w << "," << t.windows[w].count << ",";
            for (std::size_t i = 0; i < t.windows[w].values.size(); ++i) {
                os << (i ? ";" : "") << detail::fmt_eigen(r.kind, t.windows[w].values[i]);
            }
            os << "\n";
        }
        for (std::size_t i = 0; i < t.detected.size(); ++i) {
            if (t.detected_window[i] < 0) {
                os << t.trial << ",-1,1," << detail::fmt_eigen(r.kind, t.detected[i]) << "\n";
            }
        }
    }
}

inline void write_overlaps_csv(std::ostream& os, const SimulationResult& r) {
    os << "trial,window,overlapA,overlapB\n";
    for (const auto& t : r.trials) {
        for (std::size_t w = 0; w < t.windows.size(); ++w) {
            os << t.trial << "," << w << "," << detail::fmt(t.windows[w].overlap_a) << ","
               << detail::fmt(t.windows[w].overlap_b) << "\n";
        }
    }
}

/// Histogram of all eigenvalues over all trials, with the predicted outliers
/// as marker rows.
inline void write_histogram_csv(std::ostream& os, const SimulationResult& r, int bins = 200) {
    std::vector<double> xs;
    for (const auto& t : r.trials) {
        for (const auto& v : t.eigenvalues) {
            xs.push_back(r.kind == ConvolutionKind::multiplicative_circle ? wrap_angle(std::arg(v)) : v.real());
        }
    }
    os << "kind,lo,hi,count,density\n";
    if (!xs.empty()) {
        double lo = *std::min_element(xs.begin(), xs.end());
        double hi = *std::max_element(xs.begin(), xs.end());
        if (r.kind == ConvolutionKind::multiplicative_circle) {
            lo = 0.0;
            hi = two_pi;
        }
        if (hi <= lo) hi = lo + 1.0;
        const double h = (hi - lo) / bins;
        std::vector<long> counts(bins, 0);
        for (double x : xs) {
            const int i = std::clamp(static_cast<int>((x - lo) / h), 0, bins - 1);
            ++counts[i];
        }
        for (int i = 0; i < bins; ++i) {
            os << "bin," << detail::fmt(lo + i * h) << "," << detail::fmt(lo + (i + 1) * h) << "," << counts[i]
               << "," << detail::fmt(counts[i] / (h * xs.size())) << "\n";
        }
    }
    for (const auto& w : r.windows) {
        os << "predicted," << detail::fmt(w.center - w.epsilon) << "," << detail::fmt(w.center + w.epsilon) << ","
           << w.expected << "," << detail::fmt(w.center) << "\n";
    }
}

inline nlohmann::json to_json(const SimulationResult& r) {
    nlohmann::json j;
    j["kind"] = std::string(to_string(r.kind));
    j["N"] = r.n;
    j["master_seed"] = r.master_seed;
    j["trials"] = r.trials.size();
    j["fraction_trials_matching"] = r.fraction_trials_matching;
    j["max_modulus_defect"] = r.max_modulus_defect;
    j["windows"] = nlohmann::json::array();
    for (const auto& s : r.summaries) {
        nlohmann::json w;
        w["center"] = s.window.center;
        w["epsilon"] = s.window.epsilon;
        w["expected_count"] = s.window.expected;
        w["mean_count"] = s.mean_count;
        w["fraction_exact_count"] = s.fraction_exact_count;
        w["predicted_weight_a"] = s.window.weight_a ? nlohmann::json(*s.window.weight_a) : nlohmann::json(nullptr);
        w["predicted_weight_b"] = s.window.weight_b ? nlohmann::json(*s.window.weight_b) : nlohmann::json(nullptr);
        w["mean_overlap_a"] = s.mean_overlap_a;
        w["sd_overlap_a"] = s.sd_overlap_a;
        w["mean_overlap_b"] = s.mean_overlap_b;
        w["sd_overlap_b"] = s.sd_overlap_b;
        w["delta_overlap_a"] = s.window.weight_a ? nlohmann::json(std::abs(s.mean_overlap_a - *s.window.weight_a))
                                                 : nlohmann::json(nullptr);
        w["delta_overlap_b"] = s.window.weight_b ? nlohmann::json(std::abs(s.mean_overlap_b - *s.window.weight_b))
                                                 : nlohmann::json(nullptr);
        w["mean_location_delta"] = s.mean_location_delta;
        w["max_location_delta"] = s.max_location_delta;
        j["windows"].push_back(w);
    }
    j["per_trial"] = nlohmann::json::array();
    for (const auto& t : r.trials) {
        nlohmann::json e;
        e["trial"] = t.trial;
        e["seed"] = t.seed;
        e["detected_outliers"] = t.detected.size();
        e["unassigned_outliers"] = std::count(t.detected_window.begin(), t.detected_window.end(), -1);
        j["per_trial"].push_back(e);
    }
    return j;
}

}  // namespace freeprob
