#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <vector>

namespace freeprob {

using cplx = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Neumaier-compensated accumulator for real sums.
class CompensatedSum {
public:
    void add(double x) noexcept {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const noexcept { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

class CompensatedComplexSum {
public:
    void add(cplx x) noexcept {
        re_.add(x.real());
        im_.add(x.imag());
    }
    cplx value() const noexcept { return {re_.value(), im_.value()}; }

private:
    CompensatedSum re_;
    CompensatedSum im_;
};

/// sqrt(w - a) * sqrt(w - b) with principal roots: the branch cut is the
/// segment [min(a,b), max(a,b)] and the product behaves like w at infinity.
inline cplx sqrt_product(cplx w, double a, double b) {
    return std::sqrt(w - a) * std::sqrt(w - b);
}

/// Wraps an angle to [0, 2pi).
inline double wrap_angle(double a) {
    double r = std::fmod(a, two_pi);
    if (r < 0) r += two_pi;
    if (r >= two_pi) r -= two_pi;
    return r;
}

/// Signed angular difference a - b in (-pi, pi].
inline double angle_difference(double a, double b) {
    double d = std::remainder(a - b, two_pi);
    if (d <= -pi) d += two_pi;
    return d;
}

/// Richardson tableau for samples f(h0 * r^{-k}) of a function analytic in h.
/// Returns the diagonal extrapolants; the last entry is the best estimate.
template <class T>
std::vector<T> richardson_diagonal(const std::vector<T>& samples, double ratio) {
    std::vector<std::vector<T>> table(samples.size());
    std::vector<T> diagonal;
    for (std::size_t k = 0; k < samples.size(); ++k) {
        table[k].push_back(samples[k]);
        double factor = 1.0;
        for (std::size_t j = 1; j <= k; ++j) {
            factor *= ratio;
            const T& fine = table[k][j - 1];
            const T& coarse = table[k - 1][j - 1];
            table[k].push_back(fine + (fine - coarse) / (factor - 1.0));
        }
        diagonal.push_back(table[k].back());
    }
    return diagonal;
}

/// Bisection on a bracket [lo, hi] with f(lo) f(hi) <= 0.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, double flo,
                     double tol, int max_iter = 200) {
    for (int i = 0; i < max_iter && hi - lo > tol; ++i) {
        const double mid = 0.5 * (lo + hi);
        const double fm = f(mid);
        if (fm == 0.0) return mid;
        if ((fm < 0) == (flo < 0)) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    return 0.5 * (lo + hi);
}

/// SplitMix64 step; used to derive independent per-trial seeds from a master seed.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace freeprob
