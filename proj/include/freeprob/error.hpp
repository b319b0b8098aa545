#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace freeprob {

enum class ErrorCode {
    invalid_weights,
    off_carrier_atom,
    negative_variance_family,
    evaluation_on_support,
    eta_undefined,
    zero_first_moment,
    carrier_mismatch,
    non_convergence,
    too_close_to_support,
    ladder_non_convergence,
    stencil_leaves_gap,
    inconsistent_extrapolation,
    point_mass_input,
    resolution_too_coarse,
    n_too_small,
    shape_mismatch,
    negativity_violation,
    non_unitary_input,
    window_overlap,
    z_in_spectrum,
    invalid_argument,
    config_error,
};

constexpr std::string_view to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_weights: return "invalid-weights";
        case ErrorCode::off_carrier_atom: return "off-carrier-atom";
        case ErrorCode::negative_variance_family: return "negative-variance-family";
        case ErrorCode::evaluation_on_support: return "evaluation-on-support";
        case ErrorCode::eta_undefined: return "eta-undefined";
        case ErrorCode::zero_first_moment: return "zero-first-moment";
        case ErrorCode::carrier_mismatch: return "carrier-mismatch";
        case ErrorCode::non_convergence: return "non-convergence";
        case ErrorCode::too_close_to_support: return "too-close-to-support";
        case ErrorCode::ladder_non_convergence: return "ladder-non-convergence";
        case ErrorCode::stencil_leaves_gap: return "stencil-leaves-gap";
        case ErrorCode::inconsistent_extrapolation: return "inconsistent-extrapolation";
        case ErrorCode::point_mass_input: return "point-mass-input";
        case ErrorCode::resolution_too_coarse: return "resolution-too-coarse";
        case ErrorCode::n_too_small: return "N-too-small";
        case ErrorCode::shape_mismatch: return "shape-mismatch";
        case ErrorCode::negativity_violation: return "negativity-violation";
        case ErrorCode::non_unitary_input: return "non-unitary-input";
        case ErrorCode::window_overlap: return "window-overlap";
        case ErrorCode::z_in_spectrum: return "z-in-spectrum";
        case ErrorCode::invalid_argument: return "invalid-argument";
        case ErrorCode::config_error: return "config-error";
    }
    return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Raised by the fixed-point solvers; keeps the last residual for diagnostics.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double last_residual, int iterations)
        : Error(ErrorCode::non_convergence, what),
          last_residual_(last_residual),
          iterations_(iterations) {}

    double last_residual() const noexcept { return last_residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double last_residual_;
    int iterations_;
};

}  // namespace freeprob
