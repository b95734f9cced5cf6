#pragma once

#include <functional>

#include "artuda/tape.hpp"

namespace artuda::autodiff {

/// A scalar-valued function of one tensor, rebuilt on a fresh tape per call.
using ScalarFn = std::function<Var(Tape&, Var)>;

// Central-difference check of the reverse-mode gradient of f at x.
//
// Returns max_i |analytic_i - (f(x+h e_i) - f(x-h e_i)) / 2h| / max(1, |analytic_i|).
// The probe evaluations consult only forward values, never the backward pass,
// so this is an independent oracle for it. Throws NumericError if any probe
// evaluation is non-finite and ShapeError if f is not scalar.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h);

}  // namespace artuda::autodiff
