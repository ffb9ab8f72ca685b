#pragma once

#include <functional>

#include "xmamba/tensor.hpp"

namespace xmamba {

// A deterministic scalar-valued function of one tensor argument.
using ScalarFn = std::function<Tensor(const Tensor&)>;

// Central-difference gradient check of f at x.
//
// Returns max over coordinates of
//   |analytic - central_difference| / (|analytic| + 1e-12).
//
// f is evaluated once with grad enabled to obtain the analytic gradient and
// 2*numel(x) times without grad for the probes. h must lie in (0, 1e-2].
// Throws NonFiniteProbeError if any probe evaluates non-finite.
double finite_diff_check(const ScalarFn& f, const Tensor& x, double h = 1e-5);

}  // namespace xmamba
