#pragma once

#include <cstddef>
#include <utility>

#include "xmamba/tensor.hpp"

namespace xmamba {

// ---------------------------------------------------------------------------
// Elementwise. Binary ops require equal shapes; the only broadcast allowed is
// scalar-with-tensor (numel()==1 against anything). Anything else throws
// ShapeMismatchError.
// ---------------------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

Tensor sigmoid(const Tensor& x);
Tensor softplus(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor exp(const Tensor& x);

// Scalar helpers shared with initialization code.
double sigmoid_scalar(double x);
double softplus_scalar(double x);
double inverse_softplus(double y);  // log(expm1(y))

// ---------------------------------------------------------------------------
// Linear algebra and sequence layout.
// ---------------------------------------------------------------------------

// a:[m,k] x b:[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// x:[R,C] + v:[C] added to every row.
Tensor add_rowvec(const Tensor& x, const Tensor& v);

// x:[R,C] * w:[C,D] + b:[D]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Per-last-axis normalization to zero mean / unit variance, then affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

// a:[L1,C] ++ b:[L2,C] -> [L1+L2,C]; a's rows first. L1 == 0 is allowed.
Tensor concat_tokens(const Tensor& a, const Tensor& b);

// Rows [begin, begin+count) of x.
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);

// Row i of x:[R,C] as a rank-1 [C] tensor.
Tensor select_row(const Tensor& x, std::size_t i);

// v:[C] -> [1,C]
Tensor as_row(const Tensor& v);

// Reverses along the first axis (rank >= 1).
Tensor reverse_rows(const Tensor& x);

// ---------------------------------------------------------------------------
// Reductions (row-major sequential accumulation, deterministic).
// ---------------------------------------------------------------------------
Tensor mean_all(const Tensor& x);  // rank-0 output; adjoint 1/N per element
Tensor sum_all(const Tensor& x);

// ---------------------------------------------------------------------------
// Structured ops.
// ---------------------------------------------------------------------------

// Depthwise causal conv: x:[L,E], w:[E,K], b:[E]; left zero padding of K-1.
Tensor conv1d_causal_depthwise(const Tensor& x, const Tensor& w, const Tensor& b);

// frames:[T,H,W,3] -> [T*(H/p)*(W/p), p*p*3], frame-major then raster order,
// patch features in (dy, dx, channel) raster order.
Tensor extract_patches(const Tensor& frames, std::size_t patch);

// Numerically stable -log softmax(logits)[label]; logits rank-1 [K] or [1,K].
Tensor cross_entropy_logits(const Tensor& logits, std::size_t label);

}  // namespace xmamba
