#include "xmamba/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <memory>

namespace xmamba {

namespace {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<MatRM>;
using MapConstMat = Eigen::Map<const MatRM>;

void require(bool cond, const char* op, const std::string& detail) {
  if (!cond) throw ShapeMismatchError(std::string(op) + ": " + detail);
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

enum class Broadcast { None, ScalarLeft, ScalarRight };

Broadcast binary_mode(const Tensor& a, const Tensor& b, const char* op) {
  if (same_shape(a, b)) return Broadcast::None;
  if (a.numel() == 1) return Broadcast::ScalarLeft;
  if (b.numel() == 1) return Broadcast::ScalarRight;
  throw ShapeMismatchError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                           " and " + shape_str(b.shape()) +
                           " (only scalar-with-tensor broadcast is supported)");
}

double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_scalar(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double inverse_softplus(double y) { return std::log(std::expm1(y)); }

// ---------------------------------------------------------------------------
// Elementwise binary
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const Broadcast mode = binary_mode(a, b, "add");
  const Tensor& big = (mode == Broadcast::ScalarLeft) ? b : a;
  std::vector<double> out(big.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  switch (mode) {
    case Broadcast::None:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
      break;
    case Broadcast::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[0] + bd[i];
      break;
    case Broadcast::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[0];
      break;
  }
  return detail::make_op(big.shape(), std::move(out), "add", {a, b},
                         [mode](detail::Node& self) {
                           auto push = [&](detail::Node& p, bool scalar_side) {
                             if (!p.requires_grad) return;
                             p.ensure_grad();
                             if (scalar_side) {
                               p.grad[0] += sum_of(self.grad);
                             } else {
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 p.grad[i] += self.grad[i];
                             }
                           };
                           push(*self.parents[0], mode == Broadcast::ScalarLeft);
                           push(*self.parents[1], mode == Broadcast::ScalarRight);
                         });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const Broadcast mode = binary_mode(a, b, "sub");
  const Tensor& big = (mode == Broadcast::ScalarLeft) ? b : a;
  std::vector<double> out(big.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  switch (mode) {
    case Broadcast::None:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
      break;
    case Broadcast::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[0] - bd[i];
      break;
    case Broadcast::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[0];
      break;
  }
  return detail::make_op(big.shape(), std::move(out), "sub", {a, b},
                         [mode](detail::Node& self) {
                           detail::Node& pa = *self.parents[0];
                           detail::Node& pb = *self.parents[1];
                           if (pa.requires_grad) {
                             pa.ensure_grad();
                             if (mode == Broadcast::ScalarLeft) {
                               pa.grad[0] += sum_of(self.grad);
                             } else {
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 pa.grad[i] += self.grad[i];
                             }
                           }
                           if (pb.requires_grad) {
                             pb.ensure_grad();
                             if (mode == Broadcast::ScalarRight) {
                               pb.grad[0] -= sum_of(self.grad);
                             } else {
                               for (std::size_t i = 0; i < self.grad.size(); ++i)
                                 pb.grad[i] -= self.grad[i];
                             }
                           }
                         });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const Broadcast mode = binary_mode(a, b, "mul");
  const Tensor& big = (mode == Broadcast::ScalarLeft) ? b : a;
  std::vector<double> out(big.numel());
  const auto ad = a.data();
  const auto bd = b.data();
  switch (mode) {
    case Broadcast::None:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
      break;
    case Broadcast::ScalarLeft:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[0] * bd[i];
      break;
    case Broadcast::ScalarRight:
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[0];
      break;
  }
  return detail::make_op(
      big.shape(), std::move(out), "mul", {a, b}, [mode](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        const auto& av = pa.data;
        const auto& bv = pb.data;
        if (pa.requires_grad) {
          pa.ensure_grad();
          if (mode == Broadcast::ScalarLeft) {
            double s = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) s += self.grad[i] * bv[i];
            pa.grad[0] += s;
          } else if (mode == Broadcast::ScalarRight) {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
              pa.grad[i] += self.grad[i] * bv[0];
          } else {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
              pa.grad[i] += self.grad[i] * bv[i];
          }
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          if (mode == Broadcast::ScalarRight) {
            double s = 0.0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) s += self.grad[i] * av[i];
            pb.grad[0] += s;
          } else if (mode == Broadcast::ScalarLeft) {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
              pb.grad[i] += self.grad[i] * av[0];
          } else {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
              pb.grad[i] += self.grad[i] * av[i];
          }
        }
      });
}

Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.numel());
  const auto ad = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * ad[i];
  return detail::make_op(a.shape(), std::move(out), "scale", {a},
                         [c](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             p.grad[i] += c * self.grad[i];
                         });
}

// ---------------------------------------------------------------------------
// Elementwise unary
// ---------------------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_scalar(xd[i]);
  return detail::make_op(x.shape(), std::move(out), "sigmoid", {x},
                         [](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i) {
                             const double s = self.data[i];
                             p.grad[i] += self.grad[i] * s * (1.0 - s);
                           }
                         });
}

Tensor softplus(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = softplus_scalar(xd[i]);
  return detail::make_op(x.shape(), std::move(out), "softplus", {x},
                         [](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             p.grad[i] += self.grad[i] * sigmoid_scalar(p.data[i]);
                         });
}

Tensor silu(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] * sigmoid_scalar(xd[i]);
  return detail::make_op(
      x.shape(), std::move(out), "silu", {x}, [](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        p.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
          const double s = sigmoid_scalar(p.data[i]);
          p.grad[i] += self.grad[i] * s * (1.0 + p.data[i] * (1.0 - s));
        }
      });
}

Tensor exp(const Tensor& x) {
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(xd[i]);
  return detail::make_op(x.shape(), std::move(out), "exp", {x},
                         [](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t i = 0; i < self.grad.size(); ++i)
                             p.grad[i] += self.grad[i] * self.data[i];
                         });
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul",
          "expects rank-2 operands, got " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul",
          "inner dimensions differ: " + shape_str(a.shape()) + " x " +
              shape_str(b.shape()));
  std::vector<double> out(m * n);
  {
    MapConstMat A(a.data().data(), m, k);
    MapConstMat B(b.data().data(), k, n);
    MapMat Y(out.data(), m, n);
    Y.noalias() = A * B;
  }
  return detail::make_op(
      Shape{m, n}, std::move(out), "matmul", {a, b},
      [m, k, n](detail::Node& self) {
        detail::Node& pa = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        MapConstMat GY(self.grad.data(), m, n);
        MapConstMat A(pa.data.data(), m, k);
        MapConstMat B(pb.data.data(), k, n);
        if (pa.requires_grad) {
          pa.ensure_grad();
          MapMat GA(pa.grad.data(), m, k);
          GA.noalias() += GY * B.transpose();
        }
        if (pb.requires_grad) {
          pb.ensure_grad();
          MapMat GB(pb.grad.data(), k, n);
          GB.noalias() += A.transpose() * GY;
        }
      });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require(x.rank() == 2 && v.rank() == 1, "add_rowvec",
          "expects [R,C] and [C], got " + shape_str(x.shape()) + " and " +
              shape_str(v.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(v.dim(0) == cols, "add_rowvec",
          "vector length " + std::to_string(v.dim(0)) + " != " + std::to_string(cols));
  std::vector<double> out(rows * cols);
  const auto xd = x.data();
  const auto vd = v.data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = xd[r * cols + c] + vd[c];
  return detail::make_op(x.shape(), std::move(out), "add_rowvec", {x, v},
                         [rows, cols](detail::Node& self) {
                           detail::Node& px = *self.parents[0];
                           detail::Node& pv = *self.parents[1];
                           if (px.requires_grad) {
                             detail::accumulate(px, self.grad);
                           }
                           if (pv.requires_grad) {
                             pv.ensure_grad();
                             for (std::size_t r = 0; r < rows; ++r)
                               for (std::size_t c = 0; c < cols; ++c)
                                 pv.grad[c] += self.grad[r * cols + c];
                           }
                         });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require(x.rank() >= 1, "layer_norm", "rank-0 input");
  const std::size_t cols = x.shape().back();
  require(gamma.rank() == 1 && gamma.dim(0) == cols, "layer_norm",
          "gamma must be [C] with C=" + std::to_string(cols));
  require(beta.rank() == 1 && beta.dim(0) == cols, "layer_norm",
          "beta must be [C] with C=" + std::to_string(cols));
  const std::size_t rows = x.numel() / cols;

  std::vector<double> out(x.numel());
  auto stats = std::make_shared<std::vector<double>>(2 * rows);  // mean, invstd
  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xd.data() + r * cols;
    double mean = 0.0;
    for (std::size_t c = 0; c < cols; ++c) mean += row[c];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      const double d = row[c] - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*stats)[2 * r] = mean;
    (*stats)[2 * r + 1] = inv;
    for (std::size_t c = 0; c < cols; ++c)
      out[r * cols + c] = gd[c] * ((row[c] - mean) * inv) + bd[c];
  }
  return detail::make_op(
      x.shape(), std::move(out), "layer_norm", {x, gamma, beta},
      [rows, cols, stats](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pg = *self.parents[1];
        detail::Node& pb = *self.parents[2];
        const auto& xv = px.data;
        const auto& gv = pg.data;
        if (px.requires_grad) px.ensure_grad();
        if (pg.requires_grad) pg.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        std::vector<double> xhat(cols), dxhat(cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const double mean = (*stats)[2 * r];
          const double inv = (*stats)[2 * r + 1];
          const double* row = xv.data() + r * cols;
          const double* gy = self.grad.data() + r * cols;
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t c = 0; c < cols; ++c) {
            xhat[c] = (row[c] - mean) * inv;
            dxhat[c] = gy[c] * gv[c];
            sum_dxhat += dxhat[c];
            sum_dxhat_xhat += dxhat[c] * xhat[c];
          }
          if (px.requires_grad) {
            const double n = static_cast<double>(cols);
            for (std::size_t c = 0; c < cols; ++c) {
              px.grad[r * cols + c] +=
                  inv * (dxhat[c] - sum_dxhat / n - xhat[c] * sum_dxhat_xhat / n);
            }
          }
          if (pg.requires_grad)
            for (std::size_t c = 0; c < cols; ++c) pg.grad[c] += gy[c] * xhat[c];
          if (pb.requires_grad)
            for (std::size_t c = 0; c < cols; ++c) pb.grad[c] += gy[c];
        }
      });
}

// ---------------------------------------------------------------------------
// Sequence layout
// ---------------------------------------------------------------------------

Tensor concat_tokens(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "concat_tokens",
          "expects rank-2 token matrices, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  require(a.dim(1) == b.dim(1), "concat_tokens",
          "channel widths differ: " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  const std::size_t l1 = a.dim(0), l2 = b.dim(0), cols = a.dim(1);
  std::vector<double> out((l1 + l2) * cols);
  std::copy(a.data().begin(), a.data().end(), out.begin());
  std::copy(b.data().begin(), b.data().end(), out.begin() + l1 * cols);
  return detail::make_op(Shape{l1 + l2, cols}, std::move(out), "concat_tokens",
                         {a, b}, [l1, l2, cols](detail::Node& self) {
                           detail::Node& pa = *self.parents[0];
                           detail::Node& pb = *self.parents[1];
                           if (pa.requires_grad) {
                             detail::accumulate(
                                 pa, std::span(self.grad.data(), l1 * cols));
                           }
                           if (pb.requires_grad) {
                             detail::accumulate(
                                 pb, std::span(self.grad.data() + l1 * cols, l2 * cols));
                           }
                         });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require(x.rank() == 2, "slice_rows", "expects rank-2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  require(begin + count <= rows, "slice_rows",
          "range [" + std::to_string(begin) + "," + std::to_string(begin + count) +
              ") out of " + std::to_string(rows) + " rows");
  std::vector<double> out(count * cols);
  std::copy(x.data().begin() + begin * cols, x.data().begin() + (begin + count) * cols,
            out.begin());
  return detail::make_op(Shape{count, cols}, std::move(out), "slice_rows", {x},
                         [begin, count, cols](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t i = 0; i < count * cols; ++i)
                             p.grad[begin * cols + i] += self.grad[i];
                         });
}

Tensor select_row(const Tensor& x, std::size_t i) {
  require(x.rank() == 2, "select_row", "expects rank-2, got " + shape_str(x.shape()));
  const std::size_t cols = x.dim(1);
  require(i < x.dim(0), "select_row", "row " + std::to_string(i) + " out of range");
  std::vector<double> out(x.data().begin() + i * cols, x.data().begin() + (i + 1) * cols);
  return detail::make_op(Shape{cols}, std::move(out), "select_row", {x},
                         [i, cols](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t c = 0; c < cols; ++c)
                             p.grad[i * cols + c] += self.grad[c];
                         });
}

Tensor as_row(const Tensor& v) {
  require(v.rank() == 1, "as_row", "expects rank-1, got " + shape_str(v.shape()));
  std::vector<double> out(v.data().begin(), v.data().end());
  return detail::make_op(Shape{1, v.dim(0)}, std::move(out), "as_row", {v},
                         [](detail::Node& self) {
                           detail::accumulate(*self.parents[0], self.grad);
                         });
}

Tensor reverse_rows(const Tensor& x) {
  require(x.rank() >= 1, "reverse_rows", "rank-0 input");
  const std::size_t rows = x.dim(0);
  const std::size_t stride = rows == 0 ? 0 : x.numel() / rows;
  std::vector<double> out(x.numel());
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(xd.begin() + r * stride, xd.begin() + (r + 1) * stride,
              out.begin() + (rows - 1 - r) * stride);
  return detail::make_op(x.shape(), std::move(out), "reverse_rows", {x},
                         [rows, stride](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           for (std::size_t r = 0; r < rows; ++r) {
                             const double* src = self.grad.data() + (rows - 1 - r) * stride;
                             double* dst = p.grad.data() + r * stride;
                             for (std::size_t i = 0; i < stride; ++i) dst[i] += src[i];
                           }
                         });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor mean_all(const Tensor& x) {
  if (x.numel() == 0) throw ValueError("mean_all: empty tensor");
  const double n = static_cast<double>(x.numel());
  const double m = sum_of(x.data()) / n;
  return detail::make_op(Shape{}, {m}, "mean_all", {x}, [n](detail::Node& self) {
    detail::Node& p = *self.parents[0];
    p.ensure_grad();
    const double g = self.grad[0] / n;
    for (double& v : p.grad) v += g;
  });
}

Tensor sum_all(const Tensor& x) {
  return detail::make_op(Shape{}, {sum_of(x.data())}, "sum_all", {x},
                         [](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           const double g = self.grad[0];
                           for (double& v : p.grad) v += g;
                         });
}

// ---------------------------------------------------------------------------
// Structured ops
// ---------------------------------------------------------------------------

Tensor conv1d_causal_depthwise(const Tensor& x, const Tensor& w, const Tensor& b) {
  require(x.rank() == 2 && w.rank() == 2 && b.rank() == 1, "conv1d",
          "expects x:[L,E], w:[E,K], b:[E]");
  const std::size_t len = x.dim(0), ch = x.dim(1), k = w.dim(1);
  require(w.dim(0) == ch && b.dim(0) == ch, "conv1d",
          "channel count mismatch: x " + shape_str(x.shape()) + ", w " +
              shape_str(w.shape()));
  std::vector<double> out(len * ch);
  const auto xd = x.data();
  const auto wd = w.data();
  const auto bd = b.data();
  for (std::size_t l = 0; l < len; ++l) {
    for (std::size_t e = 0; e < ch; ++e) {
      double acc = bd[e];
      // taps reach back k-1 positions; zero padding on the left
      for (std::size_t t = 0; t < k; ++t) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) -
                                   static_cast<std::ptrdiff_t>(k - 1 - t);
        if (src >= 0) acc += wd[e * k + t] * xd[static_cast<std::size_t>(src) * ch + e];
      }
      out[l * ch + e] = acc;
    }
  }
  return detail::make_op(
      x.shape(), std::move(out), "conv1d", {x, w, b},
      [len, ch, k](detail::Node& self) {
        detail::Node& px = *self.parents[0];
        detail::Node& pw = *self.parents[1];
        detail::Node& pb = *self.parents[2];
        const auto& xv = px.data;
        const auto& wv = pw.data;
        if (px.requires_grad) px.ensure_grad();
        if (pw.requires_grad) pw.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        for (std::size_t l = 0; l < len; ++l) {
          for (std::size_t e = 0; e < ch; ++e) {
            const double gy = self.grad[l * ch + e];
            if (gy == 0.0) continue;
            if (pb.requires_grad) pb.grad[e] += gy;
            for (std::size_t t = 0; t < k; ++t) {
              const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(l) -
                                         static_cast<std::ptrdiff_t>(k - 1 - t);
              if (src < 0) continue;
              const std::size_t si = static_cast<std::size_t>(src) * ch + e;
              if (pw.requires_grad) pw.grad[e * k + t] += gy * xv[si];
              if (px.requires_grad) px.grad[si] += gy * wv[e * k + t];
            }
          }
        }
      });
}

Tensor extract_patches(const Tensor& frames, std::size_t patch) {
  require(frames.rank() == 4 && frames.dim(3) == 3, "extract_patches",
          "expects [T,H,W,3], got " + shape_str(frames.shape()));
  const std::size_t t_dim = frames.dim(0), h = frames.dim(1), w = frames.dim(2);
  require(patch > 0 && h % patch == 0 && w % patch == 0, "extract_patches",
          "frame " + std::to_string(h) + "x" + std::to_string(w) +
              " not divisible by patch " + std::to_string(patch));
  const std::size_t hp = h / patch, wp = w / patch;
  const std::size_t n_rows = t_dim * hp * wp;
  const std::size_t n_cols = patch * patch * 3;
  std::vector<double> out(n_rows * n_cols);
  const auto fd = frames.data();
  std::size_t row = 0;
  for (std::size_t t = 0; t < t_dim; ++t) {
    for (std::size_t py = 0; py < hp; ++py) {
      for (std::size_t px = 0; px < wp; ++px, ++row) {
        double* dst = out.data() + row * n_cols;
        for (std::size_t dy = 0; dy < patch; ++dy) {
          const std::size_t src_off = ((t * h + py * patch + dy) * w + px * patch) * 3;
          std::copy(fd.begin() + src_off, fd.begin() + src_off + patch * 3,
                    dst + dy * patch * 3);
        }
      }
    }
  }
  return detail::make_op(
      Shape{n_rows, n_cols}, std::move(out), "extract_patches", {frames},
      [t_dim, h, w, patch, hp, wp, n_cols](detail::Node& self) {
        detail::Node& p = *self.parents[0];
        p.ensure_grad();
        std::size_t row = 0;
        for (std::size_t t = 0; t < t_dim; ++t) {
          for (std::size_t py = 0; py < hp; ++py) {
            for (std::size_t px = 0; px < wp; ++px, ++row) {
              const double* src = self.grad.data() + row * n_cols;
              for (std::size_t dy = 0; dy < patch; ++dy) {
                const std::size_t dst_off =
                    ((t * h + py * patch + dy) * w + px * patch) * 3;
                for (std::size_t i = 0; i < patch * 3; ++i)
                  p.grad[dst_off + i] += src[dy * patch * 3 + i];
              }
            }
          }
        }
      });
}

Tensor cross_entropy_logits(const Tensor& logits, std::size_t label) {
  const bool row_vec = logits.rank() == 2 && logits.dim(0) == 1;
  require(logits.rank() == 1 || row_vec, "cross_entropy",
          "expects [K] or [1,K], got " + shape_str(logits.shape()));
  const std::size_t k = logits.numel();
  require(label < k, "cross_entropy", "label " + std::to_string(label) +
                                          " out of " + std::to_string(k) + " classes");
  const auto ld = logits.data();
  double m = ld[0];
  for (std::size_t i = 1; i < k; ++i) m = std::max(m, ld[i]);
  auto probs = std::make_shared<std::vector<double>>(k);
  double z = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    (*probs)[i] = std::exp(ld[i] - m);
    z += (*probs)[i];
  }
  for (std::size_t i = 0; i < k; ++i) (*probs)[i] /= z;
  const double loss = m + std::log(z) - ld[label];
  return detail::make_op(Shape{}, {loss}, "cross_entropy", {logits},
                         [label, probs](detail::Node& self) {
                           detail::Node& p = *self.parents[0];
                           p.ensure_grad();
                           const double g = self.grad[0];
                           for (std::size_t i = 0; i < probs->size(); ++i) {
                             const double ind = (i == label) ? 1.0 : 0.0;
                             p.grad[i] += g * ((*probs)[i] - ind);
                           }
                         });
}

}  // namespace xmamba
