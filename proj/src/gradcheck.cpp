#include "xmamba/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace xmamba {

double finite_diff_check(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0 && h <= 1e-2)) {
    throw ValueError("finite_diff_check: h must be in (0, 1e-2], got " +
                     std::to_string(h));
  }

  // Analytic gradient.
  Tensor probe = x.detached(/*requires_grad=*/true);
  Tensor loss = f(probe);
  if (loss.numel() != 1) {
    throw NotScalarError("finite_diff_check: f must return a scalar");
  }
  backward(loss);
  std::vector<double> analytic(probe.numel(), 0.0);
  if (probe.has_grad()) {
    const auto g = probe.grad();
    analytic.assign(g.begin(), g.end());
  }

  auto eval_at = [&](const std::vector<double>& values) {
    Tensor arg = Tensor::from_data(x.shape(), values, /*requires_grad=*/false);
    double v;
    try {
      v = f(arg).value();
    } catch (const NonFiniteError& e) {
      throw NonFiniteProbeError(std::string("finite_diff_check: ") + e.what());
    }
    if (!std::isfinite(v)) {
      throw NonFiniteProbeError("finite_diff_check: probe returned non-finite value");
    }
    return v;
  };

  std::vector<double> base(x.data().begin(), x.data().end());
  double max_rel = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double orig = base[i];
    base[i] = orig + h;
    const double fp = eval_at(base);
    base[i] = orig - h;
    const double fm = eval_at(base);
    base[i] = orig;
    const double numeric = (fp - fm) / (2.0 * h);
    const double rel = std::abs(analytic[i] - numeric) / (std::abs(analytic[i]) + 1e-12);
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace xmamba
