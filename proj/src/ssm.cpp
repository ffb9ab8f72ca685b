#include "xmamba/ssm.hpp"

#include <Eigen/Core>
#include <chrono>
#include <cmath>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace xmamba {

namespace {

void require(bool cond, const char* op, const std::string& detail) {
  if (!cond) throw ShapeMismatchError(std::string(op) + ": " + detail);
}

using ArrMap = Eigen::Map<Eigen::ArrayXd>;
using ConstArrMap = Eigen::Map<const Eigen::ArrayXd>;

}  // namespace

void SsmBlockConfig::validate() const {
  if (d_model < 1 || d_state < 1 || expand < 1 || d_conv < 1) {
    throw ValueError("SsmBlockConfig: d_model, d_state, expand, d_conv must be >= 1");
  }
}

SsmBlockParams SsmBlockParams::init(const SsmBlockConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t c = cfg.d_model, e = cfg.d_inner(), n = cfg.d_state,
                    k = cfg.d_conv;
  auto randn = [&rng](Shape shape, double stddev) {
    std::vector<double> v(numel_of(shape));
    for (double& x : v) x = rng.normal(0.0, stddev);
    return Tensor::from_data(std::move(shape), std::move(v), true);
  };
  SsmBlockParams p;
  p.norm_gamma = Tensor::full({c}, 1.0, true);
  p.norm_beta = Tensor::zeros({c}, true);
  p.w_in = randn({c, e}, 0.02);
  p.w_gate = randn({c, e}, 0.02);
  p.conv_w = randn({e, k}, 0.02);
  p.conv_b = Tensor::zeros({e}, true);
  p.w_delta = randn({e, e}, 0.02);
  {
    // bias chosen so softplus(b_delta) lands in [1e-3, 1e-1]
    std::vector<double> b(e);
    const double lo = std::log(1e-3), hi = std::log(1e-1);
    for (double& x : b) x = inverse_softplus(std::exp(rng.uniform(lo, hi)));
    p.b_delta = Tensor::from_data({e}, std::move(b), true);
  }
  p.w_b = randn({e, n}, 0.02);
  p.w_c = randn({e, n}, 0.02);
  {
    // A = -(1..N) on every channel (S4D-real style)
    std::vector<double> a(e * n);
    for (std::size_t i = 0; i < e; ++i)
      for (std::size_t j = 0; j < n; ++j)
        a[i * n + j] = std::log(static_cast<double>(j + 1));
    p.a_log = Tensor::from_data({e, n}, std::move(a), true);
  }
  p.skip_d = Tensor::full({e}, 1.0, true);
  p.w_out = Tensor::zeros({e, c}, true);
  return p;
}

void SsmBlockParams::named_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + "norm_gamma", norm_gamma);
  out.emplace_back(prefix + "norm_beta", norm_beta);
  out.emplace_back(prefix + "w_in", w_in);
  out.emplace_back(prefix + "w_gate", w_gate);
  out.emplace_back(prefix + "conv_w", conv_w);
  out.emplace_back(prefix + "conv_b", conv_b);
  out.emplace_back(prefix + "w_delta", w_delta);
  out.emplace_back(prefix + "b_delta", b_delta);
  out.emplace_back(prefix + "w_b", w_b);
  out.emplace_back(prefix + "w_c", w_c);
  out.emplace_back(prefix + "a_log", a_log);
  out.emplace_back(prefix + "skip_d", skip_d);
  out.emplace_back(prefix + "w_out", w_out);
}

std::size_t SsmBlockParams::parameter_count(const SsmBlockConfig& cfg) {
  const std::size_t c = cfg.d_model, e = cfg.d_inner(), n = cfg.d_state,
                    k = cfg.d_conv;
  return 2 * c            // norm
         + 2 * c * e      // in + gate projections
         + e * k + e      // conv
         + e * e + e      // delta projection
         + 2 * e * n      // B, C projections
         + e * n          // a_log
         + e              // skip D
         + e * c;         // out projection
}

// ---------------------------------------------------------------------------
// discretize
// ---------------------------------------------------------------------------

namespace {

Tensor discretize_a(const Tensor& delta, const Tensor& a_diag) {
  const std::size_t len = delta.dim(0), ch = delta.dim(1), st = a_diag.dim(1);
  std::vector<double> out(len * ch * st);
  const double* dd = delta.data().data();
  const double* ad = a_diag.data().data();
  {
    double* od = out.data();
    const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(len * ch);
#pragma omp parallel for schedule(static) if (total * static_cast<std::ptrdiff_t>(st) > 16384)
    for (std::ptrdiff_t i = 0; i < total; ++i) {
      const std::size_t c = static_cast<std::size_t>(i) % ch;
      ConstArrMap arow(ad + c * st, st);
      ArrMap orow(od + static_cast<std::size_t>(i) * st, st);
      orow = (arow * dd[i]).exp();
    }
  }
  return detail::make_op(
      Shape{len, ch, st}, std::move(out), "discretize_a", {delta, a_diag},
      [len, ch, st](detail::Node& self) {
        detail::Node& pd = *self.parents[0];
        detail::Node& pa = *self.parents[1];
        const auto& dv = pd.data;
        const auto& av = pa.data;
        if (pd.requires_grad) pd.ensure_grad();
        if (pa.requires_grad) pa.ensure_grad();
        const std::ptrdiff_t chs = static_cast<std::ptrdiff_t>(ch);
#pragma omp parallel for schedule(static) if (chs > 1 && len * st > 2048)
        for (std::ptrdiff_t ci = 0; ci < chs; ++ci) {
          const std::size_t c = static_cast<std::size_t>(ci);
          for (std::size_t l = 0; l < len; ++l) {
            const std::size_t base = (l * ch + c) * st;
            const double dlc = dv[l * ch + c];
            double dsum = 0.0;
            for (std::size_t n = 0; n < st; ++n) {
              const double gy = self.grad[base + n] * self.data[base + n];
              dsum += gy * av[c * st + n];
              if (pa.requires_grad) pa.grad[c * st + n] += gy * dlc;
            }
            if (pd.requires_grad) pd.grad[l * ch + c] += dsum;
          }
        }
      });
}

Tensor discretize_b(const Tensor& delta, const Tensor& b) {
  const std::size_t len = delta.dim(0), ch = delta.dim(1), st = b.dim(1);
  std::vector<double> out(len * ch * st);
  const double* dd = delta.data().data();
  const double* bd = b.data().data();
  for (std::size_t l = 0; l < len; ++l)
    for (std::size_t c = 0; c < ch; ++c) {
      const double dlc = dd[l * ch + c];
      double* orow = out.data() + (l * ch + c) * st;
      const double* brow = bd + l * st;
      for (std::size_t n = 0; n < st; ++n) orow[n] = dlc * brow[n];
    }
  return detail::make_op(
      Shape{len, ch, st}, std::move(out), "discretize_b", {delta, b},
      [len, ch, st](detail::Node& self) {
        detail::Node& pd = *self.parents[0];
        detail::Node& pb = *self.parents[1];
        const auto& dv = pd.data;
        const auto& bv = pb.data;
        if (pd.requires_grad) pd.ensure_grad();
        if (pb.requires_grad) pb.ensure_grad();
        const std::ptrdiff_t lens = static_cast<std::ptrdiff_t>(len);
#pragma omp parallel for schedule(static) if (lens > 1 && ch * st > 2048)
        for (std::ptrdiff_t li = 0; li < lens; ++li) {
          const std::size_t l = static_cast<std::size_t>(li);
          for (std::size_t c = 0; c < ch; ++c) {
            const std::size_t base = (l * ch + c) * st;
            const double dlc = dv[l * ch + c];
            double dsum = 0.0;
            for (std::size_t n = 0; n < st; ++n) {
              const double gy = self.grad[base + n];
              dsum += gy * bv[l * st + n];
              if (pb.requires_grad) pb.grad[l * st + n] += gy * dlc;
            }
            if (pd.requires_grad) pd.grad[l * ch + c] += dsum;
          }
        }
      });
}

}  // namespace

std::pair<Tensor, Tensor> discretize(const Tensor& delta, const Tensor& a_diag,
                                     const Tensor& b) {
  require(delta.rank() == 2 && a_diag.rank() == 2 && b.rank() == 2, "discretize",
          "expects delta:[L,C], a_diag:[C,N], b:[L,N]");
  require(a_diag.dim(0) == delta.dim(1), "discretize",
          "channel mismatch: delta " + shape_str(delta.shape()) + ", a_diag " +
              shape_str(a_diag.shape()));
  require(b.dim(0) == delta.dim(0) && b.dim(1) == a_diag.dim(1), "discretize",
          "b " + shape_str(b.shape()) + " incompatible with delta/a_diag");
  for (double v : delta.data()) {
    if (!(v > 0.0)) throw ValueError("discretize: delta must be positive elementwise");
  }
  return {discretize_a(delta, a_diag), discretize_b(delta, b)};
}

// ---------------------------------------------------------------------------
// selective_scan
// ---------------------------------------------------------------------------

Tensor selective_scan(const Tensor& u, const Tensor& a_bar, const Tensor& b_bar,
                      const Tensor& c, const Tensor& d) {
  require(u.rank() == 2, "selective_scan", "u must be [L,C]");
  const std::size_t len = u.dim(0), ch = u.dim(1);
  require(a_bar.rank() == 3 && a_bar.dim(0) == len && a_bar.dim(1) == ch,
          "selective_scan", "a_bar must be [L,C,N]");
  const std::size_t st = a_bar.dim(2);
  require(b_bar.shape() == a_bar.shape(), "selective_scan",
          "b_bar " + shape_str(b_bar.shape()) + " != a_bar " + shape_str(a_bar.shape()));
  require(c.rank() == 2 && c.dim(0) == len && c.dim(1) == st, "selective_scan",
          "c must be [L,N], got " + shape_str(c.shape()));
  require(d.rank() == 1 && d.dim(0) == ch, "selective_scan",
          "d must be [C], got " + shape_str(d.shape()));

  const bool needs_grad = u.requires_grad() || a_bar.requires_grad() ||
                          b_bar.requires_grad() || c.requires_grad() ||
                          d.requires_grad();

  std::vector<double> out(len * ch);
  // Hidden states are saved only when grad is needed; the no-grad path keeps
  // O(C*N) live state.
  auto h_all = std::make_shared<std::vector<double>>();
  if (needs_grad) h_all->assign(len * ch * st, 0.0);

  const double* ud = u.data().data();
  const double* ad = a_bar.data().data();
  const double* bd = b_bar.data().data();
  const double* cd = c.data().data();
  const double* dd = d.data().data();
  {
    double* od = out.data();
    double* hd = needs_grad ? h_all->data() : nullptr;
    const std::ptrdiff_t chs = static_cast<std::ptrdiff_t>(ch);
#pragma omp parallel for schedule(static) if (chs > 1 && len * st >= 4096)
    for (std::ptrdiff_t ci = 0; ci < chs; ++ci) {
      const std::size_t cc = static_cast<std::size_t>(ci);
      std::vector<double> h(st, 0.0);
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t base = (l * ch + cc) * st;
        const double ut = ud[l * ch + cc];
        double y = 0.0;
        for (std::size_t n = 0; n < st; ++n) {
          h[n] = ad[base + n] * h[n] + bd[base + n] * ut;
          y += cd[l * st + n] * h[n];
        }
        if (hd) std::copy(h.begin(), h.end(), hd + base);
        od[l * ch + cc] = y + dd[cc] * ut;
      }
    }
  }

  return detail::make_op(
      Shape{len, ch}, std::move(out), "selective_scan", {u, a_bar, b_bar, c, d},
      [len, ch, st, h_all](detail::Node& self) {
        detail::Node& pu = *self.parents[0];
        detail::Node& pa = *self.parents[1];
        detail::Node& pb = *self.parents[2];
        detail::Node& pc = *self.parents[3];
        detail::Node& pd = *self.parents[4];
        for (detail::Node* p : {&pu, &pa, &pb, &pc, &pd})
          if (p->requires_grad) p->ensure_grad();

        const auto& uv = pu.data;
        const auto& av = pa.data;
        const auto& bv = pb.data;
        const auto& cv = pc.data;
        const auto& dv = pd.data;
        const std::vector<double>& hv = *h_all;

#ifdef _OPENMP
        const int nthreads = omp_get_max_threads();
#else
        const int nthreads = 1;
#endif
        // c is shared across channels: accumulate per-thread partials and
        // reduce in thread order so results do not depend on scheduling.
        std::vector<double> dc_partial;
        if (pc.requires_grad)
          dc_partial.assign(static_cast<std::size_t>(nthreads) * len * st, 0.0);
        std::vector<double> dd_partial;
        if (pd.requires_grad)
          dd_partial.assign(static_cast<std::size_t>(nthreads) * ch, 0.0);

        const std::ptrdiff_t chs = static_cast<std::ptrdiff_t>(ch);
#pragma omp parallel for schedule(static) if (chs > 1 && len * st >= 4096)
        for (std::ptrdiff_t ci = 0; ci < chs; ++ci) {
          const std::size_t cc = static_cast<std::size_t>(ci);
#ifdef _OPENMP
          const int tid = omp_get_thread_num();
#else
          const int tid = 0;
#endif
          double* dcp = pc.requires_grad
                            ? dc_partial.data() + static_cast<std::size_t>(tid) * len * st
                            : nullptr;
          std::vector<double> gh(st, 0.0);
          for (std::size_t li = len; li-- > 0;) {
            const std::size_t base = (li * ch + cc) * st;
            const double gy = self.grad[li * ch + cc];
            const double ut = uv[li * ch + cc];
            // gh_t = c_t * gy_t + a_bar_{t+1} (*) gh_{t+1} (already folded in)
            for (std::size_t n = 0; n < st; ++n) gh[n] += cv[li * st + n] * gy;
            double du = dv[cc] * gy;
            for (std::size_t n = 0; n < st; ++n) {
              const double hprev = (li == 0) ? 0.0 : hv[base - ch * st + n];
              if (pa.requires_grad) pa.grad[base + n] += gh[n] * hprev;
              if (pb.requires_grad) pb.grad[base + n] += gh[n] * ut;
              du += gh[n] * bv[base + n];
              if (dcp) dcp[li * st + n] += hv[base + n] * gy;
            }
            if (pu.requires_grad) pu.grad[li * ch + cc] += du;
            if (pd.requires_grad)
              dd_partial[static_cast<std::size_t>(tid) * ch + cc] += ut * gy;
            // fold a_bar_t into gh for step t-1
            for (std::size_t n = 0; n < st; ++n) gh[n] *= av[base + n];
          }
        }
        if (pc.requires_grad) {
          for (int t = 0; t < nthreads; ++t) {
            const double* src = dc_partial.data() + static_cast<std::size_t>(t) * len * st;
            for (std::size_t i = 0; i < len * st; ++i) pc.grad[i] += src[i];
          }
        }
        if (pd.requires_grad) {
          for (int t = 0; t < nthreads; ++t) {
            const double* src = dd_partial.data() + static_cast<std::size_t>(t) * ch;
            for (std::size_t i = 0; i < ch; ++i) pd.grad[i] += src[i];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// block forward
// ---------------------------------------------------------------------------

Tensor mamba_block_forward(const Tensor& x, const SsmBlockParams& params,
                           const SsmBlockConfig& cfg, const ScanFn& scan) {
  require(x.rank() == 2 && x.dim(1) == cfg.d_model, "mamba_block_forward",
          "input " + shape_str(x.shape()) + " does not match d_model " +
              std::to_string(cfg.d_model));
  const ScanFn& scan_fn = scan ? scan : ScanFn(selective_scan);

  Tensor u0 = layer_norm(x, params.norm_gamma, params.norm_beta, 1e-6);
  Tensor gate = matmul(u0, params.w_gate);                      // [L,E]
  Tensor a = conv1d_causal_depthwise(silu(matmul(u0, params.w_in)),
                                     params.conv_w, params.conv_b);  // [L,E]

  Tensor delta = softplus(linear(a, params.w_delta, params.b_delta));  // [L,E]
  Tensor bmat = matmul(a, params.w_b);                                 // [L,N]
  Tensor cmat = matmul(a, params.w_c);                                 // [L,N]
  Tensor a_diag = scale(exp(params.a_log), -1.0);                      // [E,N]
  auto [a_bar, b_bar] = discretize(delta, a_diag, bmat);

  Tensor y = scan_fn(a, a_bar, b_bar, cmat, params.skip_d);
  if (cfg.bidirectional) {
    Tensor y_rev = reverse_rows(scan_fn(reverse_rows(a), reverse_rows(a_bar),
                                        reverse_rows(b_bar), reverse_rows(cmat),
                                        params.skip_d));
    y = scale(add(y, y_rev), 0.5);
  }

  Tensor out = matmul(mul(y, silu(gate)), params.w_out);  // [L,C]
  return add(x, out);
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

std::vector<double> bench_selective_scan(std::size_t length, std::size_t channels,
                                         std::size_t state, std::size_t trials,
                                         std::uint64_t seed) {
  Rng rng(seed);
  auto rand_tensor = [&rng](Shape shape, double lo, double hi) {
    std::vector<double> v(numel_of(shape));
    for (double& x : v) x = rng.uniform(lo, hi);
    return Tensor::from_data(std::move(shape), std::move(v), false);
  };
  Tensor u = rand_tensor({length, channels}, -1.0, 1.0);
  Tensor a_bar = rand_tensor({length, channels, state}, 0.05, 0.95);
  Tensor b_bar = rand_tensor({length, channels, state}, -0.5, 0.5);
  Tensor c = rand_tensor({length, state}, -1.0, 1.0);
  Tensor d = rand_tensor({channels}, -1.0, 1.0);

  volatile double sink = 0.0;
  std::vector<double> samples;
  samples.reserve(trials);
  for (std::size_t t = 0; t < trials + 1; ++t) {  // first trial is warmup
    const auto t0 = std::chrono::steady_clock::now();
    Tensor y = selective_scan(u, a_bar, b_bar, c, d);
    const auto t1 = std::chrono::steady_clock::now();
    sink = sink + y.at(0, 0);
    if (t > 0) {
      samples.push_back(
          std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count() * 1.0);
    }
  }
  (void)sink;
  return samples;
}

}  // namespace xmamba
