#include "xmamba/fusion.hpp"

namespace xmamba {

StrategyTag strategy_from_string(const std::string& name) {
  if (name == "naive") return StrategyTag::Naive;
  if (name == "average") return StrategyTag::Average;
  if (name == "weighted") return StrategyTag::Weighted;
  if (name == "context") return StrategyTag::Context;
  throw ValueError("unknown strategy '" + name +
                   "' (expected naive|average|weighted|context)");
}

std::string strategy_to_string(StrategyTag tag) {
  switch (tag) {
    case StrategyTag::Naive: return "naive";
    case StrategyTag::Average: return "average";
    case StrategyTag::Weighted: return "weighted";
    case StrategyTag::Context: return "context";
  }
  return "?";
}

FusionStrategy FusionStrategy::init(StrategyTag tag, std::size_t dim,
                                    const SsmBlockConfig& ssm, Rng& rng) {
  FusionStrategy s;
  s.tag = tag;
  switch (tag) {
    case StrategyTag::Naive: {
      std::vector<double> v(dim);
      for (double& x : v) x = rng.normal(0.0, 0.02);
      s.naive_cls = Tensor::from_data({dim}, std::move(v), true);
      break;
    }
    case StrategyTag::Average:
      break;
    case StrategyTag::Weighted:
      // omega = 0 makes Weighted coincide with Average at initialization
      s.omega = Tensor::scalar(0.0, true);
      break;
    case StrategyTag::Context: {
      SsmBlockConfig cfg = ssm;
      cfg.d_model = dim;
      s.context_block = SsmBlockParams::init(cfg, rng);
      break;
    }
  }
  return s;
}

void FusionStrategy::named_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  switch (tag) {
    case StrategyTag::Naive:
      out.emplace_back(prefix + "naive_cls", naive_cls);
      break;
    case StrategyTag::Average:
      break;
    case StrategyTag::Weighted:
      out.emplace_back(prefix + "omega", omega);
      break;
    case StrategyTag::Context:
      context_block->named_params(prefix + "context_block/", out);
      break;
  }
}

FusionModule FusionModule::init(std::size_t dim, std::size_t num_classes,
                                const SsmBlockConfig& ssm, Rng& rng) {
  FusionModule m;
  m.modality_embed_video = Tensor::zeros({dim}, true);
  m.modality_embed_skel = Tensor::zeros({dim}, true);
  SsmBlockConfig cfg = ssm;
  cfg.d_model = dim;
  m.fusion_block = SsmBlockParams::init(cfg, rng);
  std::vector<double> w(dim * num_classes);
  for (double& x : w) x = rng.normal(0.0, 0.02);
  m.head_w = Tensor::from_data({dim, num_classes}, std::move(w), true);
  m.head_b = Tensor::zeros({num_classes}, true);
  return m;
}

void FusionModule::named_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + "modality_embed_video", modality_embed_video);
  out.emplace_back(prefix + "modality_embed_skel", modality_embed_skel);
  fusion_block.named_params(prefix + "block/", out);
  out.emplace_back(prefix + "head_w", head_w);
  out.emplace_back(prefix + "head_b", head_b);
}

Tensor compute_context_alpha(const Tensor& t_video, const Tensor& t_skel,
                             const SsmBlockParams& context_block,
                             const SsmBlockConfig& ssm, const ScanFn& scan) {
  if (t_video.dim(0) == 0 && t_skel.dim(0) == 0) {
    throw EmptySequenceError("compute_context_alpha: both token sequences are empty");
  }
  SsmBlockConfig cfg = ssm;
  cfg.d_model = t_video.dim(1);
  Tensor cat = concat_tokens(t_video, t_skel);
  Tensor out = mamba_block_forward(cat, context_block, cfg, scan);
  return sigmoid(mean_all(out));
}

namespace {

Tensor blend_cls(const Tensor& alpha, const Tensor& cls_v, const Tensor& cls_s) {
  Tensor one_minus = sub(Tensor::scalar(1.0), alpha);
  return add(mul(alpha, cls_v), mul(one_minus, cls_s));
}

}  // namespace

Tensor mix_cls(const FusionStrategy& strategy, const Tensor& cls_v,
               const Tensor& cls_s, const Tensor& t_video, const Tensor& t_skel,
               const SsmBlockConfig& ssm, const ScanFn& scan) {
  if (cls_v.shape() != cls_s.shape() || cls_v.rank() != 1) {
    throw ShapeMismatchError("mix_cls: CLS tokens must share shape [C], got " +
                             shape_str(cls_v.shape()) + " and " +
                             shape_str(cls_s.shape()));
  }
  switch (strategy.tag) {
    case StrategyTag::Naive:
      return strategy.naive_cls;
    case StrategyTag::Average:
      return scale(add(cls_v, cls_s), 0.5);
    case StrategyTag::Weighted:
      return blend_cls(sigmoid(strategy.omega), cls_v, cls_s);
    case StrategyTag::Context: {
      Tensor alpha = compute_context_alpha(t_video, t_skel, *strategy.context_block,
                                           ssm, scan);
      return blend_cls(alpha, cls_v, cls_s);
    }
  }
  throw ValueError("mix_cls: invalid strategy tag");
}

Tensor fusion_forward(const TokenSequence& seq_video, const TokenSequence& seq_skel,
                      const FusionModule& module, const FusionStrategy& strategy,
                      const SsmBlockConfig& ssm, const ScanFn& scan) {
  const Tensor& v = seq_video.tokens;
  const Tensor& s = seq_skel.tokens;
  if (v.dim(1) != s.dim(1)) {
    throw WidthMismatchError("fusion_forward: branch widths differ: " +
                             shape_str(v.shape()) + " vs " + shape_str(s.shape()));
  }
  if (v.dim(1) != module.modality_embed_video.dim(0)) {
    throw ShapeMismatchError("fusion_forward: module width " +
                             std::to_string(module.modality_embed_video.dim(0)) +
                             " does not match sequences of width " +
                             std::to_string(v.dim(1)));
  }

  // (1) strip both CLS rows (CLS sits at index 0)
  Tensor cls_v = select_row(v, seq_video.cls_index);
  Tensor cls_s = select_row(s, seq_skel.cls_index);
  Tensor rows_v = slice_rows(v, 1, v.dim(0) - 1);
  Tensor rows_s = slice_rows(s, 1, s.dim(0) - 1);

  // (2) per-modality embedding on every token row
  Tensor emb_v = add_rowvec(rows_v, module.modality_embed_video);
  Tensor emb_s = add_rowvec(rows_s, module.modality_embed_skel);

  // (3) mixed CLS; the context path sees the raw branch rows, not the
  //     modality-embedded ones
  if (module.embed_cls) {
    cls_v = add(cls_v, module.modality_embed_video);
    cls_s = add(cls_s, module.modality_embed_skel);
  }
  Tensor cls = mix_cls(strategy, cls_v, cls_s, rows_v, rows_s, ssm, scan);

  // (4)(5) [CLS] ++ video rows ++ skeleton rows through the single block
  Tensor fused = concat_tokens(as_row(cls), concat_tokens(emb_v, emb_s));
  SsmBlockConfig cfg = ssm;
  cfg.d_model = v.dim(1);
  fused = mamba_block_forward(fused, module.fusion_block, cfg, scan);

  // (6) head on the post-block CLS row
  Tensor logits = linear(as_row(select_row(fused, 0)), module.head_w, module.head_b);
  return select_row(logits, 0);
}

}  // namespace xmamba
