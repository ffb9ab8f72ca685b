#include "xmamba/model.hpp"

namespace xmamba {

ModelMode mode_from_string(const std::string& name) {
  if (name == "fused") return ModelMode::Fused;
  if (name == "video") return ModelMode::VideoOnly;
  if (name == "skeleton") return ModelMode::SkeletonOnly;
  throw ValueError("unknown mode '" + name + "' (expected fused|video|skeleton)");
}

std::string mode_to_string(ModelMode mode) {
  switch (mode) {
    case ModelMode::Fused: return "fused";
    case ModelMode::VideoOnly: return "video";
    case ModelMode::SkeletonOnly: return "skeleton";
  }
  return "?";
}

CrossModalModel CrossModalModel::init(const ModelConfig& config,
                                      const SsmBlockConfig& ssm, ModelMode mode,
                                      StrategyTag strategy, std::uint64_t seed) {
  config.validate();
  ssm.validate();
  Rng rng(seed);
  CrossModalModel m;
  m.config = config;
  m.ssm = ssm;
  m.mode = mode;
  if (mode != ModelMode::SkeletonOnly)
    m.video = EncoderParams::init_video(config, ssm, rng);
  if (mode != ModelMode::VideoOnly)
    m.skeleton = EncoderParams::init_skeleton(config, ssm, rng);
  if (mode == ModelMode::Fused) {
    m.fusion = FusionModule::init(config.dim, config.num_classes, ssm, rng);
    m.strategy = FusionStrategy::init(strategy, config.dim, ssm, rng);
  } else {
    std::vector<double> w(config.dim * config.num_classes);
    for (double& x : w) x = rng.normal(0.0, 0.02);
    m.head_w = Tensor::from_data({config.dim, config.num_classes}, std::move(w), true);
    m.head_b = Tensor::zeros({config.num_classes}, true);
  }
  return m;
}

std::vector<std::pair<std::string, Tensor>> CrossModalModel::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  if (mode != ModelMode::SkeletonOnly) video.named_params("video/", out);
  if (mode != ModelMode::VideoOnly) skeleton.named_params("skeleton/", out);
  if (mode == ModelMode::Fused) {
    fusion.named_params("fusion/", out);
    strategy.named_params("fusion/strategy/", out);
  } else {
    out.emplace_back("head/w", head_w);
    out.emplace_back("head/b", head_b);
  }
  return out;
}

std::vector<Tensor> CrossModalModel::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, tensor] : named_params()) out.push_back(tensor);
  return out;
}

Tensor CrossModalModel::forward(const Tensor& frames, const Tensor& keypoints,
                                const ScanFn& scan) const {
  switch (mode) {
    case ModelMode::Fused: {
      TokenSequence sv = encoder_forward(patchify_video(frames, video, config), video,
                                         ssm, Modality::Video, scan);
      TokenSequence ss = encoder_forward(embed_skeleton(keypoints, skeleton, config),
                                         skeleton, Modality::Skeleton, scan);
      return fusion_forward(sv, ss, fusion, strategy, ssm, scan);
    }
    case ModelMode::VideoOnly: {
      TokenSequence sv = encoder_forward(patchify_video(frames, video, config), video,
                                         ssm, Modality::Video, scan);
      Tensor cls = select_row(sv.tokens, sv.cls_index);
      return select_row(linear(as_row(cls), head_w, head_b), 0);
    }
    case ModelMode::SkeletonOnly: {
      TokenSequence ss = encoder_forward(embed_skeleton(keypoints, skeleton, config),
                                         skeleton, ssm, Modality::Skeleton, scan);
      Tensor cls = select_row(ss.tokens, ss.cls_index);
      return select_row(linear(as_row(cls), head_w, head_b), 0);
    }
  }
  throw ValueError("CrossModalModel::forward: invalid mode");
}

std::size_t count_parameters(const CrossModalModel& model) {
  std::size_t n = 0;
  for (const auto& [name, tensor] : model.named_params()) n += tensor.numel();
  return n;
}

}  // namespace xmamba
