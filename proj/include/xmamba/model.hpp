#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xmamba/fusion.hpp"

namespace xmamba {

enum class ModelMode { Fused, VideoOnly, SkeletonOnly };

ModelMode mode_from_string(const std::string& name);
std::string mode_to_string(ModelMode mode);

// The full classifier: two encoder branches plus the fusion module, or a
// single branch with its own head in the unimodal baselines.
struct CrossModalModel {
  ModelConfig config;
  SsmBlockConfig ssm;
  ModelMode mode = ModelMode::Fused;

  EncoderParams video;     // Fused, VideoOnly
  EncoderParams skeleton;  // Fused, SkeletonOnly
  FusionModule fusion;     // Fused
  FusionStrategy strategy; // Fused
  Tensor head_w, head_b;   // unimodal head

  static CrossModalModel init(const ModelConfig& config, const SsmBlockConfig& ssm,
                              ModelMode mode, StrategyTag strategy,
                              std::uint64_t seed);

  // Stable name -> tensor listing; also the checkpoint order.
  std::vector<std::pair<std::string, Tensor>> named_params() const;
  std::vector<Tensor> parameters() const;

  // frames:[T,H,W,3], keypoints:[T,F] -> logits [num_classes]
  Tensor forward(const Tensor& frames, const Tensor& keypoints,
                 const ScanFn& scan = {}) const;
};

// Exact trainable scalar count.
std::size_t count_parameters(const CrossModalModel& model);

}  // namespace xmamba
