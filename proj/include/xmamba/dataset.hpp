#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xmamba/tensor.hpp"

namespace xmamba {

// Paired video + hand-skeleton generator. Each class is a distinct parametric
// two-hand trajectory; frames are low-res renderings of Gaussian blobs at the
// projected joint positions. Occluded frames are zeroed in the video stream
// only, the skeleton stream persists.
struct SyntheticDatasetSpec {
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 16;
  std::size_t frames = 8;       // T
  std::size_t height = 32;      // H
  std::size_t width = 32;       // W
  double keypoint_noise = 0.0;  // sigma on skeleton coordinates
  double occlusion_prob = 0.0;  // per-frame probability of blanking the video
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t total() const { return num_classes * samples_per_class; }
};

struct Sample {
  Tensor frames;     // [T,H,W,3] in [0,1]
  Tensor keypoints;  // [T,126]: hand-major (x,y,z) triples for 2x21 joints
  int label = 0;
};

struct Dataset {
  SyntheticDatasetSpec spec;
  std::vector<Sample> samples;
};

Dataset generate_synthetic(const SyntheticDatasetSpec& spec);

// On-disk form reuses the checkpoint container plus a meta.json. Identical
// specs produce byte-identical directories.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace xmamba
