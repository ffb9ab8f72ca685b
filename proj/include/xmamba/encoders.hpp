#pragma once

#include <string>
#include <utility>
#include <vector>

#include "xmamba/ssm.hpp"

namespace xmamba {

struct ModelConfig {
  std::string variant = "toy";
  std::size_t depth = 4;
  std::size_t dim = 64;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t patch_size = 8;
  std::size_t skeleton_features = 126;  // two 21-joint 3D hands
  std::size_t num_classes = 4;

  static ModelConfig tiny();   // depth 24, dim 198, 224x224 @ p16
  static ModelConfig small();  // depth 24, dim 386, 224x224 @ p16
  static ModelConfig toy();    // depth 4,  dim 64,  32x32  @ p8

  void validate() const;
  std::size_t video_tokens() const {
    return frames * (height / patch_size) * (width / patch_size);
  }
  std::size_t skeleton_tokens() const { return frames; }
};

enum class Modality { Video, Skeleton };

struct ClsToken {
  enum class Origin { Learned, Mixed };
  Tensor value;  // [C]
  Origin origin = Origin::Learned;
};

// Full token matrix of one branch with the CLS slot at index 0.
struct TokenSequence {
  Tensor tokens;  // [L+1, C]
  std::size_t cls_index = 0;
  Modality modality = Modality::Video;
};

struct EncoderParams {
  Tensor input_w, input_b;  // video: [p*p*3, C]; skeleton: [F, C]
  ClsToken cls;             // [C]
  Tensor pos;               // [L+1, C], zero-initialized
  std::vector<SsmBlockParams> blocks;

  static EncoderParams init_video(const ModelConfig& cfg, const SsmBlockConfig& ssm,
                                  Rng& rng);
  static EncoderParams init_skeleton(const ModelConfig& cfg, const SsmBlockConfig& ssm,
                                     Rng& rng);
  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const;
};

// Non-overlapping p x p x 3 patches, flattened and projected to C channels.
// Row order is frame-major then raster order. frames:[T,H,W,3] -> [T*(H/p)*(W/p), C].
Tensor patchify_video(const Tensor& frames, const EncoderParams& params,
                      const ModelConfig& cfg);

// One token per frame through a shared linear projection. Keypoints are laid
// out as hand-major (x,y,z) triples; when the feature count is divisible by 6
// each hand is root-centered and scale-normalized by its mean bone length
// before projection. keypoints:[T,F] -> [T,C].
Tensor embed_skeleton(const Tensor& keypoints, const EncoderParams& params,
                      const ModelConfig& cfg);

// CLS prepended at index 0, positional table added to all rows, then `depth`
// blocks applied. Returns the full sequence, CLS still at index 0.
TokenSequence encoder_forward(const Tensor& tokens, const EncoderParams& params,
                              const SsmBlockConfig& ssm, Modality modality,
                              const ScanFn& scan = {});

}  // namespace xmamba
