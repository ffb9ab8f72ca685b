#include "xmamba/encoders.hpp"

#include <cmath>

namespace xmamba {

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.variant = "tiny";
  c.depth = 24;
  c.dim = 198;
  c.frames = 8;
  c.height = c.width = 224;
  c.patch_size = 16;
  return c;
}

ModelConfig ModelConfig::small() {
  ModelConfig c = tiny();
  c.variant = "small";
  c.dim = 386;
  return c;
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.variant = "toy";
  c.depth = 4;
  c.dim = 64;
  c.frames = 8;
  c.height = c.width = 32;
  c.patch_size = 8;
  return c;
}

void ModelConfig::validate() const {
  if (frames < 1) throw ValueError("ModelConfig: frames must be >= 1");
  if (patch_size == 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ShapeMismatchError("ModelConfig: frame " + std::to_string(height) + "x" +
                             std::to_string(width) + " not divisible by patch " +
                             std::to_string(patch_size));
  }
  if (dim < 1 || depth > 1000) throw ValueError("ModelConfig: bad depth/dim");
  if (num_classes < 2) throw ValueError("ModelConfig: need at least 2 classes");
}

namespace {

Tensor randn_tensor(Rng& rng, Shape shape, double stddev) {
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

EncoderParams init_branch(std::size_t input_features, std::size_t tokens,
                          const ModelConfig& cfg, const SsmBlockConfig& ssm,
                          Rng& rng) {
  EncoderParams p;
  p.input_w = randn_tensor(rng, {input_features, cfg.dim}, 0.02);
  p.input_b = Tensor::zeros({cfg.dim}, true);
  p.cls = ClsToken{randn_tensor(rng, {cfg.dim}, 0.02), ClsToken::Origin::Learned};
  p.pos = Tensor::zeros({tokens + 1, cfg.dim}, true);
  p.blocks.reserve(cfg.depth);
  SsmBlockConfig block_cfg = ssm;
  block_cfg.d_model = cfg.dim;
  for (std::size_t i = 0; i < cfg.depth; ++i)
    p.blocks.push_back(SsmBlockParams::init(block_cfg, rng));
  return p;
}

}  // namespace

EncoderParams EncoderParams::init_video(const ModelConfig& cfg,
                                        const SsmBlockConfig& ssm, Rng& rng) {
  cfg.validate();
  return init_branch(cfg.patch_size * cfg.patch_size * 3, cfg.video_tokens(), cfg,
                     ssm, rng);
}

EncoderParams EncoderParams::init_skeleton(const ModelConfig& cfg,
                                           const SsmBlockConfig& ssm, Rng& rng) {
  cfg.validate();
  return init_branch(cfg.skeleton_features, cfg.skeleton_tokens(), cfg, ssm, rng);
}

void EncoderParams::named_params(
    const std::string& prefix, std::vector<std::pair<std::string, Tensor>>& out) const {
  out.emplace_back(prefix + "input_w", input_w);
  out.emplace_back(prefix + "input_b", input_b);
  out.emplace_back(prefix + "cls", cls.value);
  out.emplace_back(prefix + "pos", pos);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "block%02zu/", i);
    blocks[i].named_params(prefix + buf, out);
  }
}

Tensor patchify_video(const Tensor& frames, const EncoderParams& params,
                      const ModelConfig& cfg) {
  if (frames.rank() != 4 || frames.dim(0) != cfg.frames || frames.dim(1) != cfg.height ||
      frames.dim(2) != cfg.width || frames.dim(3) != 3) {
    throw ShapeMismatchError("patchify_video: frames " + shape_str(frames.shape()) +
                             " do not match config [" + std::to_string(cfg.frames) +
                             "," + std::to_string(cfg.height) + "," +
                             std::to_string(cfg.width) + ",3]");
  }
  return linear(extract_patches(frames, cfg.patch_size), params.input_w,
                params.input_b);
}

Tensor embed_skeleton(const Tensor& keypoints, const EncoderParams& params,
                      const ModelConfig& cfg) {
  if (keypoints.rank() != 2 || keypoints.dim(1) != cfg.skeleton_features) {
    throw ShapeMismatchError("embed_skeleton: keypoints " +
                             shape_str(keypoints.shape()) + " do not match F=" +
                             std::to_string(cfg.skeleton_features));
  }
  const std::size_t t_dim = keypoints.dim(0), f = keypoints.dim(1);
  Tensor input = keypoints;
  if (f % 6 == 0) {
    // Two hands of J=F/6 joints with (x,y,z) each. Root-center per hand and
    // divide by the mean length of the chain bones; pure data preparation,
    // the keypoints themselves carry no gradient.
    const std::size_t joints = f / 6;
    std::vector<double> norm(keypoints.data().begin(), keypoints.data().end());
    for (std::size_t t = 0; t < t_dim; ++t) {
      for (std::size_t h = 0; h < 2; ++h) {
        double* hand = norm.data() + t * f + h * joints * 3;
        const double rx = hand[0], ry = hand[1], rz = hand[2];
        for (std::size_t j = 0; j < joints; ++j) {
          hand[j * 3 + 0] -= rx;
          hand[j * 3 + 1] -= ry;
          hand[j * 3 + 2] -= rz;
        }
        double bone_sum = 0.0;
        for (std::size_t j = 1; j < joints; ++j) {
          const double dx = hand[j * 3] - hand[(j - 1) * 3];
          const double dy = hand[j * 3 + 1] - hand[(j - 1) * 3 + 1];
          const double dz = hand[j * 3 + 2] - hand[(j - 1) * 3 + 2];
          bone_sum += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
        const double mean_bone =
            joints > 1 ? bone_sum / static_cast<double>(joints - 1) : 0.0;
        if (mean_bone > 1e-9) {
          for (std::size_t j = 0; j < joints * 3; ++j) hand[j] /= mean_bone;
        }
      }
    }
    input = Tensor::from_data(keypoints.shape(), std::move(norm), false);
  }
  return linear(input, params.input_w, params.input_b);
}

TokenSequence encoder_forward(const Tensor& tokens, const EncoderParams& params,
                              const SsmBlockConfig& ssm, Modality modality,
                              const ScanFn& scan) {
  if (tokens.rank() != 2 || tokens.dim(1) != params.cls.value.dim(0)) {
    throw ShapeMismatchError("encoder_forward: tokens " + shape_str(tokens.shape()) +
                             " do not match branch width " +
                             std::to_string(params.cls.value.dim(0)));
  }
  if (tokens.dim(0) + 1 != params.pos.dim(0)) {
    throw ShapeMismatchError("encoder_forward: " + std::to_string(tokens.dim(0)) +
                             " tokens do not match positional table " +
                             shape_str(params.pos.shape()));
  }
  Tensor seq = concat_tokens(as_row(params.cls.value), tokens);
  seq = add(seq, params.pos);
  SsmBlockConfig block_cfg = ssm;
  block_cfg.d_model = tokens.dim(1);
  for (const SsmBlockParams& block : params.blocks)
    seq = mamba_block_forward(seq, block, block_cfg, scan);
  return TokenSequence{seq, 0, modality};
}

}  // namespace xmamba
