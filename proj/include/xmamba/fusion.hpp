#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xmamba/encoders.hpp"

namespace xmamba {

enum class StrategyTag { Naive, Average, Weighted, Context };

StrategyTag strategy_from_string(const std::string& name);
std::string strategy_to_string(StrategyTag tag);

// Mixed-CLS initialization strategy. Exactly the parameters of the active tag
// exist: Naive owns a fresh CLS (+C), Weighted a scalar omega (+1), Context a
// full SSM block; Average owns nothing.
struct FusionStrategy {
  StrategyTag tag = StrategyTag::Average;
  Tensor naive_cls;                              // [C], Naive only
  Tensor omega;                                  // scalar, Weighted only
  std::optional<SsmBlockParams> context_block;   // Context only

  static FusionStrategy init(StrategyTag tag, std::size_t dim,
                             const SsmBlockConfig& ssm, Rng& rng);
  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const;
};

struct FusionModule {
  Tensor modality_embed_video;  // [C]
  Tensor modality_embed_skel;   // [C]
  SsmBlockParams fusion_block;  // exactly one block; depth is not configurable
  Tensor head_w, head_b;        // [C,num_classes], [num_classes]
  // Ablation switch: also add modality embeddings to the branch CLS tokens
  // before mixing. Default off (embeddings go to token rows only).
  bool embed_cls = false;

  static FusionModule init(std::size_t dim, std::size_t num_classes,
                           const SsmBlockConfig& ssm, Rng& rng);
  void named_params(const std::string& prefix,
                    std::vector<std::pair<std::string, Tensor>>& out) const;
};

// alpha = sigmoid(mean(MambaBlock(t_video ++ t_skel))), a scalar in (0,1).
// Inputs are the non-CLS rows of each branch output. Throws
// EmptySequenceError when both inputs have zero rows.
Tensor compute_context_alpha(const Tensor& t_video, const Tensor& t_skel,
                             const SsmBlockParams& context_block,
                             const SsmBlockConfig& ssm, const ScanFn& scan = {});

// Builds the Mixed CLS token [C] from the two branch CLS tokens:
//   Naive    -> strategy.naive_cls (inputs ignored)
//   Average  -> (cls_v + cls_s) / 2
//   Weighted -> sigmoid(omega)*cls_v + (1 - sigmoid(omega))*cls_s
//   Context  -> alpha*cls_v + (1-alpha)*cls_s, alpha from compute_context_alpha
Tensor mix_cls(const FusionStrategy& strategy, const Tensor& cls_v,
               const Tensor& cls_s, const Tensor& t_video, const Tensor& t_skel,
               const SsmBlockConfig& ssm, const ScanFn& scan = {});

// Strips both CLS rows, adds the modality embedding to every remaining row of
// its branch, prepends the mixed CLS, runs the single fusion block and applies
// the head to the post-block CLS row. Returns logits [num_classes].
Tensor fusion_forward(const TokenSequence& seq_video, const TokenSequence& seq_skel,
                      const FusionModule& module, const FusionStrategy& strategy,
                      const SsmBlockConfig& ssm, const ScanFn& scan = {});

}  // namespace xmamba
