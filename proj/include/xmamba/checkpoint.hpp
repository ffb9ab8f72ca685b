#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "xmamba/tensor.hpp"

namespace xmamba {

// Checkpoint layout: a directory holding
//   manifest.txt  one line per tensor: "<name> f32 (d0,d1,...) <byte offset>"
//   weights.bin   little-endian float32 blob, tensors packed in manifest order
// Values are down-cast f64 -> f32 on save; a round trip is value-exact at f32.

void save_checkpoint(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors);

std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::filesystem::path& dir);

// Copies checkpoint values into same-named destination tensors in place.
// Throws ValueError on missing names, ShapeMismatchError on shape drift.
void load_checkpoint_into(const std::filesystem::path& dir,
                          std::vector<std::pair<std::string, Tensor>> dest);

}  // namespace xmamba
