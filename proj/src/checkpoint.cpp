#include "xmamba/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>

namespace xmamba {

namespace {

std::string dims_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(shape[i]);
  }
  s += ')';
  return s;
}

Shape parse_dims(const std::string& s) {
  if (s.size() < 2 || s.front() != '(' || s.back() != ')') {
    throw ValueError("checkpoint manifest: bad shape field '" + s + "'");
  }
  Shape shape;
  std::string body = s.substr(1, s.size() - 2);
  if (body.empty()) return shape;  // rank-0 scalar
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) shape.push_back(std::stoull(item));
  return shape;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  std::ofstream blob(dir / "weights.bin", std::ios::binary);
  if (!manifest || !blob) {
    throw ValueError("save_checkpoint: cannot write to " + dir.string());
  }
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : tensors) {
    manifest << name << " f32 " << dims_str(tensor.shape()) << ' ' << offset << '\n';
    for (double v : tensor.data()) {
      const float f = static_cast<float>(v);
      blob.write(reinterpret_cast<const char*>(&f), sizeof(float));
    }
    offset += tensor.numel() * sizeof(float);
  }
  if (!manifest.good() || !blob.good()) {
    throw ValueError("save_checkpoint: write failure in " + dir.string());
  }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  std::ifstream blob(dir / "weights.bin", std::ios::binary);
  if (!manifest || !blob) {
    throw ValueError("load_checkpoint: cannot read " + dir.string());
  }
  std::vector<std::pair<std::string, Tensor>> out;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, dtype, dims;
    std::uint64_t offset;
    if (!(ss >> name >> dtype >> dims >> offset)) {
      throw ValueError("load_checkpoint: malformed manifest line '" + line + "'");
    }
    if (dtype != "f32") {
      throw ValueError("load_checkpoint: unsupported dtype '" + dtype + "'");
    }
    Shape shape = parse_dims(dims);
    const std::size_t n = numel_of(shape);
    std::vector<double> data(n);
    blob.seekg(static_cast<std::streamoff>(offset));
    for (std::size_t i = 0; i < n; ++i) {
      float f;
      blob.read(reinterpret_cast<char*>(&f), sizeof(float));
      if (!blob) {
        throw ValueError("load_checkpoint: blob truncated while reading " + name);
      }
      data[i] = static_cast<double>(f);
    }
    out.emplace_back(name, Tensor::from_data(std::move(shape), std::move(data)));
  }
  return out;
}

void load_checkpoint_into(const std::filesystem::path& dir,
                          std::vector<std::pair<std::string, Tensor>> dest) {
  auto loaded = load_checkpoint(dir);
  std::map<std::string, Tensor> by_name(loaded.begin(), loaded.end());
  for (auto& [name, tensor] : dest) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw ValueError("load_checkpoint_into: checkpoint misses tensor '" + name + "'");
    }
    if (it->second.shape() != tensor.shape()) {
      throw ShapeMismatchError("load_checkpoint_into: '" + name + "' has shape " +
                               shape_str(it->second.shape()) + ", expected " +
                               shape_str(tensor.shape()));
    }
    auto dst = tensor.data_mut();
    auto src = it->second.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace xmamba
