#include "xmamba/dataset.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "xmamba/checkpoint.hpp"
#include "xmamba/rng.hpp"

namespace xmamba {

namespace {

constexpr std::size_t kJointsPerHand = 21;
constexpr std::size_t kFeatures = 2 * kJointsPerHand * 3;  // 126

// Fixed joint template: wrist plus 5 fingers x 4 joints, in a fan layout.
void joint_template(std::size_t j, double& ox, double& oy) {
  if (j == 0) {
    ox = 0.0;
    oy = 0.0;
    return;
  }
  const std::size_t finger = (j - 1) / 4;       // 0..4
  const std::size_t segment = (j - 1) % 4 + 1;  // 1..4
  const double spread = (static_cast<double>(finger) - 2.0) * 0.45;  // radians
  const double reach = 0.3 + 0.25 * static_cast<double>(segment);
  ox = reach * std::sin(spread);
  oy = reach * std::cos(spread);
}

}  // namespace

void SyntheticDatasetSpec::validate() const {
  if (num_classes < 2) throw ValueError("SyntheticDatasetSpec: need >= 2 classes");
  if (samples_per_class < 1) throw ValueError("SyntheticDatasetSpec: empty classes");
  if (frames < 1 || height < 4 || width < 4) {
    throw ValueError("SyntheticDatasetSpec: degenerate frame geometry");
  }
  if (!(occlusion_prob >= 0.0 && occlusion_prob <= 1.0)) {
    throw ValueError("SyntheticDatasetSpec: occlusion_prob must lie in [0,1]");
  }
  if (keypoint_noise < 0.0) {
    throw ValueError("SyntheticDatasetSpec: keypoint_noise must be >= 0");
  }
}

Dataset generate_synthetic(const SyntheticDatasetSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  Dataset ds;
  ds.spec = spec;
  ds.samples.reserve(spec.total());

  const std::size_t t_n = spec.frames, h_n = spec.height, w_n = spec.width;
  const double blob_sigma = std::max(0.9, static_cast<double>(std::min(h_n, w_n)) / 24.0);

  for (std::size_t cls = 0; cls < spec.num_classes; ++cls) {
    // Class signature: frequency, direction of rotation and articulation
    // depth. Classes are separable through either stream.
    const double freq = 0.75 + 0.5 * static_cast<double>(cls);
    const double direction = (cls % 2 == 0) ? 1.0 : -1.0;
    const double articulation = 0.25 + 0.15 * static_cast<double>(cls % 3);
    const double base_phase = 2.0 * M_PI * static_cast<double>(cls) /
                              static_cast<double>(spec.num_classes);

    for (std::size_t s = 0; s < spec.samples_per_class; ++s) {
      const double jitter = rng.uniform(0.0, 0.6);
      std::vector<double> clean(t_n * kFeatures);

      for (std::size_t t = 0; t < t_n; ++t) {
        const double tau = static_cast<double>(t) / static_cast<double>(t_n);
        const double theta = 2.0 * M_PI * freq * tau + base_phase + jitter;
        for (std::size_t hand = 0; hand < 2; ++hand) {
          const double side = hand == 0 ? -1.0 : 1.0;
          const double cx = 0.5 + side * (0.22 + 0.08 * std::cos(theta));
          const double cy = 0.5 + direction * 0.2 * std::sin(theta + side * 0.5);
          const double cz = 0.5 + 0.15 * std::sin(theta * 0.5 + hand);
          const double psi = direction * articulation * std::sin(theta) + side * 0.3;
          const double cos_p = std::cos(psi), sin_p = std::sin(psi);
          const double scale = 0.07 * (1.0 + 0.3 * std::sin(theta + hand));
          for (std::size_t j = 0; j < kJointsPerHand; ++j) {
            double ox, oy;
            joint_template(j, ox, oy);
            const double rx = (cos_p * ox - sin_p * oy) * scale;
            const double ry = (sin_p * ox + cos_p * oy) * scale;
            double* kp = clean.data() + t * kFeatures + (hand * kJointsPerHand + j) * 3;
            kp[0] = cx + rx;
            kp[1] = cy + ry;
            kp[2] = cz + 0.02 * static_cast<double>(j);
          }
        }
      }

      // Render the video from the clean joints, then add sensor noise to the
      // skeleton stream only.
      std::vector<double> img(t_n * h_n * w_n * 3, 0.0);
      const int win = static_cast<int>(std::ceil(3.0 * blob_sigma));
      for (std::size_t t = 0; t < t_n; ++t) {
        for (std::size_t hand = 0; hand < 2; ++hand) {
          for (std::size_t j = 0; j < kJointsPerHand; ++j) {
            const double* kp =
                clean.data() + t * kFeatures + (hand * kJointsPerHand + j) * 3;
            const double px = kp[0] * static_cast<double>(w_n - 1);
            const double py = kp[1] * static_cast<double>(h_n - 1);
            const int x0 = static_cast<int>(px), y0 = static_cast<int>(py);
            for (int dy = -win; dy <= win; ++dy) {
              const int y = y0 + dy;
              if (y < 0 || y >= static_cast<int>(h_n)) continue;
              for (int dx = -win; dx <= win; ++dx) {
                const int x = x0 + dx;
                if (x < 0 || x >= static_cast<int>(w_n)) continue;
                const double ddx = static_cast<double>(x) - px;
                const double ddy = static_cast<double>(y) - py;
                const double g =
                    std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * blob_sigma * blob_sigma));
                img[((t * h_n + y) * w_n + x) * 3 + hand] += g;
              }
            }
          }
        }
      }
      for (std::size_t i = 0; i < t_n * h_n * w_n; ++i) {
        double& r = img[i * 3 + 0];
        double& g = img[i * 3 + 1];
        r = std::min(1.0, r);
        g = std::min(1.0, g);
        img[i * 3 + 2] = 0.5 * (r + g);
      }

      std::vector<double> kps = clean;
      if (spec.keypoint_noise > 0.0) {
        for (double& v : kps) v += rng.normal(0.0, spec.keypoint_noise);
      }

      for (std::size_t t = 0; t < t_n; ++t) {
        if (spec.occlusion_prob > 0.0 && rng.bernoulli(spec.occlusion_prob)) {
          std::fill(img.begin() + t * h_n * w_n * 3,
                    img.begin() + (t + 1) * h_n * w_n * 3, 0.0);
        }
      }

      Sample sample;
      sample.frames = Tensor::from_data({t_n, h_n, w_n, 3}, std::move(img));
      sample.keypoints = Tensor::from_data({t_n, kFeatures}, std::move(kps));
      sample.label = static_cast<int>(cls);
      ds.samples.push_back(std::move(sample));
    }
  }
  return ds;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  std::filesystem::create_directories(dir);
  nlohmann::json meta;
  const auto& s = dataset.spec;
  meta["num_classes"] = s.num_classes;
  meta["samples_per_class"] = s.samples_per_class;
  meta["frames"] = s.frames;
  meta["height"] = s.height;
  meta["width"] = s.width;
  meta["keypoint_noise"] = s.keypoint_noise;
  meta["occlusion_prob"] = s.occlusion_prob;
  meta["seed"] = s.seed;
  std::vector<int> labels;
  labels.reserve(dataset.samples.size());
  for (const auto& sample : dataset.samples) labels.push_back(sample.label);
  meta["labels"] = labels;
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out.good()) throw ValueError("save_dataset: cannot write " + dir.string());

  std::vector<std::pair<std::string, Tensor>> tensors;
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample%05zu/", i);
    tensors.emplace_back(std::string(buf) + "frames", dataset.samples[i].frames);
    tensors.emplace_back(std::string(buf) + "keypoints", dataset.samples[i].keypoints);
  }
  save_checkpoint(dir, tensors);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw ValueError("load_dataset: cannot read " + (dir / "meta.json").string());
  nlohmann::json meta = nlohmann::json::parse(in);
  Dataset ds;
  ds.spec.num_classes = meta.at("num_classes").get<std::size_t>();
  ds.spec.samples_per_class = meta.at("samples_per_class").get<std::size_t>();
  ds.spec.frames = meta.at("frames").get<std::size_t>();
  ds.spec.height = meta.at("height").get<std::size_t>();
  ds.spec.width = meta.at("width").get<std::size_t>();
  ds.spec.keypoint_noise = meta.at("keypoint_noise").get<double>();
  ds.spec.occlusion_prob = meta.at("occlusion_prob").get<double>();
  ds.spec.seed = meta.at("seed").get<std::uint64_t>();
  std::vector<int> labels = meta.at("labels").get<std::vector<int>>();

  auto tensors = load_checkpoint(dir);
  if (tensors.size() != labels.size() * 2) {
    throw ValueError("load_dataset: tensor count does not match labels");
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    Sample s;
    s.frames = tensors[2 * i].second;
    s.keypoints = tensors[2 * i + 1].second;
    s.label = labels[i];
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace xmamba
