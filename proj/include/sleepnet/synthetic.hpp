#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sleepnet/dataset.hpp"

namespace sleepnet {

// Small synthetic image benchmark: one smoothed random template per class.
// A sample is its class template plus a random mix of class-independent
// "style" patterns (shared smooth basis images plus a global brightness
// shift) plus pixel noise. The style factors are nuisance dimensions: they
// never move the class boundaries, but the generator has to model them, so
// reconstruction stays non-trivial and replay batches span the style space.
struct SynthSpec {
  std::size_t classes = 10;
  std::size_t image_size = 16;
  std::size_t train_per_class = 200;
  std::size_t test_per_class = 40;
  double noise = 0.12;        // gaussian sigma in [0,1] pixel units
  double brightness = 0.15;   // per-sample shift drawn uniformly from [-b, b]
  std::size_t style_dims = 4; // shared smooth basis patterns
  double style = 0.3;         // per-sample style coefficients from [-s, s]
  // Difficulty ramp: templates of the upper half of the class range are
  // blended toward a shared hub pattern, making late classes confusable
  // while early classes stay well separated.
  double late_blend = 0.0;
  std::uint64_t seed = 99;
};

namespace detail {

inline std::vector<double> blur3x3(const std::vector<double>& img, std::size_t n) {
  std::vector<double> out(img.size());
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = static_cast<int>(y) + dy;
          const int xx = static_cast<int>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<int>(n) || xx >= static_cast<int>(n)) continue;
          acc += img[static_cast<std::size_t>(yy) * n + static_cast<std::size_t>(xx)];
          ++cnt;
        }
      }
      out[y * n + x] = acc / cnt;
    }
  }
  return out;
}

inline void fill_split(LabeledDataset& ds, const std::vector<std::vector<double>>& templates,
                       const std::vector<std::vector<double>>& styles, const SynthSpec& spec,
                       std::size_t per_class, Rng& rng) {
  const std::size_t n = ds.height;
  const std::size_t area = n * n;
  ds.pixels.reserve(templates.size() * per_class * area);
  std::vector<double> sample(area);
  for (std::size_t cls = 0; cls < templates.size(); ++cls) {
    for (std::size_t i = 0; i < per_class; ++i) {
      sample = templates[cls];
      const double shift = spec.brightness * (2.0 * rng.uniform() - 1.0);
      for (auto& v : sample) v += shift;
      for (const auto& style : styles) {
        const double coeff = spec.style * (2.0 * rng.uniform() - 1.0);
        for (std::size_t j = 0; j < area; ++j) sample[j] += coeff * style[j];
      }
      for (const double t : sample) {
        const double v = std::clamp(t + spec.noise * rng.normal(), 0.0, 1.0);
        ds.pixels.push_back(static_cast<std::uint8_t>(v * 255.0 + 0.5));
      }
      ds.labels.push_back(static_cast<int>(cls));
    }
  }
}

}  // namespace detail

inline SplitDataset make_synthetic(const SynthSpec& spec) {
  Rng rng(spec.seed);
  const std::size_t n = spec.image_size;
  std::vector<std::vector<double>> templates;
  for (std::size_t cls = 0; cls < spec.classes; ++cls) {
    std::vector<double> base(n * n);
    for (auto& v : base) v = 0.1 + 0.8 * rng.uniform();
    templates.push_back(detail::blur3x3(base, n));
  }
  if (spec.late_blend > 0.0 && spec.classes >= 2) {
    std::vector<double> hub(n * n);
    for (auto& v : hub) v = 0.1 + 0.8 * rng.uniform();
    hub = detail::blur3x3(hub, n);
    for (std::size_t cls = spec.classes / 2; cls < spec.classes; ++cls) {
      for (std::size_t j = 0; j < n * n; ++j) {
        templates[cls][j] =
            (1.0 - spec.late_blend) * templates[cls][j] + spec.late_blend * hub[j];
      }
    }
  }
  std::vector<std::vector<double>> styles;
  for (std::size_t k = 0; k < spec.style_dims; ++k) {
    std::vector<double> base(n * n);
    for (auto& v : base) v = rng.uniform() - 0.5;  // zero-mean patterns
    styles.push_back(detail::blur3x3(base, n));
  }
  SplitDataset out;
  for (LabeledDataset* ds : {&out.train, &out.test}) {
    ds->height = n;
    ds->width = n;
    ds->channels = 1;
    ds->class_count = spec.classes;
  }
  out.train.split = "train";
  out.test.split = "test";
  Rng train_rng = rng.spawn(11);
  Rng test_rng = rng.spawn(12);
  detail::fill_split(out.train, templates, styles, spec, spec.train_per_class, train_rng);
  detail::fill_split(out.test, templates, styles, spec, spec.test_per_class, test_rng);
  return out;
}

namespace detail {

inline void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::uint8_t b[4] = {static_cast<std::uint8_t>(v >> 24), static_cast<std::uint8_t>(v >> 16),
                             static_cast<std::uint8_t>(v >> 8), static_cast<std::uint8_t>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace detail

// Serialize a single-channel dataset as a standard IDX pair.
inline void write_idx(const LabeledDataset& ds, const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
  if (ds.channels != 1) throw DataError("write_idx: only single-channel datasets supported");
  std::ofstream img(images_path, std::ios::binary | std::ios::trunc);
  if (!img) throw DataError("cannot write " + images_path.string());
  detail::write_be32(img, 0x00000803u);
  detail::write_be32(img, static_cast<std::uint32_t>(ds.size()));
  detail::write_be32(img, static_cast<std::uint32_t>(ds.height));
  detail::write_be32(img, static_cast<std::uint32_t>(ds.width));
  img.write(reinterpret_cast<const char*>(ds.pixels.data()),
            static_cast<std::streamsize>(ds.pixels.size()));

  std::ofstream lbl(labels_path, std::ios::binary | std::ios::trunc);
  if (!lbl) throw DataError("cannot write " + labels_path.string());
  detail::write_be32(lbl, 0x00000801u);
  detail::write_be32(lbl, static_cast<std::uint32_t>(ds.size()));
  for (const int label : ds.labels) {
    const std::uint8_t b = static_cast<std::uint8_t>(label);
    lbl.write(reinterpret_cast<const char*>(&b), 1);
  }
}

// Write train/test IDX pairs using the loader's expected filenames.
inline void write_idx_root(const SplitDataset& data, const std::filesystem::path& root) {
  std::filesystem::create_directories(root);
  write_idx(data.train, root / "train-images-idx3-ubyte", root / "train-labels-idx1-ubyte");
  write_idx(data.test, root / "test-images-idx3-ubyte", root / "test-labels-idx1-ubyte");
}

}  // namespace sleepnet
