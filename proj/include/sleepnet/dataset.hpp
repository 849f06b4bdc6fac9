#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "sleepnet/common.hpp"
#include "sleepnet/model.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

struct LabeledDataset {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  std::size_t class_count = 0;
  std::string split;                 // "train" or "test"
  std::vector<std::uint8_t> pixels;  // size * channels * height * width, planar
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::size_t example_values() const { return channels * height * width; }
};

struct SplitDataset {
  LabeledDataset train;
  LabeledDataset test;
};

// Per-channel standardization constants, computed once from the training
// split and recorded with the experiment artifact.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;
};

inline Normalization compute_normalization(const LabeledDataset& train) {
  Normalization norm;
  norm.mean.assign(train.channels, 0.0);
  norm.stddev.assign(train.channels, 0.0);
  const std::size_t plane = train.height * train.width;
  const std::size_t per_channel = train.size() * plane;
  if (per_channel == 0) throw DataError("compute_normalization: empty dataset");
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::uint8_t* ex = train.pixels.data() + i * train.example_values();
    for (std::size_t c = 0; c < train.channels; ++c) {
      const std::uint8_t* p = ex + c * plane;
      for (std::size_t j = 0; j < plane; ++j) norm.mean[c] += p[j] / 255.0;
    }
  }
  for (auto& m : norm.mean) m /= static_cast<double>(per_channel);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::uint8_t* ex = train.pixels.data() + i * train.example_values();
    for (std::size_t c = 0; c < train.channels; ++c) {
      const std::uint8_t* p = ex + c * plane;
      for (std::size_t j = 0; j < plane; ++j) {
        const double d = p[j] / 255.0 - norm.mean[c];
        norm.stddev[c] += d * d;
      }
    }
  }
  for (auto& s : norm.stddev) s = std::max(std::sqrt(s / static_cast<double>(per_channel)), 1e-8);
  return norm;
}

// Scale to [0,1], then standardize per channel.
template <typename T>
Tensor<T> normalized_images(const LabeledDataset& ds, std::span<const std::uint32_t> indices,
                            const Normalization& norm) {
  Tensor<T> out({indices.size(), ds.channels, ds.height, ds.width});
  const std::size_t plane = ds.height * ds.width;
  T* dst = out.data();
  for (const std::uint32_t idx : indices) {
    const std::uint8_t* ex = ds.pixels.data() + static_cast<std::size_t>(idx) * ds.example_values();
    for (std::size_t c = 0; c < ds.channels; ++c) {
      const std::uint8_t* p = ex + c * plane;
      const T mean = static_cast<T>(norm.mean[c]);
      const T inv = static_cast<T>(1.0 / norm.stddev[c]);
      for (std::size_t j = 0; j < plane; ++j) {
        *dst++ = (static_cast<T>(p[j]) / T{255} - mean) * inv;
      }
    }
  }
  return out;
}

// ---- IDX ------------------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::uint8_t b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw FormatError("truncated IDX header in " + path);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) |
         std::uint32_t(b[3]);
}

}  // namespace detail

// Standard IDX pair (magic 0x803 images / 0x801 labels, big-endian sizes).
// Grayscale planes are replicated up to `channels`.
inline LabeledDataset load_idx(const std::filesystem::path& images_path,
                               const std::filesystem::path& labels_path,
                               std::size_t channels = 1) {
  std::ifstream imgf(images_path, std::ios::binary);
  if (!imgf) throw DataError("cannot open IDX image file " + images_path.string());
  const std::uint32_t img_magic = detail::read_be32(imgf, images_path.string());
  if (img_magic != 0x00000803u) {
    throw FormatError("bad IDX image magic 0x" + to_hex(img_magic).substr(8) + " in " +
                      images_path.string());
  }
  const std::uint32_t count = detail::read_be32(imgf, images_path.string());
  const std::uint32_t height = detail::read_be32(imgf, images_path.string());
  const std::uint32_t width = detail::read_be32(imgf, images_path.string());

  std::ifstream lblf(labels_path, std::ios::binary);
  if (!lblf) throw DataError("cannot open IDX label file " + labels_path.string());
  const std::uint32_t lbl_magic = detail::read_be32(lblf, labels_path.string());
  if (lbl_magic != 0x00000801u) {
    throw FormatError("bad IDX label magic 0x" + to_hex(lbl_magic).substr(8) + " in " +
                      labels_path.string());
  }
  const std::uint32_t lbl_count = detail::read_be32(lblf, labels_path.string());
  if (lbl_count != count) {
    throw FormatError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                      std::to_string(lbl_count) + " labels");
  }

  LabeledDataset ds;
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  std::vector<std::uint8_t> raw(plane);
  ds.pixels.resize(static_cast<std::size_t>(count) * channels * plane);
  ds.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    imgf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(plane));
    if (!imgf) {
      throw FormatError("truncated IDX image payload at example " + std::to_string(i) + " in " +
                        images_path.string());
    }
    std::uint8_t* dst = ds.pixels.data() + static_cast<std::size_t>(i) * channels * plane;
    for (std::size_t c = 0; c < channels; ++c) {
      std::copy(raw.begin(), raw.end(), dst + c * plane);
    }
    std::uint8_t lbl;
    lblf.read(reinterpret_cast<char*>(&lbl), 1);
    if (!lblf) throw FormatError("truncated IDX labels at example " + std::to_string(i));
    ds.labels[i] = lbl;
  }
  ds.class_count = ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  return ds;
}

// ---- CIFAR ----------------------------------------------------------------

enum class CifarVariant { cifar10, cifar100 };

// One binary batch file. CIFAR-10 records: label + 3072 pixel bytes.
// CIFAR-100 records: coarse label + fine label + 3072 pixel bytes (the fine
// label is used). Pixels are row-major, channel-planar R,G,B.
inline void load_cifar_file(const std::filesystem::path& path, CifarVariant variant,
                            LabeledDataset& ds) {
  const std::size_t pixel_bytes = 3072;
  const std::size_t record = variant == CifarVariant::cifar10 ? 1 + pixel_bytes : 2 + pixel_bytes;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open CIFAR file " + path.string());
  in.seekg(0, std::ios::end);
  const std::uint64_t size = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  if (size == 0 || size % record != 0) {
    throw FormatError("CIFAR file " + path.string() + " has size " + std::to_string(size) +
                      ", not a multiple of the " + std::to_string(record) +
                      "-byte record (first bad offset " + std::to_string((size / record) * record) +
                      ")");
  }
  const std::size_t count = size / record;
  std::vector<std::uint8_t> buf(record);
  ds.pixels.reserve(ds.pixels.size() + count * pixel_bytes);
  ds.labels.reserve(ds.labels.size() + count);
  for (std::size_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(record));
    if (!in) {
      throw FormatError("truncated CIFAR record at offset " + std::to_string(i * record) + " in " +
                        path.string());
    }
    const int label = variant == CifarVariant::cifar10 ? buf[0] : buf[1];
    ds.labels.push_back(label);
    ds.pixels.insert(ds.pixels.end(), buf.begin() + static_cast<std::ptrdiff_t>(record - pixel_bytes),
                     buf.end());
  }
}

inline LabeledDataset load_cifar(const std::vector<std::filesystem::path>& files,
                                 CifarVariant variant) {
  LabeledDataset ds;
  ds.height = 32;
  ds.width = 32;
  ds.channels = 3;
  ds.class_count = variant == CifarVariant::cifar10 ? 10 : 100;
  for (const auto& f : files) load_cifar_file(f, variant, ds);
  for (const int label : ds.labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= ds.class_count) {
      throw FormatError("CIFAR label " + std::to_string(label) + " out of range");
    }
  }
  return ds;
}

// Standard directory layouts for the supported dataset variants.
inline SplitDataset load_dataset_root(const std::string& variant,
                                      const std::filesystem::path& root,
                                      std::size_t idx_channels = 1) {
  namespace fs = std::filesystem;
  SplitDataset out;
  if (variant == "idx") {
    auto pick = [&](const char* primary, const char* fallback) -> fs::path {
      if (fs::exists(root / primary)) return root / primary;
      if (fallback && fs::exists(root / fallback)) return root / fallback;
      return root / primary;
    };
    out.train = load_idx(pick("train-images-idx3-ubyte", nullptr),
                         pick("train-labels-idx1-ubyte", nullptr), idx_channels);
    out.test = load_idx(pick("test-images-idx3-ubyte", "t10k-images-idx3-ubyte"),
                        pick("test-labels-idx1-ubyte", "t10k-labels-idx1-ubyte"), idx_channels);
  } else if (variant == "cifar10") {
    std::vector<fs::path> train_files;
    for (int i = 1; i <= 5; ++i) {
      train_files.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
    }
    out.train = load_cifar(train_files, CifarVariant::cifar10);
    out.test = load_cifar({root / "test_batch.bin"}, CifarVariant::cifar10);
  } else if (variant == "cifar100") {
    out.train = load_cifar({root / "train.bin"}, CifarVariant::cifar100);
    out.test = load_cifar({root / "test.bin"}, CifarVariant::cifar100);
  } else {
    throw ConfigError("unknown dataset variant '" + variant + "'");
  }
  const std::size_t classes = std::max(out.train.class_count, out.test.class_count);
  out.train.class_count = out.test.class_count = classes;
  out.train.split = "train";
  out.test.split = "test";
  return out;
}

// ---- task streams -----------------------------------------------------------

struct Task {
  std::vector<int> classes;
  std::vector<std::uint32_t> train_indices;
  std::vector<std::uint32_t> test_indices;
};

struct TaskStream {
  std::vector<Task> tasks;
  std::size_t num_classes = 0;     // classifier allocation size
  std::vector<int> class_to_task;  // -1 when a class is not covered
  std::vector<int> class_order;    // assignment order actually used

  // Active-class mask after tasks 1..n (1-based n).
  std::vector<std::uint8_t> mask_through(std::size_t n) const {
    std::vector<std::uint8_t> mask(num_classes, 0);
    for (std::size_t t = 0; t < n && t < tasks.size(); ++t) {
      for (const int c : tasks[t].classes) mask[static_cast<std::size_t>(c)] = 1;
    }
    return mask;
  }

  std::size_t classes_seen(std::size_t n) const {
    std::size_t total = 0;
    for (std::size_t t = 0; t < n && t < tasks.size(); ++t) total += tasks[t].classes.size();
    return total;
  }
};

// Partition classes into `task_count` blocks of `classes_per_task`. Default
// order is ascending class index; a seeded shuffle is available behind the
// flag. Every example of a covered class lands in exactly one task.
inline TaskStream split_tasks(const LabeledDataset& train, const LabeledDataset& test,
                              std::size_t task_count, std::size_t classes_per_task,
                              bool shuffle_classes = false, std::uint64_t seed = 0) {
  const std::size_t classes = train.class_count;
  if (task_count * classes_per_task > classes) {
    throw ConfigError("split_tasks: " + std::to_string(task_count) + " tasks x " +
                      std::to_string(classes_per_task) + " classes exceed the " +
                      std::to_string(classes) + " available classes");
  }
  std::vector<int> order(classes);
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_classes) {
    Rng rng(seed ^ 0xc1a55e5ull);
    for (std::size_t i = classes; i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.below(i));
      std::swap(order[i - 1], order[j]);
    }
  }
  TaskStream stream;
  stream.num_classes = classes;
  stream.class_order = order;
  stream.class_to_task.assign(classes, -1);
  stream.tasks.resize(task_count);
  for (std::size_t t = 0; t < task_count; ++t) {
    for (std::size_t j = 0; j < classes_per_task; ++j) {
      const int cls = order[t * classes_per_task + j];
      stream.tasks[t].classes.push_back(cls);
      stream.class_to_task[static_cast<std::size_t>(cls)] = static_cast<int>(t);
    }
  }
  for (std::uint32_t i = 0; i < train.size(); ++i) {
    const int t = stream.class_to_task[static_cast<std::size_t>(train.labels[i])];
    if (t >= 0) stream.tasks[static_cast<std::size_t>(t)].train_indices.push_back(i);
  }
  for (std::uint32_t i = 0; i < test.size(); ++i) {
    const int t = stream.class_to_task[static_cast<std::size_t>(test.labels[i])];
    if (t >= 0) stream.tasks[static_cast<std::size_t>(t)].test_indices.push_back(i);
  }
  return stream;
}

// Features of the given examples under a frozen extractor.
template <typename T>
struct FeatureSet {
  Tensor<T> features;       // [n, feature_len]
  std::vector<int> labels;  // global class ids
};

template <typename T>
FeatureSet<T> compute_features(const LabeledDataset& ds, std::span<const std::uint32_t> indices,
                               const Normalization& norm, const ConvFeatureExtractor<T>& fe) {
  FeatureSet<T> out;
  out.features = Tensor<T>({indices.size(), fe.feature_len()});
  out.labels.reserve(indices.size());
  // Batch the frozen forward pass to bound the im2col scratch size.
  const std::size_t chunk = 256;
  std::size_t done = 0;
  while (done < indices.size()) {
    const std::size_t n = std::min(chunk, indices.size() - done);
    Tensor<T> imgs = normalized_images<T>(ds, indices.subspan(done, n), norm);
    Tensor<T> feats = fe.extract(imgs);
    std::copy(feats.values().begin(), feats.values().end(),
              out.features.data() + done * fe.feature_len());
    done += n;
  }
  for (const std::uint32_t idx : indices) out.labels.push_back(ds.labels[idx]);
  return out;
}

// Deterministic subsample without replacement; returns `indices` itself when
// cap covers it.
inline std::vector<std::uint32_t> subsample_indices(std::span<const std::uint32_t> indices,
                                                    std::size_t cap, Rng& rng) {
  std::vector<std::uint32_t> out(indices.begin(), indices.end());
  if (out.size() <= cap) return out;
  for (std::size_t i = 0; i < cap; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(out.size() - i));
    std::swap(out[i], out[j]);
  }
  out.resize(cap);
  return out;
}

}  // namespace sleepnet
