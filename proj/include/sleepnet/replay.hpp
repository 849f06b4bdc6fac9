#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sleepnet/dataset.hpp"
#include "sleepnet/model.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

template <typename T>
struct ReplayBatch {
  enum class Kind { veridical, generative };

  Kind kind = Kind::veridical;
  Tensor<T> features;            // h (veridical) or h_hat (generative)
  std::vector<int> labels;       // hard targets, veridical only
  Tensor<T> soft_targets;        // teacher distributions, generative only
};

// End-of-previous-task model copy; the only source of generative replay while
// training the next task. Never mutated.
template <typename T>
struct FrozenSnapshot {
  SleepModel<T> model;
  std::size_t tasks_represented = 0;         // N-1
  std::vector<std::uint8_t> class_mask;      // classes seen through N-1
};

// Sample latent draws from the prior, decode them into feature samples and
// label them with the snapshot's own (masked) classifier output.
template <typename T>
ReplayBatch<T> generate_replay(const FrozenSnapshot<T>& snapshot, std::size_t batch,
                               Rng& noise_rng) {
  if (snapshot.tasks_represented == 0) {
    throw Error("generate_replay: no previous task to replay during task 1");
  }
  const std::size_t latent = snapshot.model.dims().latent;
  Tensor<T> z({batch, latent});
  fill_normal<T>(z.values(), noise_rng);
  ReplayBatch<T> out;
  out.kind = ReplayBatch<T>::Kind::generative;
  out.features = snapshot.model.decode_eval(z);
  const auto enc = snapshot.model.encode_eval(out.features);
  out.soft_targets = snapshot.model.classify(enc.penultimate, snapshot.class_mask);
  return out;
}

// Uniform minibatch of current-task features with hard labels attached.
template <typename T>
ReplayBatch<T> veridical_batch(const FeatureSet<T>& task_data, std::size_t batch, Rng& rng) {
  const std::size_t n = task_data.labels.size();
  if (n == 0) throw DataError("veridical_batch: task has no training data");
  const std::size_t width = task_data.features.dim(1);
  ReplayBatch<T> out;
  out.kind = ReplayBatch<T>::Kind::veridical;
  out.features = Tensor<T>({batch, width});
  out.labels.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t row = static_cast<std::size_t>(rng.below(n));
    const T* src = task_data.features.data() + row * width;
    std::copy(src, src + width, out.features.data() + i * width);
    out.labels.push_back(task_data.labels[row]);
  }
  return out;
}

}  // namespace sleepnet
