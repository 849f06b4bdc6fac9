#pragma once

#include <cstdint>
#include <vector>

#include "sleepnet/adam.hpp"
#include "sleepnet/dataset.hpp"
#include "sleepnet/graph.hpp"
#include "sleepnet/model.hpp"

namespace sleepnet {

struct PretrainConfig {
  std::size_t iterations = 2000;
  std::size_t batch = 64;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  std::size_t eval_subsample = 1000;  // test rows for the accuracy estimate
};

struct PretrainResult {
  double test_accuracy = 0.0;
};

// Train the conv stack plus a temporary linear head with cross-entropy on
// the pretraining dataset, then discard the head and freeze the extractor.
template <typename T>
ConvFeatureExtractor<T> pretrain_extractor(const SplitDataset& data, const Normalization& norm,
                                           const std::vector<std::size_t>& channels,
                                           const PretrainConfig& cfg,
                                           PretrainResult* result = nullptr) {
  if (data.train.size() == 0) throw DataError("pretrain: empty training split");
  Rng master(cfg.seed);
  Rng init = master.spawn(1);
  Rng batch_rng = master.spawn(2);

  ConvFeatureExtractor<T> fe(data.train.channels, data.train.height, channels, &init);
  Dense<T> head(fe.feature_len(), data.train.class_count, init);

  Adam<T> adam({cfg.lr, 0.9, 0.999, 1e-8});
  std::vector<std::uint32_t> batch_indices(cfg.batch);
  for (std::size_t iter = 1; iter <= cfg.iterations; ++iter) {
    for (auto& idx : batch_indices) {
      idx = static_cast<std::uint32_t>(batch_rng.below(data.train.size()));
    }
    Tensor<T> images = normalized_images<T>(data.train, batch_indices, norm);
    std::vector<int> labels;
    labels.reserve(cfg.batch);
    for (const auto idx : batch_indices) labels.push_back(data.train.labels[idx]);

    Graph<T> g;
    auto conv_vars = fe.bind(g);
    auto head_w = g.leaf(head.w, true);
    auto head_b = g.leaf(head.b, true);
    auto imgs = g.constant(std::move(images));
    auto feats = fe.forward(g, conv_vars, imgs);
    auto flat = g.reshape(feats, {cfg.batch, fe.feature_len()});
    auto logits = g.add_rowwise(g.matmul(flat, head_w), head_b);
    auto loss = g.cross_entropy(logits, labels, {});
    if (!std::isfinite(static_cast<double>(g.scalar(loss)))) {
      throw NumericError("pretrain: non-finite loss at iteration " + std::to_string(iter));
    }
    g.backward(loss);

    auto conv_params = fe.params();
    std::vector<ParamView<T>> params = conv_params;
    params.push_back({"head.w", &head.w, true, true});
    params.push_back({"head.b", &head.b, true, false});
    std::vector<std::span<const T>> grads;
    for (std::size_t i = 0; i < conv_vars.size(); ++i) grads.push_back(g.grad(conv_vars[i]));
    grads.push_back(g.grad(head_w));
    grads.push_back(g.grad(head_b));
    adam.step(params, grads);
  }

  fe.freeze();

  if (result) {
    Rng eval_rng = master.spawn(3);
    std::vector<std::uint32_t> all(data.test.size());
    for (std::uint32_t i = 0; i < data.test.size(); ++i) all[i] = i;
    const auto subset = subsample_indices(all, cfg.eval_subsample, eval_rng);
    std::size_t correct = 0;
    const std::size_t chunk = 128;
    for (std::size_t start = 0; start < subset.size(); start += chunk) {
      const std::size_t n = std::min(chunk, subset.size() - start);
      std::span<const std::uint32_t> part(subset.data() + start, n);
      Tensor<T> images = normalized_images<T>(data.test, part, norm);
      Tensor<T> feats = fe.extract(images);
      Tensor<T> logits = detail::dense_eval(feats, head.w, head.b);
      for (std::size_t r = 0; r < n; ++r) {
        const std::size_t pred =
            kernels::masked_argmax(logits.data() + r * logits.dim(1), logits.dim(1), {});
        if (static_cast<int>(pred) == data.test.labels[part[r]]) ++correct;
      }
    }
    result->test_accuracy = subset.empty() ? 0.0 : static_cast<double>(correct) / subset.size();
  }
  return fe;
}

}  // namespace sleepnet
