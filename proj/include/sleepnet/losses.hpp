#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

#include "sleepnet/graph.hpp"
#include "sleepnet/model.hpp"
#include "sleepnet/replay.hpp"

namespace sleepnet {

// Current/replay mixing coefficients for task N: (1/N, 1-1/N). Without a
// replay batch the current term carries weight 1 and no replay term exists.
struct LossWeights {
  double current = 1.0;
  double replay = 0.0;
};

inline LossWeights loss_weights(std::size_t task_index, bool has_replay) {
  if (!has_replay) return {1.0, 0.0};
  const double n = static_cast<double>(task_index);
  return {1.0 / n, 1.0 - 1.0 / n};
}

template <typename T>
struct LossVars {
  using Var = typename Graph<T>::Var;
  Var total, classifier, generator;
  Var classifier_current, classifier_replay;
  Var generator_current, generator_replay;
  LossWeights weights;
  bool has_replay = false;
};

// Scalar view of a fully built loss, checked for finiteness.
struct LossBundle {
  double total = 0, classifier = 0, generator = 0;
  double classifier_current = 0, classifier_replay = 0;
  double generator_current = 0, generator_replay = 0;
  LossWeights weights;
  bool has_replay = false;
};

// VAE objective for one feature batch: squared reconstruction error of
// decode(sample(encode(x))) plus the analytic divergence of the latent
// posterior from the standard normal, both averaged over the batch.
template <typename T>
typename Graph<T>::Var generator_objective(Graph<T>& g, const SleepModel<T>& model,
                                           const typename SleepModel<T>::Bound& bound,
                                           typename Graph<T>::Var features,
                                           const Tensor<T>& targets, Rng& noise_rng) {
  const auto enc = model.encode(g, bound, features);
  Tensor<T> noise(g.value(enc.mu).shape());
  fill_normal<T>(noise.values(), noise_rng);
  auto z = g.gaussian_sample(enc.mu, enc.log_var, noise);
  auto recon = model.decode(g, bound, z);
  return g.add(g.squared_error(recon, targets), g.gaussian_prior_divergence(enc.mu, enc.log_var));
}

// Builds L = L^C + L^G on the tape. `generative` must be null exactly when
// task_index == 1 or REM replay is disabled.
template <typename T>
LossVars<T> build_losses(Graph<T>& g, const SleepModel<T>& model,
                         const typename SleepModel<T>::Bound& bound,
                         const ReplayBatch<T>& veridical, const ReplayBatch<T>* generative,
                         std::size_t task_index, std::span<const std::uint8_t> mask_seen,
                         T temperature, Rng& noise_rng) {
  if (veridical.kind != ReplayBatch<T>::Kind::veridical) {
    throw Error("build_losses: current-task batch must be veridical");
  }
  if (generative && generative->kind != ReplayBatch<T>::Kind::generative) {
    throw Error("build_losses: replay batch must be generative");
  }
  if (generative && task_index == 1) {
    throw Error("build_losses: replay batch supplied during task 1");
  }

  LossVars<T> out;
  out.has_replay = generative != nullptr;
  out.weights = loss_weights(task_index, out.has_replay);
  std::vector<std::uint8_t> mask(mask_seen.begin(), mask_seen.end());

  auto h = g.constant(veridical.features);
  const auto enc = model.encode(g, bound, h);
  auto logits = model.classifier_logits(g, bound, enc.penultimate);
  out.classifier_current = g.cross_entropy(logits, veridical.labels, mask);

  {
    Tensor<T> noise(g.value(enc.mu).shape());
    fill_normal<T>(noise.values(), noise_rng);
    auto z = g.gaussian_sample(enc.mu, enc.log_var, noise);
    auto recon = model.decode(g, bound, z);
    out.generator_current = g.add(g.squared_error(recon, veridical.features),
                                  g.gaussian_prior_divergence(enc.mu, enc.log_var));
  }

  if (out.has_replay) {
    auto h_hat = g.constant(generative->features);
    const auto enc_r = model.encode(g, bound, h_hat);
    auto logits_r = model.classifier_logits(g, bound, enc_r.penultimate);
    out.classifier_replay =
        g.distill_cross_entropy(logits_r, generative->soft_targets, mask, temperature);
    {
      Tensor<T> noise(g.value(enc_r.mu).shape());
      fill_normal<T>(noise.values(), noise_rng);
      auto z = g.gaussian_sample(enc_r.mu, enc_r.log_var, noise);
      auto recon = model.decode(g, bound, z);
      out.generator_replay = g.add(g.squared_error(recon, generative->features),
                                   g.gaussian_prior_divergence(enc_r.mu, enc_r.log_var));
    }
    const T wc = static_cast<T>(out.weights.current);
    const T wr = static_cast<T>(out.weights.replay);
    out.classifier = g.add(g.scale(out.classifier_current, wc), g.scale(out.classifier_replay, wr));
    out.generator = g.add(g.scale(out.generator_current, wc), g.scale(out.generator_replay, wr));
  } else {
    out.classifier = out.classifier_current;
    out.generator = out.generator_current;
  }
  out.total = g.add(out.classifier, out.generator);
  return out;
}

// Every loss evaluation is checked; a non-finite component aborts the run
// with the component named.
template <typename T>
LossBundle read_losses(Graph<T>& g, const LossVars<T>& vars, const std::string& context) {
  LossBundle b;
  b.weights = vars.weights;
  b.has_replay = vars.has_replay;
  b.total = static_cast<double>(g.scalar(vars.total));
  b.classifier = static_cast<double>(g.scalar(vars.classifier));
  b.generator = static_cast<double>(g.scalar(vars.generator));
  b.classifier_current = static_cast<double>(g.scalar(vars.classifier_current));
  b.generator_current = static_cast<double>(g.scalar(vars.generator_current));
  if (vars.has_replay) {
    b.classifier_replay = static_cast<double>(g.scalar(vars.classifier_replay));
    b.generator_replay = static_cast<double>(g.scalar(vars.generator_replay));
  }
  for (const auto& [name, value] :
       {std::pair<const char*, double>{"total", b.total},
        {"classifier", b.classifier},
        {"generator", b.generator},
        {"classifier_current", b.classifier_current},
        {"classifier_replay", b.classifier_replay},
        {"generator_current", b.generator_current},
        {"generator_replay", b.generator_replay}}) {
    if (!std::isfinite(value)) {
      throw NumericError("non-finite loss component '" + std::string(name) + "' (" + context + ")");
    }
  }
  return b;
}

}  // namespace sleepnet
