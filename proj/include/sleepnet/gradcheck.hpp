#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sleepnet/losses.hpp"
#include "sleepnet/model.hpp"
#include "sleepnet/replay.hpp"

namespace sleepnet {

struct GradCheck {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  bool pass = true;
};

inline double grad_rel_err(double analytic, double numeric) {
  const double atol = 1e-7;
  if (std::abs(analytic) < atol && std::abs(numeric) < atol) return 0.0;
  return std::abs(analytic - numeric) / std::max(std::abs(analytic), std::abs(numeric));
}

// Central finite difference through a full forward re-evaluation. The oracle
// only ever runs forward passes, so it stays independent of the backward
// rules it is checking.
template <typename T, typename Forward>
double central_difference(Tensor<T>& input, std::size_t index, double step, Forward&& forward) {
  const T orig = input[index];
  input[index] = static_cast<T>(static_cast<double>(orig) + step);
  const double up = forward();
  input[index] = static_cast<T>(static_cast<double>(orig) - step);
  const double down = forward();
  input[index] = orig;
  return (up - down) / (2.0 * step);
}

// Compare backward gradients of `build` (a scalar-valued graph program over
// the given leaf inputs) against central differences. Checks every
// coordinate unless `coords_per_input` caps it.
template <typename T, typename Build>
GradCheck check_gradients(std::string name, std::vector<Tensor<T>>& inputs, Build&& build,
                          double step, double tol, std::size_t coords_per_input = 0,
                          std::uint64_t coord_seed = 17) {
  GradCheck result;
  result.name = std::move(name);

  std::vector<std::vector<T>> analytic;
  {
    Graph<T> g;
    std::vector<typename Graph<T>::Var> leaves;
    for (auto& t : inputs) leaves.push_back(g.leaf(t, true));
    auto loss = build(g, leaves);
    g.backward(loss);
    for (auto& leaf : leaves) {
      auto span = g.grad(leaf);
      analytic.emplace_back(span.begin(), span.end());
    }
  }

  auto forward = [&]() {
    Graph<T> g;
    std::vector<typename Graph<T>::Var> leaves;
    for (auto& t : inputs) leaves.push_back(g.leaf(t, true));
    return static_cast<double>(g.scalar(build(g, leaves)));
  };

  Rng coord_rng(coord_seed);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const std::size_t n = inputs[t].numel();
    std::vector<std::size_t> coords;
    if (coords_per_input == 0 || coords_per_input >= n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t i = 0; i < coords_per_input; ++i) {
        coords.push_back(static_cast<std::size_t>(coord_rng.below(n)));
      }
    }
    for (const std::size_t idx : coords) {
      const double numeric = central_difference(inputs[t], idx, step, forward);
      const double err = grad_rel_err(static_cast<double>(analytic[t][idx]), numeric);
      result.max_rel_err = std::max(result.max_rel_err, err);
      ++result.checked;
      if (err >= tol) result.pass = false;
    }
  }
  return result;
}

namespace detail {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Keep values away from the ReLU kink so finite differences stay clean.
inline Tensor<double> random_tensor_off_zero(Shape shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) {
    const double mag = 0.1 + 0.9 * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

}  // namespace detail

// Finite-difference checks for every autodiff primitive, float64, step 1e-5.
inline std::vector<GradCheck> gradcheck_primitives(std::uint64_t seed, double step = 1e-5,
                                                   double tol = 1e-4) {
  using G = Graph<double>;
  using Var = G::Var;
  Rng rng(seed);
  std::vector<GradCheck> out;

  auto weighted_sum = [](G& g, Var x, const Tensor<double>& w) {
    return g.sum(g.mul(x, g.constant(w)));
  };

  {
    std::vector<Tensor<double>> in{detail::random_tensor({3, 4}, rng),
                                   detail::random_tensor({4, 2}, rng)};
    Tensor<double> w = detail::random_tensor({3, 2}, rng);
    out.push_back(check_gradients<double>(
        "matmul", in,
        [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.matmul(v[0], v[1]), w); }, step,
        tol));
  }
  for (const std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    std::vector<Tensor<double>> in{detail::random_tensor({2, 3, 8, 8}, rng),
                                   detail::random_tensor({4, 3, 3, 3}, rng)};
    const std::size_t od = kernels::conv_out_dim(8, stride);
    Tensor<double> w = detail::random_tensor({2, 4, od, od}, rng);
    out.push_back(check_gradients<double>(
        "conv2d/stride" + std::to_string(stride), in,
        [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.conv2d(v[0], v[1], stride), w); },
        step, tol, 48));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor_off_zero({2, 7}, rng)};
    Tensor<double> w = detail::random_tensor({2, 7}, rng);
    out.push_back(check_gradients<double>(
        "relu", in, [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.relu(v[0]), w); },
        step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({5}, rng)};
    Tensor<double> w = detail::random_tensor({5}, rng);
    out.push_back(check_gradients<double>(
        "softmax", in,
        [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.softmax(v[0]), w); }, step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({2, 6}, rng)};
    Tensor<double> w = detail::random_tensor({2, 6}, rng);
    out.push_back(check_gradients<double>(
        "log_softmax", in,
        [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.log_softmax(v[0]), w); }, step,
        tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({3, 4}, rng),
                                   detail::random_tensor({3, 4}, rng)};
    Tensor<double> w = detail::random_tensor({3, 4}, rng);
    out.push_back(check_gradients<double>(
        "add", in, [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.add(v[0], v[1]), w); },
        step, tol));
    out.push_back(check_gradients<double>(
        "mul", in, [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.mul(v[0], v[1]), w); },
        step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({3, 4}, rng),
                                   detail::random_tensor({4}, rng)};
    Tensor<double> w = detail::random_tensor({3, 4}, rng);
    out.push_back(check_gradients<double>(
        "add_rowwise", in,
        [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.add_rowwise(v[0], v[1]), w); },
        step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({2, 5}, rng)};
    Tensor<double> w = detail::random_tensor({2, 5}, rng);
    out.push_back(check_gradients<double>(
        "scale", in,
        [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.scale(v[0], 0.7), w); }, step,
        tol));
    out.push_back(check_gradients<double>(
        "exp", in, [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.exp(v[0]), w); }, step,
        tol));
    out.push_back(check_gradients<double>(
        "sum", in, [&](G& g, std::vector<Var>& v) { return g.sum(v[0]); }, step, tol));
    out.push_back(check_gradients<double>(
        "mean", in, [&](G& g, std::vector<Var>& v) { return g.mean(v[0]); }, step, tol));
    out.push_back(check_gradients<double>(
        "reshape", in,
        [&](G& g, std::vector<Var>& v) {
          Tensor<double> w2({5, 2}, {w.values().begin(), w.values().end()});
          return weighted_sum(g, g.reshape(v[0], {5, 2}), w2);
        },
        step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({2, 5}, rng, 0.1, 2.0)};
    Tensor<double> w = detail::random_tensor({2, 5}, rng);
    out.push_back(check_gradients<double>(
        "log", in, [&](G& g, std::vector<Var>& v) { return weighted_sum(g, g.log(v[0]), w); }, step,
        tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({3}, rng)};
    Tensor<double> w = detail::random_tensor({2, 3, 2, 2}, rng);
    out.push_back(check_gradients<double>(
        "broadcast_channel", in,
        [&](G& g, std::vector<Var>& v) {
          return weighted_sum(g, g.broadcast_channel(v[0], {2, 3, 2, 2}), w);
        },
        step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({2, 5}, rng),
                                   detail::random_tensor({2, 5}, rng, -0.5, 0.5)};
    Tensor<double> noise = detail::random_tensor({2, 5}, rng);
    Tensor<double> w = detail::random_tensor({2, 5}, rng);
    out.push_back(check_gradients<double>(
        "gaussian_sample", in,
        [&](G& g, std::vector<Var>& v) {
          return weighted_sum(g, g.gaussian_sample(v[0], v[1], noise), w);
        },
        step, tol));
    out.push_back(check_gradients<double>(
        "gaussian_prior_divergence", in,
        [&](G& g, std::vector<Var>& v) { return g.gaussian_prior_divergence(v[0], v[1]); }, step,
        tol));
  }
  {
    std::vector<std::uint8_t> mask{1, 1, 1, 1, 0, 0};
    std::vector<int> labels;
    for (std::size_t r = 0; r < 4; ++r) labels.push_back(static_cast<int>(rng.below(4)));
    std::vector<Tensor<double>> in{detail::random_tensor({4, 6}, rng)};
    out.push_back(check_gradients<double>(
        "cross_entropy", in,
        [&](G& g, std::vector<Var>& v) { return g.cross_entropy(v[0], labels, mask); }, step, tol));

    Tensor<double> teacher({4, 6});
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        teacher[r * 6 + c] = 0.05 + rng.uniform();
        total += teacher[r * 6 + c];
      }
      for (std::size_t c = 0; c < 4; ++c) teacher[r * 6 + c] /= total;
    }
    out.push_back(check_gradients<double>(
        "distill_cross_entropy", in,
        [&](G& g, std::vector<Var>& v) {
          return g.distill_cross_entropy(v[0], teacher, mask, 2.0);
        },
        step, tol));
  }
  {
    std::vector<Tensor<double>> in{detail::random_tensor({3, 5}, rng)};
    Tensor<double> target = detail::random_tensor({3, 5}, rng);
    out.push_back(check_gradients<double>(
        "squared_error", in,
        [&](G& g, std::vector<Var>& v) { return g.squared_error(v[0], target); }, step, tol));
  }
  return out;
}

// Finite-difference check of the full composed loss L = L^C + L^G on the
// desk-scale model (task 2, replay active). Coordinates are sampled per
// parameter tensor; the reparameterization noise is replayed identically for
// every forward evaluation.
inline std::vector<GradCheck> gradcheck_composed_loss(std::uint64_t seed,
                                                      std::size_t coords_per_tensor = 8,
                                                      double step = 1e-5, double tol = 1e-4) {
  Rng rng(seed);
  ModelDims dims{256, 400, 32, 10};
  Rng init = rng.spawn(1);
  SleepModel<double> model(dims, init);

  const std::size_t batch = 4;
  std::vector<std::uint8_t> mask(10, 0);
  mask[0] = mask[1] = mask[2] = mask[3] = 1;  // tasks 1..2 of a 5x2 stream

  ReplayBatch<double> veridical;
  veridical.kind = ReplayBatch<double>::Kind::veridical;
  veridical.features = detail::random_tensor({batch, dims.feature_len}, rng);
  for (std::size_t i = 0; i < batch; ++i) {
    veridical.labels.push_back(2 + static_cast<int>(rng.below(2)));
  }

  FrozenSnapshot<double> snapshot{model, 1, std::vector<std::uint8_t>{1, 1, 0, 0, 0, 0, 0, 0, 0, 0}};
  Rng replay_rng = rng.spawn(2);
  const ReplayBatch<double> generative = generate_replay(snapshot, batch, replay_rng);

  const std::uint64_t noise_seed = seed ^ 0xabcdef12u;
  auto build = [&](Graph<double>& g, const SleepModel<double>::Bound& bound) {
    Rng noise_rng(noise_seed);
    return build_losses<double>(g, model, bound, veridical, &generative, 2, mask, 2.0, noise_rng)
        .total;
  };

  std::vector<std::vector<double>> analytic;
  {
    Graph<double> g;
    auto bound = model.bind(g);
    auto loss = build(g, bound);
    g.backward(loss);
    const auto members = SleepModel<double>::bound_members();
    for (const auto member : members) {
      auto span = g.grad(bound.*member);
      analytic.emplace_back(span.begin(), span.end());
    }
  }

  auto forward = [&]() {
    Graph<double> g;
    auto bound = model.bind(g);
    return g.scalar(build(g, bound));
  };

  std::vector<GradCheck> out;
  Rng coord_rng = rng.spawn(3);
  auto params = model.params();
  for (std::size_t p = 0; p < params.size(); ++p) {
    GradCheck check;
    check.name = "composed_loss/" + params[p].name;
    Tensor<double>& t = *params[p].tensor;
    for (std::size_t i = 0; i < coords_per_tensor; ++i) {
      const std::size_t idx = static_cast<std::size_t>(coord_rng.below(t.numel()));
      const double numeric = central_difference(t, idx, step, forward);
      const double err = grad_rel_err(analytic[p][idx], numeric);
      check.max_rel_err = std::max(check.max_rel_err, err);
      ++check.checked;
      if (err >= tol) check.pass = false;
    }
    out.push_back(std::move(check));
  }
  return out;
}

// The user-facing suite: primitives plus the composed loss, across seeds,
// with the worst relative error kept per check.
inline std::vector<GradCheck> run_gradcheck_suite(std::size_t seed_count = 10,
                                                  std::size_t composed_coords = 8) {
  std::vector<GradCheck> merged;
  auto fold = [&](const std::vector<GradCheck>& batch) {
    for (const GradCheck& c : batch) {
      auto it = std::find_if(merged.begin(), merged.end(),
                             [&](const GradCheck& m) { return m.name == c.name; });
      if (it == merged.end()) {
        merged.push_back(c);
      } else {
        it->max_rel_err = std::max(it->max_rel_err, c.max_rel_err);
        it->checked += c.checked;
        it->pass = it->pass && c.pass;
      }
    }
  };
  for (std::size_t s = 1; s <= seed_count; ++s) {
    fold(gradcheck_primitives(1000 + s));
    fold(gradcheck_composed_loss(2000 + s, composed_coords));
  }
  return merged;
}

}  // namespace sleepnet
