#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sleepnet/model.hpp"
#include "sleepnet/tensor.hpp"

namespace sleepnet {

struct DownscaleConfig {
  double fraction = 0.0;  // p in [0, 1)
  // Layers to downscale. Unset means the default set: every trainable weight
  // matrix (biases excluded). An explicitly empty list is an error when
  // fraction > 0.
  std::optional<std::vector<std::string>> include;
};

// Zero the floor(p*n) smallest-magnitude entries. Ties break on the flat
// index, so the selection is stable. Untouched entries keep their exact bit
// pattern; zeroed entries stay trainable.
template <typename T>
std::size_t downscale_tensor(Tensor<T>& t, double p) {
  if (p < 0.0 || p >= 1.0) {
    throw ConfigError("downscale: fraction must be in [0,1), got " + format_number(p));
  }
  const std::size_t n = t.numel();
  const std::size_t k = static_cast<std::size_t>(std::floor(p * static_cast<double>(n)));
  if (k == 0) return 0;
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  const T* data = t.data();
  std::sort(order.begin(), order.end(), [data](std::uint32_t a, std::uint32_t b) {
    const T ma = std::abs(data[a]);
    const T mb = std::abs(data[b]);
    if (ma != mb) return ma < mb;
    return a < b;
  });
  for (std::size_t i = 0; i < k; ++i) t[order[i]] = T{};
  return k;
}

struct DownscaleReport {
  std::vector<std::pair<std::string, std::size_t>> zeroed;  // per layer
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& [name, count] : zeroed) n += count;
    return n;
  }
};

template <typename T>
DownscaleReport downscale(SleepModel<T>& model, const DownscaleConfig& cfg) {
  DownscaleReport report;
  if (cfg.fraction == 0.0) return report;

  auto params = model.params();
  std::vector<ParamView<T>*> selected;
  if (!cfg.include) {
    for (auto& p : params) {
      if (p.trainable && p.weight_matrix) selected.push_back(&p);
    }
  } else {
    for (const std::string& name : *cfg.include) {
      auto it = std::find_if(params.begin(), params.end(),
                             [&](const ParamView<T>& p) { return p.name == name; });
      if (it == params.end()) throw ConfigError("downscale: unknown layer '" + name + "'");
      selected.push_back(&*it);
    }
  }
  if (selected.empty()) {
    throw ConfigError("downscale: inclusion set is empty with fraction > 0");
  }
  for (ParamView<T>* p : selected) {
    report.zeroed.emplace_back(p->name, downscale_tensor(*p->tensor, cfg.fraction));
  }
  return report;
}

}  // namespace sleepnet
