#pragma once

#include <filesystem>

#include "sleepnet/model.hpp"
#include "sleepnet/params_io.hpp"

namespace sleepnet {

template <typename T>
void save_model(const std::filesystem::path& path, SleepModel<T>& model) {
  std::vector<NamedTensor<T>> tensors;
  for (const auto& p : model.params()) tensors.push_back({p.name, p.tensor});
  nlohmann::json meta;
  meta["kind"] = "sleep_model";
  meta["feature_len"] = model.dims().feature_len;
  meta["hidden"] = model.dims().hidden;
  meta["latent"] = model.dims().latent;
  meta["num_classes"] = model.dims().num_classes;
  write_params(path, tensors, std::move(meta));
}

template <typename T>
SleepModel<T> load_model(const std::filesystem::path& path) {
  ParamsFile<T> file = read_params<T>(path);
  if (file.meta.value("kind", "") != "sleep_model") {
    throw FormatError(path.string() + " does not hold a sleep model");
  }
  ModelDims dims;
  dims.feature_len = file.meta.at("feature_len").template get<std::size_t>();
  dims.hidden = file.meta.at("hidden").template get<std::size_t>();
  dims.latent = file.meta.at("latent").template get<std::size_t>();
  dims.num_classes = file.meta.at("num_classes").template get<std::size_t>();
  SleepModel<T> model(dims);
  for (auto& p : model.params()) {
    auto it = file.tensors.find(p.name);
    if (it == file.tensors.end()) {
      throw FormatError(path.string() + " is missing tensor '" + p.name + "'");
    }
    if (it->second.shape() != p.tensor->shape()) {
      throw FormatError(path.string() + ": tensor '" + p.name + "' has shape " +
                        shape_str(it->second.shape()) + ", expected " +
                        shape_str(p.tensor->shape()));
    }
    *p.tensor = std::move(it->second);
  }
  return model;
}

template <typename T>
void save_extractor(const std::filesystem::path& path, ConvFeatureExtractor<T>& fe) {
  std::vector<NamedTensor<T>> tensors;
  for (const auto& p : fe.params()) tensors.push_back({p.name, p.tensor});
  nlohmann::json meta;
  meta["kind"] = "feature_extractor";
  meta["type"] = fe.is_identity() ? "identity" : "conv";
  meta["in_channels"] = fe.in_channels();
  meta["image_size"] = fe.image_height();
  meta["channels"] = fe.channel_progression();
  meta["frozen"] = fe.frozen();
  write_params(path, tensors, std::move(meta));
}

template <typename T>
ConvFeatureExtractor<T> load_extractor(const std::filesystem::path& path) {
  ParamsFile<T> file = read_params<T>(path);
  if (file.meta.value("kind", "") != "feature_extractor") {
    throw FormatError(path.string() + " does not hold a feature extractor");
  }
  const std::size_t in_channels = file.meta.at("in_channels").template get<std::size_t>();
  const std::size_t image_size = file.meta.at("image_size").template get<std::size_t>();
  if (file.meta.at("type") == "identity") {
    return ConvFeatureExtractor<T>::identity(in_channels, image_size, image_size);
  }
  auto channels = file.meta.at("channels").template get<std::vector<std::size_t>>();
  ConvFeatureExtractor<T> fe(in_channels, image_size, channels, nullptr);
  for (auto& p : fe.params()) {
    auto it = file.tensors.find(p.name);
    if (it == file.tensors.end()) {
      throw FormatError(path.string() + " is missing tensor '" + p.name + "'");
    }
    if (it->second.shape() != p.tensor->shape()) {
      throw FormatError(path.string() + ": tensor '" + p.name + "' has shape " +
                        shape_str(it->second.shape()));
    }
    *p.tensor = std::move(it->second);
  }
  if (file.meta.value("frozen", false)) fe.freeze();
  return fe;
}

}  // namespace sleepnet
