#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sleepnet/tensor.hpp"

namespace sleepnet {

// Parameter container: 4-byte magic, little-endian u64 header length, JSON
// header (format version, dtype, tensor names + shapes), then raw
// little-endian payloads in header order. Round-trips are bit-exact.

static_assert(std::endian::native == std::endian::little,
              "parameter files are little-endian; big-endian hosts are unsupported");

inline constexpr char kParamsMagic[4] = {'S', 'L', 'P', 'N'};
inline constexpr int kParamsFormatVersion = 1;

template <typename T>
constexpr const char* dtype_tag() {
  if constexpr (std::is_same_v<T, float>) {
    return "f32";
  } else {
    static_assert(std::is_same_v<T, double>, "unsupported dtype");
    return "f64";
  }
}

template <typename T>
struct NamedTensor {
  std::string name;
  const Tensor<T>* tensor;
};

template <typename T>
void write_params(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors,
                  nlohmann::json meta = nlohmann::json::object()) {
  nlohmann::json header;
  header["format_version"] = kParamsFormatVersion;
  header["dtype"] = dtype_tag<T>();
  header["meta"] = std::move(meta);
  nlohmann::json list = nlohmann::json::array();
  for (const auto& nt : tensors) {
    list.push_back({{"name", nt.name}, {"shape", nt.tensor->shape()}});
  }
  header["tensors"] = std::move(list);

  const std::string header_bytes = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(kParamsMagic, 4);
  const std::uint64_t len = header_bytes.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& nt : tensors) {
    out.write(reinterpret_cast<const char*>(nt.tensor->data()),
              static_cast<std::streamsize>(nt.tensor->numel() * sizeof(T)));
  }
  if (!out) throw DataError("short write to " + path.string());
}

template <typename T>
struct ParamsFile {
  nlohmann::json meta;
  std::vector<std::string> order;
  std::map<std::string, Tensor<T>> tensors;
};

template <typename T>
ParamsFile<T> read_params(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open parameter file " + path.string());

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kParamsMagic, 4) != 0) {
    throw FormatError("bad magic in " + path.string() + " (offset 0)");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in) throw FormatError("truncated header length in " + path.string() + " (offset 4)");
  std::string header_bytes(len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(len));
  if (!in) throw FormatError("truncated JSON header in " + path.string() + " (offset 12)");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("unparseable header in " + path.string() + ": " + e.what());
  }
  if (header.value("format_version", -1) != kParamsFormatVersion) {
    throw FormatError("unsupported format version " +
                      header["format_version"].dump() + " in " + path.string());
  }
  if (header.value("dtype", "") != dtype_tag<T>()) {
    throw FormatError("dtype mismatch in " + path.string() + ": file holds " +
                      header.value("dtype", "?") + ", expected " + dtype_tag<T>());
  }

  ParamsFile<T> result;
  result.meta = header.value("meta", nlohmann::json::object());
  std::uint64_t offset = 12 + len;
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    Tensor<T> t(shape);
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(T)));
    if (!in) {
      throw FormatError("truncated payload for tensor '" + name + "' in " + path.string() +
                        " (offset " + std::to_string(offset) + ")");
    }
    offset += t.numel() * sizeof(T);
    result.order.push_back(name);
    result.tensors.emplace(name, std::move(t));
  }
  return result;
}

}  // namespace sleepnet
