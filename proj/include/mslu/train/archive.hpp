#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mslu/nn/layers.hpp"

namespace mslu::train {

using Json = nlohmann::ordered_json;

struct ArchiveTensor {
  nn::Shape shape;
  std::vector<float> values;
};

// "MSLUARC1", u64 little-endian header length, JSON header
// {format_version, meta, tensors: [{name, shape, offset}]}, then float32
// little-endian payload; offsets are bytes from the start of the payload.
struct Archive {
  static constexpr int kFormatVersion = 1;

  Json meta = Json::object();
  std::map<std::string, ArchiveTensor> tensors;

  void put(const std::string& name, nn::Shape shape, std::vector<float> values);
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
  // Throws DataError when missing.
  const ArchiveTensor& get(const std::string& name) const;
};

void write_archive(const std::filesystem::path& path, const Archive& archive);
// Throws DataError (missing file) or FormatError (corrupt or wrong version).
Archive read_archive(const std::filesystem::path& path);

void store_parameters(Archive& archive, const nn::ParameterList<float>& params);
// Every parameter must be present with a matching shape; throws FormatError.
void load_parameters(const Archive& archive, const nn::ParameterList<float>& params);

// FNV-1a over the raw bytes of each tensor.
std::uint64_t tensor_hash(const nn::Tensor<float>& t);
std::map<std::string, std::uint64_t> parameter_hashes(const nn::ParameterList<float>& params);

}  // namespace mslu::train
