#include "mslu/train/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "mslu/error.hpp"

namespace mslu::train {

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'M', 'S', 'L', 'U', 'A', 'R', 'C', '1'};

}  // namespace

void Archive::put(const std::string& name, nn::Shape shape, std::vector<float> values) {
  if (nn::numel(shape) != values.size()) throw ShapeError("archive: shape and value count differ for " + name);
  tensors[name] = {std::move(shape), std::move(values)};
}

const ArchiveTensor& Archive::get(const std::string& name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("archive: missing tensor '" + name + "'");
  return it->second;
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  Json header;
  header["format_version"] = Archive::kFormatVersion;
  header["meta"] = archive.meta;
  header["tensors"] = Json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    header["tensors"].push_back({{"name", name}, {"shape", t.shape}, {"offset", offset}});
    offset += t.values.size() * sizeof(float);
  }
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp);
    out.write(kMagic, sizeof kMagic);
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors) {
      out.write(reinterpret_cast<const char*>(t.values.data()),
                static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    }
    if (!out) throw DataError("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[8];
  std::uint64_t length = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + ": not a model archive");
  }
  if (!in.read(reinterpret_cast<char*>(&length), sizeof length) || length > (1ull << 31)) {
    throw FormatError(path.string() + ": bad header length");
  }
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw FormatError(path.string() + ": truncated header");
  const auto payload_start = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload_size = static_cast<std::uint64_t>(in.tellg() - payload_start);

  Archive archive;
  try {
    const Json header = Json::parse(text);
    if (header.at("format_version").get<int>() != Archive::kFormatVersion) {
      throw FormatError(path.string() + ": unsupported format_version " + header.at("format_version").dump());
    }
    archive.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto shape = entry.at("shape").get<nn::Shape>();
      const auto offset = entry.at("offset").get<std::uint64_t>();
      const std::size_t n = nn::numel(shape);
      if (offset + n * sizeof(float) > payload_size) throw FormatError(path.string() + ": tensor " + name + " truncated");
      std::vector<float> values(n);
      in.seekg(static_cast<std::streamoff>(payload_start) + static_cast<std::streamoff>(offset));
      in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(float)));
      if (!in) throw FormatError(path.string() + ": tensor " + name + " unreadable");
      if (archive.tensors.count(name)) throw FormatError(path.string() + ": duplicate tensor " + name);
      archive.tensors[name] = {shape, std::move(values)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  return archive;
}

void store_parameters(Archive& archive, const nn::ParameterList<float>& params) {
  for (const auto& p : params) {
    if (archive.has(p.name)) throw ShapeError("archive: parameter stored twice: " + p.name);
    archive.put(p.name, p.tensor.shape(), {p.tensor.data().begin(), p.tensor.data().end()});
  }
}

void load_parameters(const Archive& archive, const nn::ParameterList<float>& params) {
  for (const auto& p : params) {
    const auto it = archive.tensors.find(p.name);
    if (it == archive.tensors.end()) throw FormatError("checkpoint lacks parameter " + p.name);
    if (it->second.shape != p.tensor.shape()) {
      throw FormatError("checkpoint parameter " + p.name + " has shape " + nn::to_string(it->second.shape) +
                        ", model expects " + nn::to_string(p.tensor.shape()));
    }
    auto dst = nn::Tensor<float>(p.tensor).data();
    std::copy(it->second.values.begin(), it->second.values.end(), dst.begin());
  }
}

std::uint64_t tensor_hash(const nn::Tensor<float>& t) {
  std::uint64_t h = 1469598103934665603ull;
  const auto* bytes = reinterpret_cast<const unsigned char*>(t.data().data());
  for (std::size_t i = 0; i < t.size() * sizeof(float); ++i) h = (h ^ bytes[i]) * 1099511628211ull;
  return h;
}

std::map<std::string, std::uint64_t> parameter_hashes(const nn::ParameterList<float>& params) {
  std::map<std::string, std::uint64_t> out;
  for (const auto& p : params) out[p.name] = tensor_hash(p.tensor);
  return out;
}

}  // namespace mslu::train
