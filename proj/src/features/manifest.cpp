#include "mslu/features/manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mslu/error.hpp"

namespace mslu::features {

std::vector<std::string> split_tokens(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> ManifestEntry::tokens() const { return split_tokens(text); }

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(lineno);
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      std::filesystem::path audio = j.at("audio").get<std::string>();
      e.audio = audio.is_absolute() ? audio : base / audio;
      e.text = j.at("text").get<std::string>();
      e.intent.action = j.at("intent").at("action").get<std::string>();
      for (const auto& [k, v] : j.at("intent").at("args").items()) e.intent.args[k] = v.get<std::string>();
      e.speaker = j.value("speaker", std::string{});
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw FormatError(where + ": " + ex.what());
    }
  }
  if (out.empty()) throw DataError("manifest " + path.string() + " is empty");
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  for (const auto& e : entries) {
    const auto audio = std::filesystem::relative(std::filesystem::absolute(e.audio), base);
    nlohmann::ordered_json args = nlohmann::ordered_json::object();
    for (const auto& [k, v] : e.intent.args) args[k] = v;
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["audio"] = audio.generic_string();
    j["text"] = e.text;
    j["intent"] = {{"action", e.intent.action}, {"args", args}};
    j["speaker"] = e.speaker;
    out << j.dump() << '\n';
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace mslu::features
