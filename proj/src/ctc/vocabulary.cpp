#include "mslu/ctc/vocabulary.hpp"

#include <algorithm>
#include <set>

#include "mslu/error.hpp"

namespace mslu::ctc {

namespace {
const std::vector<std::string> kReservedSymbols = {"<blank>", "<unk>", "<pad>", "<mask>"};
}

Vocabulary::Vocabulary() {
  for (const auto& s : kReservedSymbols) {
    index_.emplace(s, static_cast<int>(symbols_.size()));
    symbols_.push_back(s);
  }
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  Vocabulary v;
  for (auto& t : tokens) {
    if (t.empty()) throw DataError("vocabulary: empty token");
    if (v.index_.count(t)) throw DataError("vocabulary: token '" + t + "' is reserved");
    v.index_.emplace(t, static_cast<int>(v.symbols_.size()));
    v.symbols_.push_back(std::move(t));
  }
  return v;
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::vector<std::string>>& transcripts) {
  std::set<std::string> all;
  for (const auto& t : transcripts) all.insert(t.begin(), t.end());
  if (all.empty()) throw DataError("vocabulary: corpus has no tokens");
  return from_tokens({all.begin(), all.end()});
}

Vocabulary Vocabulary::from_symbols(const std::vector<std::string>& symbols) {
  if (symbols.size() < kReserved ||
      !std::equal(kReservedSymbols.begin(), kReservedSymbols.end(), symbols.begin())) {
    throw FormatError("vocabulary: saved symbol table lacks the reserved prefix");
  }
  std::vector<std::string> words(symbols.begin() + kReserved, symbols.end());
  if (!std::is_sorted(words.begin(), words.end())) throw FormatError("vocabulary: symbols not sorted");
  auto v = from_tokens(words);
  if (v.size() != symbols.size()) throw FormatError("vocabulary: duplicate symbols");
  return v;
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw ShapeError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int i : ids) out.push_back(symbol(i));
  return out;
}

}  // namespace mslu::ctc
