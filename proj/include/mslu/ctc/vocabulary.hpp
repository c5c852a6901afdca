#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace mslu::ctc {

// Ids 0..3 are reserved; word tokens follow in sorted order.
class Vocabulary {
 public:
  static constexpr int kBlank = 0;
  static constexpr int kUnk = 1;
  static constexpr int kPad = 2;
  static constexpr int kMask = 3;
  static constexpr int kReserved = 4;

  Vocabulary();
  // Sorted, de-duplicated; reserved spellings are rejected.
  static Vocabulary from_tokens(std::vector<std::string> tokens);
  static Vocabulary from_corpus(const std::vector<std::vector<std::string>>& transcripts);
  // Restores the exact symbol table saved by symbols().
  static Vocabulary from_symbols(const std::vector<std::string>& symbols);

  std::size_t size() const { return symbols_.size(); }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(int id) const;
  // Unknown words map to kUnk.
  int id(const std::string& token) const;
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  static bool is_reserved(int id) { return id >= 0 && id < kReserved; }
  // Blank, pad and mask never appear in a transcript.
  static bool is_silent(int id) { return id == kBlank || id == kPad || id == kMask; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace mslu::ctc
