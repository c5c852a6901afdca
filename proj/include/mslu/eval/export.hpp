#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mslu/ctc/vocabulary.hpp"
#include "mslu/eval/report.hpp"

namespace mslu::eval {

// Mean over the sequence positions. Throws ShapeError on an empty sequence.
std::vector<float> mean_embedding(const decoder::RepresentationSequence& repr);

struct EmbeddingRecord {
  std::string id;
  const decoder::RepresentationSequence* repr = nullptr;
  std::string token_string;  // decoder template, words and <mask>
  std::string intent;
};

// One mean vector per utterance, stored under its id in `archive`; the index
// maps id -> {layer, shape, token_string, intent}. Throws DataError on
// duplicate ids.
void export_embeddings(const std::filesystem::path& archive, const std::filesystem::path& index,
                       const std::vector<EmbeddingRecord>& records);

struct AttentionReport {
  std::string utterance;
  std::string layer;
  std::vector<std::string> tokens;  // one per valid position, in order
  // [layer][head][token], each row sums to 1
  std::vector<std::vector<std::vector<double>>> weights;
  std::string prediction;
};

// Runs the head on one representation sequence. Encoder-layer sequences have
// no template; their positions are labelled "frame<N>".
AttentionReport attention_report(const slu::SluHead<float>& head, const decoder::RepresentationSequence& repr,
                                 const ctc::Vocabulary& vocab, const slu::IntentSchema& schema,
                                 const std::string& utterance);

Json to_json(const AttentionReport& report);
// Heatmap, one row per (layer, head), one column per token; no external assets.
std::string attention_svg(const AttentionReport& report);

}  // namespace mslu::eval
