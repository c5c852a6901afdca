#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "mslu/eval/report.hpp"
#include "mslu/train/config.hpp"

namespace mslu::eval {

struct CurveExample {
  std::string id;
  const decoder::RepresentationSequence* repr = nullptr;
  slu::Multihot target;
};

struct CurveOptions {
  std::vector<std::size_t> sizes{1, 2, 4, 8, 16};  // examples per class
  std::size_t repeats = 3;
  std::uint64_t seed = 0;      // repeat r uses seed + r
  bool per_combination = true;  // classes are full label vectors; false groups by action
  slu::SluConfig head;
  train::TrainConfig train = train::slu_defaults();
  std::size_t threads = 1;
};

struct CurveRepeat {
  std::size_t repeat = 0;
  std::uint64_t seed = 0;
  double micro_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t train_count = 0;
  bool short_class = false;  // some class had fewer examples than asked
  std::vector<std::string> subset;  // training utterance ids
};

struct LearningCurvePoint {
  std::size_t size = 0;
  std::vector<CurveRepeat> repeats;
  double mean_f1 = 0.0, std_f1 = 0.0;
  double mean_accuracy = 0.0, std_accuracy = 0.0;
};

struct CurveResult {
  std::vector<LearningCurvePoint> points;
  // Soft check: the mean F1 never drops by more than one std of the larger size.
  bool monotone = true;
  std::vector<std::string> warnings;
};

// Class key of a label: the action bit index, or the whole vector.
std::vector<std::uint8_t> class_key(const slu::Multihot& label, const slu::IntentSchema& schema, bool per_combination);

// Up to `size` indices per class, drawn without replacement and returned in
// ascending order. `short_class` reports a class that had fewer.
std::vector<std::size_t> sample_per_class(const std::vector<slu::Multihot>& labels, const slu::IntentSchema& schema,
                                          std::size_t size, std::mt19937_64& rng, bool per_combination,
                                          bool* short_class = nullptr);

// Subset for (seed, size): the same pair always selects the same utterances.
std::vector<std::size_t> curve_subset(const std::vector<CurveExample>& pool, const slu::IntentSchema& schema,
                                      std::size_t size, std::uint64_t seed, bool per_combination,
                                      bool* short_class = nullptr);

// Fresh head per (size, repeat) cell trained on the subset and scored on the
// fixed test split. Throws ConfigError on an empty size list or zero repeats,
// DataError when the test split shares an id with the pool.
CurveResult learning_curve(const std::vector<CurveExample>& pool, const std::vector<CurveExample>& test,
                           const slu::IntentSchema& schema, const CurveOptions& options,
                           const std::function<void(const std::string&)>& log = {});

// size,repeat,seed,micro_f1,accuracy
std::string curve_csv(const CurveResult& result);
Json to_json(const CurveResult& result, const CurveOptions& options);

// curve.csv, curve.json and subsets/size<S>_repeat<R>.txt (one id per line).
void write_curve(const std::filesystem::path& dir, const CurveResult& result, const CurveOptions& options);

}  // namespace mslu::eval
