#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mslu/slu/head.hpp"
#include "mslu/slu/schema.hpp"
#include "mslu/train/archive.hpp"

namespace mslu::eval {

using train::Json;

inline constexpr int kReportSchemaVersion = 1;

// "grab(object=ball,speed=fast)"; just the action without arguments.
std::string command_name(const features::Command& command);

struct ClassScore {
  std::string name;  // label bit
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  std::size_t support = 0;  // reference positives
};

struct ConfusionPair {
  std::string reference, predicted;
  std::size_t count = 0;
};

struct EvalReport {
  std::size_t count = 0;
  double accuracy = 0.0;
  double micro_f1 = 0.0;
  std::vector<ClassScore> classes;
  std::vector<ConfusionPair> confusions;  // most frequent first
  std::optional<double> ter;
  double seconds = 0.0;
};

// Throws ShapeError on empty input or mismatched lengths.
EvalReport make_report(const std::vector<slu::IntentLabel>& predictions,
                       const std::vector<slu::Multihot>& references, const slu::IntentSchema& schema);

// Head predictions with structure enforcement, timed.
EvalReport evaluate(const slu::SluHead<float>& head,
                    const std::vector<const decoder::RepresentationSequence*>& items,
                    const std::vector<slu::Multihot>& references, const slu::IntentSchema& schema);

Json to_json(const EvalReport& report);
// Throws FormatError when a field is missing or out of range.
EvalReport report_from_json(const Json& j);

}  // namespace mslu::eval
