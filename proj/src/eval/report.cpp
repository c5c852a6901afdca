#include "mslu/eval/report.hpp"

#include <algorithm>
#include <chrono>
#include <map>

#include "mslu/error.hpp"
#include "mslu/eval/metrics.hpp"
#include "mslu/train/trainer.hpp"

namespace mslu::eval {

std::string command_name(const features::Command& command) {
  if (command.args.empty()) return command.action;
  std::string out = command.action + "(";
  bool first = true;
  for (const auto& [slot, value] : command.args) {
    out += (first ? "" : ",") + slot + "=" + value;
    first = false;
  }
  return out + ")";
}

EvalReport make_report(const std::vector<slu::IntentLabel>& predictions,
                       const std::vector<slu::Multihot>& references, const slu::IntentSchema& schema) {
  std::vector<Multihot> pred;
  pred.reserve(predictions.size());
  for (const auto& p : predictions) pred.push_back(p.multihot);

  EvalReport r;
  r.count = pred.size();
  r.accuracy = intent_accuracy(pred, references);
  r.micro_f1 = micro_f1(pred, references);
  const auto counts = bit_counts(pred, references);
  if (counts.size() != schema.size()) throw ShapeError("report: label width does not match the schema");
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& c = counts[i];
    r.classes.push_back({schema.bits[i].name(), c.precision(), c.recall(), c.f1(), c.tp + c.fn});
  }

  std::map<std::pair<std::string, std::string>, std::size_t> pairs;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == references[i]) continue;
    const auto ref = schema.find(references[i]);
    const std::string ref_name = ref == slu::kNotFound ? "<invalid>" : command_name(schema.commands[ref]);
    ++pairs[{ref_name, command_name(predictions[i].command)}];
  }
  for (const auto& [k, n] : pairs) r.confusions.push_back({k.first, k.second, n});
  std::stable_sort(r.confusions.begin(), r.confusions.end(),
                   [](const ConfusionPair& a, const ConfusionPair& b) { return a.count > b.count; });
  return r;
}

EvalReport evaluate(const slu::SluHead<float>& head,
                    const std::vector<const decoder::RepresentationSequence*>& items,
                    const std::vector<slu::Multihot>& references, const slu::IntentSchema& schema) {
  const auto t0 = std::chrono::steady_clock::now();
  auto report = make_report(train::predict_intents(head, items, schema), references, schema);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

Json to_json(const EvalReport& report) {
  Json j;
  j["schema_version"] = kReportSchemaVersion;
  j["count"] = report.count;
  j["accuracy"] = report.accuracy;
  j["micro_f1"] = report.micro_f1;
  j["classes"] = Json::array();
  for (const auto& c : report.classes) {
    j["classes"].push_back(
        {{"name", c.name}, {"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}, {"support", c.support}});
  }
  j["confusions"] = Json::array();
  for (const auto& c : report.confusions) {
    j["confusions"].push_back({{"reference", c.reference}, {"predicted", c.predicted}, {"count", c.count}});
  }
  j["ter"] = report.ter ? Json(*report.ter) : Json(nullptr);
  j["seconds"] = report.seconds;
  return j;
}

namespace {

double unit(const Json& j, const char* key) {
  const double v = j.at(key).get<double>();
  if (!(v >= 0.0 && v <= 1.0)) throw FormatError(std::string("report: ") + key + " outside [0, 1]");
  return v;
}

}  // namespace

EvalReport report_from_json(const Json& j) {
  try {
    if (j.at("schema_version").get<int>() != kReportSchemaVersion) throw FormatError("report: unsupported schema_version");
    EvalReport r;
    r.count = j.at("count").get<std::size_t>();
    r.accuracy = unit(j, "accuracy");
    r.micro_f1 = unit(j, "micro_f1");
    for (const auto& c : j.at("classes")) {
      r.classes.push_back({c.at("name").get<std::string>(), unit(c, "precision"), unit(c, "recall"), unit(c, "f1"),
                           c.at("support").get<std::size_t>()});
    }
    for (const auto& c : j.at("confusions")) {
      r.confusions.push_back(
          {c.at("reference").get<std::string>(), c.at("predicted").get<std::string>(), c.at("count").get<std::size_t>()});
    }
    if (!j.at("ter").is_null()) {
      r.ter = j.at("ter").get<double>();
      if (!(*r.ter >= 0.0)) throw FormatError("report: negative ter");
    }
    r.seconds = j.at("seconds").get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report: ") + e.what());
  }
}

}  // namespace mslu::eval
