#include "mslu/slu/schema.hpp"

#include <algorithm>
#include <cmath>

#include "mslu/error.hpp"

namespace mslu::slu {

std::string LabelBit::name() const { return kind == Kind::Action ? value : slot + "=" + value; }

std::size_t IntentSchema::action_count() const {
  return static_cast<std::size_t>(
      std::count_if(bits.begin(), bits.end(), [](const LabelBit& b) { return b.kind == LabelBit::Kind::Action; }));
}

std::size_t IntentSchema::find(std::span<const std::uint8_t> v) const {
  for (std::size_t i = 0; i < valid_set.size(); ++i) {
    if (std::equal(v.begin(), v.end(), valid_set[i].begin(), valid_set[i].end())) return i;
  }
  return kNotFound;
}

void IntentSchema::validate() const {
  if (valid_set.empty()) throw ConfigError("intent schema: empty valid set");
  if (commands.size() != valid_set.size()) throw ConfigError("intent schema: commands and valid set differ in size");
  for (const auto& v : valid_set) {
    if (v.size() != bits.size()) throw ConfigError("intent schema: vector length differs from bit count");
    std::size_t actions = 0;
    for (std::size_t b = 0; b < v.size(); ++b) {
      if (v[b] > 1) throw ConfigError("intent schema: vector entries must be 0 or 1");
      if (v[b] && bits[b].kind == LabelBit::Kind::Action) ++actions;
    }
    if (actions != 1) throw ConfigError("intent schema: every valid vector needs exactly one action bit");
  }
}

IntentSchema schema_from_grammar(const features::CommandGrammar& grammar) {
  IntentSchema s;
  for (const auto& a : grammar.actions) s.bits.push_back({LabelBit::Kind::Action, "", a.name});
  for (const auto& a : grammar.actions) {
    for (const auto& slot : a.slots) {
      for (const auto& v : slot.values) {
        LabelBit bit{LabelBit::Kind::Value, slot.name, v};
        if (std::find(s.bits.begin(), s.bits.end(), bit) == s.bits.end()) s.bits.push_back(bit);
      }
    }
  }
  s.commands = grammar.combinations();
  std::vector<Multihot> vectors;
  for (const auto& c : s.commands) vectors.push_back(encode_intent(c, s));
  s.valid_set = std::move(vectors);
  s.validate();
  return s;
}

namespace {

std::size_t bit_index(const IntentSchema& schema, const LabelBit& bit) {
  const auto it = std::find(schema.bits.begin(), schema.bits.end(), bit);
  if (it == schema.bits.end()) throw DataError("intent: unknown label '" + bit.name() + "'");
  return static_cast<std::size_t>(it - schema.bits.begin());
}

}  // namespace

Multihot encode_intent(const features::Command& command, const IntentSchema& schema) {
  Multihot v(schema.size(), 0);
  v[bit_index(schema, {LabelBit::Kind::Action, "", command.action})] = 1;
  for (const auto& [slot, value] : command.args) v[bit_index(schema, {LabelBit::Kind::Value, slot, value})] = 1;
  // Schema construction calls this before valid_set exists.
  if (!schema.valid_set.empty() && schema.find(v) == kNotFound) {
    throw DataError("intent: '" + command.action + "' with these arguments is not a valid combination");
  }
  return v;
}

features::Command decode_intent(std::span<const std::uint8_t> multihot, const IntentSchema& schema) {
  if (multihot.size() != schema.size()) throw DataError("intent: vector length differs from schema");
  const std::size_t i = schema.find(multihot);
  if (i == kNotFound) throw DataError("intent: vector is not a valid combination");
  return schema.commands[i];
}

IntentLabel enforce_structure(std::span<const double> probs, const IntentSchema& schema) {
  if (schema.valid_set.empty()) throw ConfigError("intent schema: empty valid set");
  if (probs.size() != schema.size()) throw ShapeError("enforce_structure: probability count differs from schema");
  std::vector<double> log_p(probs.size()), log_q(probs.size());
  for (std::size_t b = 0; b < probs.size(); ++b) {
    const double p = std::clamp(probs[b], 1e-7, 1.0 - 1e-7);
    log_p[b] = std::log(p);
    log_q[b] = std::log(1.0 - p);
  }
  std::size_t best = 0;
  double best_cost = 0.0;
  for (std::size_t i = 0; i < schema.valid_set.size(); ++i) {
    double cost = 0.0;
    for (std::size_t b = 0; b < probs.size(); ++b) cost -= schema.valid_set[i][b] ? log_p[b] : log_q[b];
    if (i == 0 || cost < best_cost) {
      best = i;
      best_cost = cost;
    }
  }
  return {schema.commands[best], schema.valid_set[best], best};
}

IntentLabel enforce_structure_logits(std::span<const float> logits, const IntentSchema& schema) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = 1.0 / (1.0 + std::exp(-double(logits[i])));
  return enforce_structure(p, schema);
}

}  // namespace mslu::slu
