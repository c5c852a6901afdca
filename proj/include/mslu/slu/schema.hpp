#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mslu/features/grammar.hpp"

namespace mslu::slu {

using Multihot = std::vector<std::uint8_t>;

struct LabelBit {
  enum class Kind { Action, Value };
  Kind kind = Kind::Action;
  std::string slot;   // empty for action bits
  std::string value;  // action name or slot value

  // "grab" or "speed=fast".
  std::string name() const;
  bool operator==(const LabelBit&) const = default;
};

struct IntentLabel {
  features::Command command;
  Multihot multihot;
  std::size_t index = 0;  // position in valid_set
};

// Action bits in declaration order, then one bit per distinct slot=value pair
// in order of first appearance. valid_set[i] encodes commands[i].
struct IntentSchema {
  std::vector<LabelBit> bits;
  std::vector<Multihot> valid_set;
  std::vector<features::Command> commands;

  std::size_t size() const { return bits.size(); }
  std::size_t action_count() const;
  // npos when `v` is not a valid combination.
  std::size_t find(std::span<const std::uint8_t> v) const;

  // Throws ConfigError when an invariant is broken.
  void validate() const;
};

inline constexpr std::size_t kNotFound = static_cast<std::size_t>(-1);

IntentSchema schema_from_grammar(const features::CommandGrammar& grammar);

// Throws DataError for unknown actions, slots or values, and for vectors
// outside valid_set.
Multihot encode_intent(const features::Command& command, const IntentSchema& schema);
features::Command decode_intent(std::span<const std::uint8_t> multihot, const IntentSchema& schema);

// Valid combination with the smallest binary cross-entropy against `probs`,
// probabilities clamped to [1e-7, 1 - 1e-7]. Ties go to the lowest index.
IntentLabel enforce_structure(std::span<const double> probs, const IntentSchema& schema);
IntentLabel enforce_structure_logits(std::span<const float> logits, const IntentSchema& schema);

}  // namespace mslu::slu
