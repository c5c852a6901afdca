#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mslu::features {

struct SlotDef {
  std::string name;
  std::vector<std::string> values;
};

// A template is a token list; "$slot" entries are holes filled by slot values.
struct ActionDef {
  std::string name;
  std::vector<SlotDef> slots;
  std::vector<std::vector<std::string>> templates;
};

struct Command {
  std::string action;
  std::map<std::string, std::string> args;

  bool operator==(const Command&) const = default;
  auto operator<=>(const Command&) const = default;
};

// Line format, '#' starts a comment:
//   action NAME
//   slot NAME = value value ...
//   template word $slot word ...
// Slots and templates attach to the most recent action.
struct CommandGrammar {
  std::vector<ActionDef> actions;

  const ActionDef& action(const std::string& name) const;

  // Every (action, argument assignment) in declaration order, slot values
  // varying fastest in the last slot.
  std::vector<Command> combinations() const;

  std::vector<std::string> expand(const Command& command, std::size_t template_index) const;

  // Sorted unique surface tokens over all templates and slot values.
  std::vector<std::string> terminals() const;
};

// Throws FormatError "grammar line N: ..." on malformed input.
CommandGrammar parse_grammar(const std::string& text);
CommandGrammar load_grammar(const std::filesystem::path& path);

}  // namespace mslu::features
