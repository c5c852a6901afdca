#include "mslu/features/grammar.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "mslu/error.hpp"

namespace mslu::features {

namespace {

std::vector<std::string> words(const std::string& line) {
  std::istringstream in(line);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

bool valid_name(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '_' || c == '-' || c == '\'';
  });
}

}  // namespace

const ActionDef& CommandGrammar::action(const std::string& name) const {
  for (const auto& a : actions)
    if (a.name == name) return a;
  throw DataError("unknown action '" + name + "'");
}

std::vector<Command> CommandGrammar::combinations() const {
  std::vector<Command> out;
  for (const auto& a : actions) {
    const std::size_t n = a.slots.size();
    std::vector<std::size_t> idx(n, 0);
    for (;;) {
      Command c{a.name, {}};
      for (std::size_t s = 0; s < n; ++s) c.args[a.slots[s].name] = a.slots[s].values[idx[s]];
      out.push_back(std::move(c));
      std::size_t s = n;
      while (s > 0 && ++idx[s - 1] == a.slots[s - 1].values.size()) idx[--s] = 0;
      if (s == 0) break;
    }
  }
  return out;
}

std::vector<std::string> CommandGrammar::expand(const Command& command,
                                                std::size_t template_index) const {
  const ActionDef& a = action(command.action);
  if (template_index >= a.templates.size()) throw DataError("template index out of range");
  std::vector<std::string> out;
  for (const auto& w : a.templates[template_index]) {
    if (w.front() == '$') {
      auto it = command.args.find(w.substr(1));
      if (it == command.args.end()) throw DataError("missing argument " + w + " for " + a.name);
      out.push_back(it->second);
    } else {
      out.push_back(w);
    }
  }
  return out;
}

std::vector<std::string> CommandGrammar::terminals() const {
  std::set<std::string> set;
  for (const auto& a : actions) {
    for (const auto& s : a.slots) set.insert(s.values.begin(), s.values.end());
    for (const auto& t : a.templates)
      for (const auto& w : t)
        if (w.front() != '$') set.insert(w);
  }
  return {set.begin(), set.end()};
}

CommandGrammar parse_grammar(const std::string& text) {
  CommandGrammar g;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  const auto fail = [&](const std::string& what) {
    throw FormatError("grammar line " + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    auto w = words(line);
    if (w.empty()) continue;
    const std::string& kw = w[0];
    if (kw == "action") {
      if (w.size() != 2 || !valid_name(w[1])) fail("expected 'action NAME'");
      for (const auto& a : g.actions)
        if (a.name == w[1]) fail("duplicate action '" + w[1] + "'");
      g.actions.push_back({w[1], {}, {}});
      continue;
    }
    if (g.actions.empty()) fail("'" + kw + "' before any action");
    ActionDef& a = g.actions.back();
    if (kw == "slot") {
      if (w.size() < 4 || w[2] != "=" || !valid_name(w[1])) fail("expected 'slot NAME = v1 v2 ...'");
      for (const auto& s : a.slots)
        if (s.name == w[1]) fail("duplicate slot '" + w[1] + "'");
      SlotDef slot{w[1], {w.begin() + 3, w.end()}};
      std::set<std::string> seen;
      for (const auto& v : slot.values) {
        if (!valid_name(v)) fail("bad slot value '" + v + "'");
        if (!seen.insert(v).second) fail("duplicate value '" + v + "' in slot " + slot.name);
      }
      a.slots.push_back(std::move(slot));
    } else if (kw == "template") {
      if (w.size() < 2) fail("empty template");
      std::vector<std::string> tpl(w.begin() + 1, w.end());
      std::set<std::string> used;
      for (const auto& t : tpl) {
        if (t.front() == '$') {
          const std::string slot = t.substr(1);
          if (std::none_of(a.slots.begin(), a.slots.end(),
                           [&](const SlotDef& s) { return s.name == slot; })) {
            fail("template references undeclared slot '" + slot + "'");
          }
          used.insert(slot);
        } else if (!valid_name(t)) {
          fail("bad token '" + t + "'");
        }
      }
      if (used.size() != a.slots.size()) fail("template must reference every slot of " + a.name);
      a.templates.push_back(std::move(tpl));
    } else {
      fail("unknown keyword '" + kw + "'");
    }
  }
  ++lineno;
  if (g.actions.empty()) fail("grammar declares no actions");
  for (const auto& a : g.actions)
    if (a.templates.empty()) fail("action '" + a.name + "' has no templates");
  return g;
}

CommandGrammar load_grammar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open grammar " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_grammar(ss.str());
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace mslu::features
