#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selftalk/common.hpp"
#include "selftalk/vocab.hpp"

namespace selftalk::corpus {

// The synthetic world is described by ten categorical attributes. Questions
// and answers are generated from the per-attribute templates below, which
// doubles as an executable answer oracle for tests and for relevance grading.
struct AttributeSpec {
  std::string name;
  std::vector<std::string> values;          // full word list; config may truncate
  std::vector<std::string> question_forms;  // surface forms, terminal "?" token
  std::string long_answer_prefix;           // long-form answers: "<prefix> <value>"
};

inline const std::vector<AttributeSpec>& attribute_table() {
  static const std::vector<AttributeSpec> table = {
      {"object",
       {"cube", "ball", "cone", "ring", "block", "disk", "prism", "wedge", "slab", "knob",
        "spool", "wheel"},
       {"what is the object ?", "what kind of thing is it ?"},
       "it is a"},
      {"color",
       {"red", "blue", "green", "yellow", "purple", "orange", "white", "black", "gray",
        "brown", "pink", "teal"},
       {"what color is it ?", "which color does it have ?"},
       "it is"},
      {"count",
       {"one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
        "eleven", "twelve"},
       {"how many are there ?", "what is the count ?"},
       "there are"},
      {"size",
       {"tiny", "small", "medium", "large", "huge", "giant", "narrow", "wide", "tall",
        "short", "slim", "bulky"},
       {"what size is it ?", "how big is it ?"},
       "it is"},
      {"material",
       {"wood", "metal", "glass", "stone", "cloth", "paper", "clay", "rubber", "steel",
        "copper", "wool", "sand"},
       {"what is it made of ?", "which material is it ?"},
       "it is made of"},
      {"scene",
       {"kitchen", "garden", "office", "street", "beach", "forest", "garage", "attic",
        "cellar", "market", "studio", "museum"},
       {"where is the scene ?", "what place is this ?"},
       "it is in the"},
      {"lighting",
       {"bright", "dim", "dark", "sunny", "shaded", "gloomy", "glowing", "backlit", "neon",
        "soft", "harsh", "pale"},
       {"how is the lighting ?", "how bright is the light ?"},
       "the light is"},
      {"position",
       {"left", "right", "center", "top", "bottom", "corner", "edge", "front", "back",
        "middle", "side", "inside"},
       {"where is it placed ?", "which spot is it in ?"},
       "it is at the"},
      {"texture",
       {"smooth", "rough", "bumpy", "fuzzy", "glossy", "matte", "grainy", "ridged", "silky",
        "coarse", "waxy", "spiky"},
       {"what texture does it have ?", "how does it feel ?"},
       "it feels"},
      {"pattern",
       {"plain", "striped", "dotted", "checked", "swirled", "banded", "marbled", "speckled",
        "woven", "zigzag", "mottled", "solid"},
       {"what pattern is on it ?", "which pattern does it show ?"},
       "it shows a"},
  };
  return table;
}

inline int attribute_count() { return int(attribute_table().size()); }

inline int attribute_index(const std::string& name) {
  const auto& table = attribute_table();
  for (size_t i = 0; i < table.size(); ++i)
    if (table[i].name == name) return int(i);
  throw DomainError("grammar: unknown attribute '" + name + "'");
}

// Canonical string form used for all question string matching: lowercase,
// single-space joined, terminal "?" token stripped.
inline std::string canonical_question(const std::string& question) {
  auto toks = split_tokens(question);
  while (!toks.empty() && (toks.back() == "?" || toks.back() == "</s>")) toks.pop_back();
  for (auto& t : toks)
    for (auto& c : t) c = char(std::tolower(static_cast<unsigned char>(c)));
  return join_tokens(toks);
}

// Maps a question string back to the attribute it asks about; nullopt when the
// string is not a grammar question.
inline std::optional<int> question_attribute(const std::string& question) {
  const std::string canon = canonical_question(question);
  const auto& table = attribute_table();
  for (size_t a = 0; a < table.size(); ++a)
    for (const auto& form : table[a].question_forms)
      if (canonical_question(form) == canon) return int(a);
  return std::nullopt;
}

inline std::string short_answer(int attr, const std::string& value) {
  (void)attr;
  return value;
}

inline std::string long_answer(int attr, const std::string& value) {
  return attribute_table()[size_t(attr)].long_answer_prefix + " " + value;
}

// Extracts the attribute value named by an answer string, or nullopt when the
// string is not a well-formed answer for this attribute.
inline std::optional<std::string> parse_answer(int attr, const std::string& answer) {
  const auto& spec = attribute_table()[size_t(attr)];
  auto toks = split_tokens(answer);
  while (!toks.empty() && toks.back() == "</s>") toks.pop_back();
  if (toks.empty()) return std::nullopt;
  const std::string value = toks.back();
  toks.pop_back();
  const std::string prefix = join_tokens(toks);
  if (!prefix.empty() && prefix != spec.long_answer_prefix) return std::nullopt;
  for (const auto& v : spec.values)
    if (v == value) return value;
  return std::nullopt;
}

inline std::string caption_for(const std::string& color, const std::string& object) {
  return "a " + color + " " + object;
}

}  // namespace selftalk::corpus
