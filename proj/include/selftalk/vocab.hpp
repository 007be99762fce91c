#pragma once

#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "selftalk/common.hpp"

namespace selftalk::corpus {

inline std::vector<std::string> split_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

inline std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += tokens[i];
  }
  return out;
}

// Bijective token <-> id map. Ids 0..3 are reserved; the rest are assigned in
// lexicographic token order so construction is deterministic.
class Vocabulary {
 public:
  static constexpr int kPad = kPadId;
  static constexpr int kStart = kStartId;
  static constexpr int kStop = kStopId;
  static constexpr int kUnk = kUnkId;

  Vocabulary() = default;

  static Vocabulary from_tokens(const std::vector<std::string>& words) {
    Vocabulary v;
    v.tokens_ = {"<pad>", "<s>", "</s>", "<unk>"};
    std::map<std::string, int> seen;
    for (const auto& w : words) {
      if (w.empty()) continue;
      seen.emplace(w, 0);
    }
    for (int i = 0; i < 4; ++i) seen.erase(v.tokens_[size_t(i)]);
    for (auto& [w, _] : seen) v.tokens_.push_back(w);
    for (size_t i = 0; i < v.tokens_.size(); ++i) v.ids_[v.tokens_[i]] = int(i);
    return v;
  }

  static Vocabulary from_id_ordered_tokens(std::vector<std::string> tokens) {
    Vocabulary v;
    if (tokens.size() < 4 || tokens[0] != "<pad>" || tokens[1] != "<s>" ||
        tokens[2] != "</s>" || tokens[3] != "<unk>")
      throw DataError("vocabulary: reserved tokens 0..3 missing or reordered");
    v.tokens_ = std::move(tokens);
    for (size_t i = 0; i < v.tokens_.size(); ++i) {
      if (!v.ids_.emplace(v.tokens_[i], int(i)).second)
        throw DataError("vocabulary: duplicate token '" + v.tokens_[i] + "'");
    }
    return v;
  }

  int size() const { return int(tokens_.size()); }

  int id(const std::string& token) const {
    auto it = ids_.find(token);
    return it == ids_.end() ? kUnk : it->second;
  }

  bool contains(const std::string& token) const { return ids_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || id >= size()) throw IndexError("vocabulary: id out of range");
    return tokens_[size_t(id)];
  }

  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<int> encode(std::string_view text, bool append_stop = true) const {
    std::vector<int> out;
    for (const auto& w : split_tokens(text)) out.push_back(id(w));
    if (append_stop) out.push_back(kStop);
    return out;
  }

  // Inverse of encode: drops the trailing stop token, keeps everything else.
  std::string decode(const std::vector<int>& ids) const {
    std::vector<std::string> words;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == kStop && i + 1 == ids.size()) break;
      words.push_back(token(ids[i]));
    }
    return join_tokens(words);
  }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

}  // namespace selftalk::corpus
