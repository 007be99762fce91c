#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "selftalk/corpus.hpp"

namespace selftalk::corpus {

constexpr int kCorpusSchemaVersion = 1;

namespace detail {

inline nlohmann::json parse_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": parse error: " + e.what());
  }
}

inline void check_schema(const nlohmann::json& j, const std::filesystem::path& path) {
  if (!j.contains("schema_version") || !j["schema_version"].is_number_integer())
    throw DataError(path.string() + ": missing schema_version");
  const int v = j["schema_version"].get<int>();
  if (v != kCorpusSchemaVersion)
    throw DataError(path.string() + ": unsupported schema_version " + std::to_string(v));
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << bytes;
  if (!out) throw DataError("write failed: " + path.string());
}

}  // namespace detail

inline void save_corpus(const Corpus& c, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::string lines;
  {
    nlohmann::json header;
    header["kind"] = "selftalk-corpus";
    header["schema_version"] = kCorpusSchemaVersion;
    header["image_count"] = c.images.size();
    lines += header.dump();
    lines += '\n';
  }
  for (size_t i = 0; i < c.images.size(); ++i) {
    const auto& img = c.images[i];
    const auto& dlg = c.dialogs[i];
    nlohmann::json rec;
    rec["id"] = img.id;
    rec["attributes"] = img.attributes;
    rec["features"] = img.features;
    rec["caption"] = dlg.caption;
    auto& rounds = rec["rounds"] = nlohmann::json::array();
    for (const auto& r : dlg.rounds) rounds.push_back({{"q", r.question}, {"a", r.answer}});
    lines += rec.dump();
    lines += '\n';
  }
  detail::write_file(dir / "corpus.jsonl", lines);

  nlohmann::json vocab;
  vocab["schema_version"] = kCorpusSchemaVersion;
  vocab["tokens"] = c.vocab.tokens();
  detail::write_file(dir / "vocab.json", vocab.dump(2) + "\n");

  nlohmann::json splits;
  splits["schema_version"] = kCorpusSchemaVersion;
  splits["train"] = c.train_ids;
  splits["val"] = c.val_ids;
  splits["test"] = c.test_ids;
  detail::write_file(dir / "splits.json", splits.dump(2) + "\n");
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path corpus_path = dir / "corpus.jsonl";
  std::ifstream in(corpus_path, std::ios::binary);
  if (!in) throw DataError("cannot open " + corpus_path.string());

  Corpus out;
  std::string line;
  size_t line_no = 0;
  size_t expected = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(corpus_path.string() + ":" + std::to_string(line_no) +
                      ": parse error: " + e.what());
    }
    try {
      if (line_no == 1) {
        detail::check_schema(j, corpus_path);
        expected = j.at("image_count").get<size_t>();
        continue;
      }
      SyntheticImage img;
      img.id = j.at("id").get<int>();
      img.attributes = j.at("attributes").get<std::map<std::string, std::string>>();
      img.features = j.at("features").get<Vec>();
      GroundTruthDialog dlg;
      dlg.image_id = img.id;
      dlg.caption = j.at("caption").get<std::string>();
      for (const auto& r : j.at("rounds"))
        dlg.rounds.push_back({r.at("q").get<std::string>(), r.at("a").get<std::string>()});
      if (dlg.rounds.size() != size_t(kDialogRounds))
        throw DataError(corpus_path.string() + ":" + std::to_string(line_no) +
                        ": dialog must have " + std::to_string(kDialogRounds) + " rounds");
      out.images.push_back(std::move(img));
      out.dialogs.push_back(std::move(dlg));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(corpus_path.string() + ":" + std::to_string(line_no) +
                      ": malformed record: " + e.what());
    }
  }
  if (line_no == 0) throw DataError(corpus_path.string() + ": empty file");
  if (out.images.size() != expected)
    throw DataError(corpus_path.string() + ": truncated: expected " +
                    std::to_string(expected) + " images, found " +
                    std::to_string(out.images.size()));
  for (size_t i = 0; i < out.images.size(); ++i)
    if (out.images[i].id != int(i))
      throw DataError(corpus_path.string() + ": image ids must be contiguous from 0");

  const fs::path vocab_path = dir / "vocab.json";
  nlohmann::json vj = detail::parse_json_file(vocab_path);
  detail::check_schema(vj, vocab_path);
  try {
    out.vocab = Vocabulary::from_id_ordered_tokens(vj.at("tokens").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(vocab_path.string() + ": malformed: " + e.what());
  }

  const fs::path splits_path = dir / "splits.json";
  nlohmann::json sj = detail::parse_json_file(splits_path);
  detail::check_schema(sj, splits_path);
  try {
    out.train_ids = sj.at("train").get<std::vector<int>>();
    out.val_ids = sj.at("val").get<std::vector<int>>();
    out.test_ids = sj.at("test").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(splits_path.string() + ": malformed: " + e.what());
  }
  return out;
}

}  // namespace selftalk::corpus
