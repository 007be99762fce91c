#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "selftalk/grammar.hpp"
#include "selftalk/numeric.hpp"
#include "selftalk/rng.hpp"
#include "selftalk/vec.hpp"
#include "selftalk/vocab.hpp"

namespace selftalk::corpus {

struct WorldConfig {
  int image_count = 1250;
  std::array<double, 3> split_fractions{0.80, 0.04, 0.16};  // train/val/test
  std::vector<int> attribute_sizes;  // parallel to attribute_table()
  int feature_dim = 32;
  double noise_scale = 0.02;
  double min_separation = 0.35;
  double feature_norm_bound = 8.0;

  static WorldConfig defaults() {
    WorldConfig c;
    c.attribute_sizes = {8, 8, 6, 5, 6, 6, 5, 5, 5, 5};
    return c;
  }

  void validate() const {
    const auto& table = attribute_table();
    if (image_count <= 0) throw ConfigError("world: image_count must be positive");
    if (attribute_sizes.size() != table.size())
      throw ConfigError("world: attribute_sizes must list all " +
                        std::to_string(table.size()) + " attributes");
    double product = 1.0;
    for (size_t a = 0; a < table.size(); ++a) {
      const int n = attribute_sizes[a];
      if (n < 2 || size_t(n) > table[a].values.size())
        throw ConfigError("world: attribute '" + table[a].name + "' size must be in [2, " +
                          std::to_string(table[a].values.size()) + "]");
      product *= double(n);
    }
    if (product < double(image_count))
      throw ConfigError("world: attribute alphabets too small for " +
                        std::to_string(image_count) + " distinct images");
    if (feature_dim < attribute_count())
      throw ConfigError("world: feature_dim must be >= number of attributes");
    if (noise_scale < 0.0 || min_separation <= 0.0 || feature_norm_bound <= 0.0)
      throw ConfigError("world: noise/separation/bound must be positive");
    double fsum = 0.0;
    for (double f : split_fractions) {
      if (f <= 0.0) throw ConfigError("world: split fractions must be positive");
      fsum += f;
    }
    if (std::abs(fsum - 1.0) > 1e-9) throw ConfigError("world: split fractions must sum to 1");
  }
};

struct SyntheticImage {
  int id = 0;
  std::map<std::string, std::string> attributes;
  Vec features;  // y_gt, the fc7 stand-in

  bool operator==(const SyntheticImage&) const = default;
};

struct DialogRound {
  std::string question;  // surface string, terminal "?" token, no stop token
  std::string answer;
  bool operator==(const DialogRound&) const = default;
};

constexpr int kDialogRounds = 10;

struct GroundTruthDialog {
  int image_id = 0;
  std::string caption;
  std::vector<DialogRound> rounds;  // exactly kDialogRounds
  bool operator==(const GroundTruthDialog&) const = default;
};

struct Corpus {
  std::vector<SyntheticImage> images;     // sorted by id
  std::vector<GroundTruthDialog> dialogs;  // parallel to images
  Vocabulary vocab;
  std::vector<int> train_ids, val_ids, test_ids;

  const SyntheticImage& image(int id) const {
    if (id < 0 || size_t(id) >= images.size() || images[size_t(id)].id != id)
      throw DataError("corpus: no image with id " + std::to_string(id));
    return images[size_t(id)];
  }
  const GroundTruthDialog& dialog(int image_id) const {
    image(image_id);
    return dialogs[size_t(image_id)];
  }

  // Distinct values of one attribute observed anywhere in the corpus, sorted.
  std::vector<std::string> observed_values(int attr) const {
    const std::string& name = attribute_table()[size_t(attr)].name;
    std::set<std::string> vals;
    for (const auto& img : images) vals.insert(img.attributes.at(name));
    return {vals.begin(), vals.end()};
  }

  bool operator==(const Corpus& other) const {
    return images == other.images && dialogs == other.dialogs && vocab == other.vocab &&
           train_ids == other.train_ids && val_ids == other.val_ids &&
           test_ids == other.test_ids;
  }
};

// Attribute blocks of the feature space. Each attribute value owns a fixed
// unit-norm block embedding; embeddings within an attribute are regenerated
// until all pairwise distances reach min_separation.
class FeatureRenderer {
 public:
  FeatureRenderer(const WorldConfig& cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const auto& table = attribute_table();
    const int n_attr = attribute_count();
    const int base = cfg_.feature_dim / n_attr;
    const int rem = cfg_.feature_dim % n_attr;
    block_dims_.resize(size_t(n_attr));
    for (int a = 0; a < n_attr; ++a) block_dims_[size_t(a)] = base + (a < rem ? 1 : 0);

    blocks_.resize(size_t(n_attr));
    for (int a = 0; a < n_attr; ++a) {
      const int n_vals = cfg_.attribute_sizes[size_t(a)];
      const int dim = block_dims_[size_t(a)];
      bool placed = false;
      for (uint64_t attempt = 0; attempt < 10000 && !placed; ++attempt) {
        Rng rng = derive_rng(seed, "value-embedding", uint64_t(a), attempt);
        std::vector<Vec> cand(static_cast<size_t>(n_vals));
        for (auto& v : cand) {
          v.resize(size_t(dim));
          double norm = 0.0;
          do {
            for (auto& x : v) x = rng.normal();
            norm = num::norm2(v);
          } while (norm < 1e-9);
          for (auto& x : v) x /= norm;
        }
        placed = true;
        for (int i = 0; i < n_vals && placed; ++i)
          for (int j = i + 1; j < n_vals && placed; ++j)
            if (num::l2_distance_sq(cand[size_t(i)], cand[size_t(j)]) <
                cfg_.min_separation * cfg_.min_separation)
              placed = false;
        if (placed) blocks_[size_t(a)] = std::move(cand);
      }
      if (!placed)
        throw ConfigError("world: cannot separate value embeddings for attribute '" +
                          table[size_t(a)].name + "'; lower min_separation");
    }
  }

  Vec render(const std::map<std::string, std::string>& attributes,
             uint64_t noise_seed) const {
    const auto& table = attribute_table();
    if (attributes.size() != size_t(attribute_count()))
      throw DomainError("features: attribute assignment incomplete");
    Vec out(size_t(cfg_.feature_dim), 0.0);
    size_t offset = 0;
    for (int a = 0; a < attribute_count(); ++a) {
      const auto it = attributes.find(table[size_t(a)].name);
      if (it == attributes.end())
        throw DomainError("features: missing attribute '" + table[size_t(a)].name + "'");
      const int vi = value_index(a, it->second);
      const Vec& block = blocks_[size_t(a)][size_t(vi)];
      std::copy(block.begin(), block.end(), out.begin() + long(offset));
      offset += size_t(block_dims_[size_t(a)]);
    }
    if (cfg_.noise_scale > 0.0) {
      Rng rng(noise_seed);
      for (auto& x : out) x += cfg_.noise_scale * rng.normal();
    }
    const double norm = num::norm2(out);
    if (norm > cfg_.feature_norm_bound)
      for (auto& x : out) x *= cfg_.feature_norm_bound / norm;
    return out;
  }

  int value_index(int attr, const std::string& value) const {
    const auto& spec = attribute_table()[size_t(attr)];
    for (int i = 0; i < cfg_.attribute_sizes[size_t(attr)]; ++i)
      if (spec.values[size_t(i)] == value) return i;
    throw DomainError("features: unknown value '" + value + "' for attribute '" +
                      spec.name + "'");
  }

 private:
  WorldConfig cfg_;
  std::vector<int> block_dims_;
  std::vector<std::vector<Vec>> blocks_;
};

namespace detail {

inline std::vector<int> draw_assignment(const WorldConfig& cfg, Rng& rng) {
  std::vector<int> tuple(static_cast<size_t>(attribute_count()));
  for (int a = 0; a < attribute_count(); ++a)
    tuple[size_t(a)] = int(rng.below(uint64_t(cfg.attribute_sizes[size_t(a)])));
  return tuple;
}

}  // namespace detail

// Pure function of (config, seed): images with unique attribute assignments,
// one caption and one 10-round grammar dialog per image, disjoint splits.
inline Corpus generate_corpus(const WorldConfig& cfg, uint64_t seed) {
  cfg.validate();
  const auto& table = attribute_table();
  FeatureRenderer renderer(cfg, mix_seed(seed, "features"));

  Corpus out;
  std::set<std::vector<int>> used;
  for (int i = 0; i < cfg.image_count; ++i) {
    Rng rng = derive_rng(seed, "image", uint64_t(i));
    std::vector<int> tuple;
    do {
      tuple = detail::draw_assignment(cfg, rng);
    } while (!used.insert(tuple).second);

    SyntheticImage img;
    img.id = i;
    for (int a = 0; a < attribute_count(); ++a)
      img.attributes[table[size_t(a)].name] = table[size_t(a)].values[size_t(tuple[size_t(a)])];
    img.features = renderer.render(img.attributes, mix_seed(seed, "image-noise", uint64_t(i)));
    out.images.push_back(std::move(img));
  }

  for (const auto& img : out.images) {
    Rng rng = derive_rng(seed, "dialog", uint64_t(img.id));
    GroundTruthDialog d;
    d.image_id = img.id;
    d.caption = caption_for(img.attributes.at("color"), img.attributes.at("object"));
    std::vector<int> order(static_cast<size_t>(attribute_count()));
    for (int a = 0; a < attribute_count(); ++a) order[size_t(a)] = a;
    rng.shuffle(order);
    for (int r = 0; r < kDialogRounds; ++r) {
      const int attr = order[size_t(r) % order.size()];
      const auto& spec = table[size_t(attr)];
      const std::string& value = img.attributes.at(spec.name);
      DialogRound round;
      round.question = spec.question_forms[rng.below(spec.question_forms.size())];
      round.answer = rng.next_double() < 0.5 ? short_answer(attr, value)
                                             : long_answer(attr, value);
      d.rounds.push_back(std::move(round));
    }
    out.dialogs.push_back(std::move(d));
  }

  std::vector<std::string> words;
  for (const auto& d : out.dialogs) {
    for (const auto& w : split_tokens(d.caption)) words.push_back(w);
    for (const auto& r : d.rounds) {
      for (const auto& w : split_tokens(r.question)) words.push_back(w);
      for (const auto& w : split_tokens(r.answer)) words.push_back(w);
    }
  }
  out.vocab = Vocabulary::from_tokens(words);

  const long long n = cfg.image_count;
  const long long n_train = llround(cfg.split_fractions[0] * double(n));
  const long long n_val = llround(cfg.split_fractions[1] * double(n));
  const long long n_test = n - n_train - n_val;
  if (n_train <= 0 || n_val <= 0 || n_test <= 0)
    throw ConfigError("world: split fractions leave an empty split");
  for (int i = 0; i < n; ++i) {
    if (i < n_train)
      out.train_ids.push_back(i);
    else if (i < n_train + n_val)
      out.val_ids.push_back(i);
    else
      out.test_ids.push_back(i);
  }
  return out;
}

struct CandidatePool {
  int image_id = 0;
  std::string question;
  std::vector<std::string> candidates;
  std::vector<double> relevance;  // grades in {0, 0.5, 1.0}
  int gt_index = 0;
};

// Retrieval pool for one (image, question) context: the ground-truth short
// answer (grade 1.0), its long-form paraphrase (grade 0.5), then hard
// same-attribute distractors before other-attribute fillers.
inline CandidatePool make_candidate_pool(const SyntheticImage& image,
                                         const std::string& question, const Corpus& corpus,
                                         int k, uint64_t seed) {
  if (k < 2) throw DataError("pool: K must be >= 2");
  const auto attr_opt = question_attribute(question);
  if (!attr_opt) throw DataError("pool: question is not a grammar question: " + question);
  const int attr = *attr_opt;
  const std::string& name = attribute_table()[size_t(attr)].name;
  const std::string value = image.attributes.at(name);

  const std::string gt = short_answer(attr, value);
  std::vector<std::string> distractors;  // grade-0 fillers, hard ones first
  for (const auto& v : corpus.observed_values(attr)) {
    if (v == value) continue;
    distractors.push_back(short_answer(attr, v));
    distractors.push_back(long_answer(attr, v));
  }
  for (int a = 0; a < attribute_count() && int(distractors.size()) < 4 * k; ++a) {
    if (a == attr) continue;
    for (const auto& v : corpus.observed_values(a)) {
      distractors.push_back(short_answer(a, v));
      distractors.push_back(long_answer(a, v));
    }
  }
  if (int(distractors.size()) < k - 2)
    throw DataError("pool: insufficient distinct answers for K=" + std::to_string(k));

  Rng rng = derive_rng(seed, "pool", uint64_t(image.id), hash_str(question));
  rng.shuffle(distractors);
  distractors.resize(size_t(k - 2));

  CandidatePool pool;
  pool.image_id = image.id;
  pool.question = question;
  pool.candidates.push_back(gt);
  pool.relevance.push_back(1.0);
  pool.candidates.push_back(long_answer(attr, value));
  pool.relevance.push_back(0.5);
  for (auto& s : distractors) {
    pool.candidates.push_back(std::move(s));
    pool.relevance.push_back(0.0);
  }
  std::vector<size_t> perm(pool.candidates.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<std::string> cands(perm.size());
  std::vector<double> grades(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) {
    cands[i] = std::move(pool.candidates[perm[i]]);
    grades[i] = pool.relevance[perm[i]];
    if (perm[i] == 0) pool.gt_index = int(i);
  }
  pool.candidates = std::move(cands);
  pool.relevance = std::move(grades);
  return pool;
}

}  // namespace selftalk::corpus
