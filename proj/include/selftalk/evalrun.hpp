#pragma once

// End-to-end evaluation driver: self-talk generation with beam decoding, the
// diversity/relevance block, answer retrieval, and the per-round diagnostics.

#include <set>
#include <string>
#include <vector>

#include "selftalk/corpus.hpp"
#include "selftalk/grammar.hpp"
#include "selftalk/metrics.hpp"
#include "selftalk/parallel.hpp"
#include "selftalk/training.hpp"

namespace selftalk::evalrun {

using agents::AgentParams;

struct EvalConfig {
  std::string split = "test";
  int pool_size = 16;    // image pool for percentile rank: true + 5 NN + random
  int candidate_k = 20;  // answer candidates per retrieval item
  int beam_size = 5;
  int rounds = 10;
  int max_question_len = 8;
  int max_answer_len = 6;
  int max_retrieval_items = 0;  // 0 = every round of every split dialog
  std::string checkpoint_stage = "rl";  // which checkpoints selftalk/evaluate load

  void validate() const {
    if (split != "train" && split != "val" && split != "test")
      throw ConfigError("eval: split must be train, val or test");
    if (pool_size < 7) throw ConfigError("eval: pool_size must be >= 7 (true + 5 NN + 1)");
    if (candidate_k < 2) throw ConfigError("eval: candidate_k must be >= 2");
    if (beam_size < 1 || rounds < 1) throw ConfigError("eval: bad beam size or rounds");
    if (max_question_len < 1 || max_answer_len < 1)
      throw ConfigError("eval: decode length limits must be >= 1");
    if (max_retrieval_items < 0) throw ConfigError("eval: max_retrieval_items must be >= 0");
    if (checkpoint_stage != "sl" && checkpoint_stage != "rl")
      throw ConfigError("eval: checkpoint_stage must be sl or rl");
  }
};

struct MetricsReport {
  std::string run_id;
  metrics::DiversityReport diversity;
  double nll_relevance = 0.0;
  metrics::RetrievalReport retrieval;
  std::vector<double> cosine_curve;      // rounds entries
  std::vector<double> percentile_curve;  // rounds + 1 entries, round 0 = caption only
  double alt_repeat_rate = 0.0;
  long episode_count = 0;
  int rounds = 0;
};

inline const std::vector<int>& split_ids(const corpus::Corpus& c, const std::string& split) {
  if (split == "train") return c.train_ids;
  if (split == "val") return c.val_ids;
  return c.test_ids;
}

// Percentile-rank image pool: the true image, its 5 nearest split neighbours
// in feature space, and random split fillers.
inline std::vector<int> make_image_pool(const corpus::Corpus& c,
                                        const std::vector<int>& ids, int true_id,
                                        int pool_size, uint64_t seed) {
  check_domain(int(ids.size()) >= pool_size,
               "eval: split smaller than the percentile pool size");
  std::vector<std::pair<double, int>> by_dist;
  for (int id : ids) {
    if (id == true_id) continue;
    by_dist.emplace_back(num::l2_distance_sq(c.image(true_id).features, c.image(id).features),
                         id);
  }
  std::sort(by_dist.begin(), by_dist.end());
  std::vector<int> pool = {true_id};
  for (int i = 0; i < 5 && size_t(i) < by_dist.size(); ++i)
    pool.push_back(by_dist[size_t(i)].second);

  std::vector<int> rest;
  for (size_t i = 5; i < by_dist.size(); ++i) rest.push_back(by_dist[i].second);
  Rng rng = derive_rng(seed, "image-pool", uint64_t(true_id));
  rng.shuffle(rest);
  for (int id : rest) {
    if (int(pool.size()) >= pool_size) break;
    pool.push_back(id);
  }
  return pool;
}

// Canonical question string for metric purposes. A degenerate decode (stop
// token only) maps to a placeholder so string metrics stay well-defined;
// trained checkpoints do not hit this path.
inline std::string question_string(const corpus::Vocabulary& vocab,
                                   const std::vector<int>& tokens) {
  std::string canon = corpus::canonical_question(vocab.decode(tokens));
  return canon.empty() ? "<empty>" : canon;
}

inline MetricsReport run_evaluation(const corpus::Corpus& c, const AgentParams& qbot,
                                    const AgentParams& abot, const EvalConfig& cfg,
                                    uint64_t seed) {
  cfg.validate();
  const std::vector<int>& ids = split_ids(c, cfg.split);
  check_domain(!ids.empty(), "eval: empty split");
  train::TokenizedCorpus tc = train::TokenizedCorpus::from(c);

  // Self-talk with beam decoding, one episode per split image.
  agents::DecodeConfig q_cfg{.mode = agents::DecodeConfig::Mode::beam,
                             .beam_size = cfg.beam_size,
                             .max_len = cfg.max_question_len};
  agents::DecodeConfig a_cfg{.mode = agents::DecodeConfig::Mode::beam,
                             .beam_size = cfg.beam_size,
                             .max_len = cfg.max_answer_len};
  std::vector<train::Episode> episodes(ids.size());
  parallel_for(ids.size(), [&](size_t i) {
    const int id = ids[i];
    episodes[i] = train::run_selftalk_episode(qbot, abot, c.image(id).features,
                                              tc.dialogs[size_t(id)].caption, cfg.rounds,
                                              q_cfg, a_cfg, nullptr);
    episodes[i].transcript.image_id = id;
  });

  MetricsReport rep;
  rep.rounds = cfg.rounds;
  rep.episode_count = long(episodes.size());

  std::vector<std::vector<std::string>> question_dialogs;
  for (const auto& ep : episodes) {
    std::vector<std::string> qs;
    for (const auto& q : ep.transcript.questions) qs.push_back(question_string(c.vocab, q));
    question_dialogs.push_back(std::move(qs));
  }
  std::set<std::string> train_questions;
  for (int id : c.train_ids)
    for (const auto& r : c.dialog(id).rounds)
      train_questions.insert(corpus::canonical_question(r.question));

  rep.diversity = metrics::diversity_eval(question_dialogs, train_questions);
  rep.alt_repeat_rate = metrics::alt_repeat_rate(question_dialogs);
  rep.nll_relevance = metrics::nll_relevance(qbot, tc, ids);

  {
    std::vector<train::DialogTranscript> transcripts;
    for (const auto& ep : episodes) transcripts.push_back(ep.transcript);
    rep.cosine_curve = metrics::state_similarity_curve(transcripts);
  }

  // Percentile rank of the true image per round, averaged over episodes.
  rep.percentile_curve.assign(size_t(cfg.rounds) + 1, 0.0);
  {
    std::vector<std::vector<double>> per_episode(episodes.size());
    parallel_for(episodes.size(), [&](size_t i) {
      const int id = ids[i];
      const auto pool_ids = make_image_pool(c, ids, id, cfg.pool_size, seed);
      std::vector<Vec> pool_feats;
      for (int pid : pool_ids) pool_feats.push_back(c.image(pid).features);
      per_episode[i].resize(size_t(cfg.rounds) + 1);
      for (int t = 0; t <= cfg.rounds; ++t)
        per_episode[i][size_t(t)] = metrics::percentile_rank(
            episodes[i].trace.predictions[size_t(t)], pool_feats, 0);
    });
    for (const auto& curve : per_episode)
      for (size_t t = 0; t < curve.size(); ++t) rep.percentile_curve[t] += curve[t];
    for (auto& v : rep.percentile_curve) v /= double(episodes.size());
  }

  // Answer retrieval on ground-truth contexts.
  std::vector<metrics::RetrievalItem> items;
  for (int id : ids) {
    for (int r = 0; r < corpus::kDialogRounds; ++r) {
      metrics::RetrievalItem item;
      item.image_id = id;
      item.round = r;
      item.pool = corpus::make_candidate_pool(c.image(id), c.dialog(id).rounds[size_t(r)].question,
                                              c, cfg.candidate_k,
                                              mix_seed(seed, "pool", uint64_t(id), uint64_t(r)));
      items.push_back(std::move(item));
      if (cfg.max_retrieval_items > 0 && int(items.size()) >= cfg.max_retrieval_items) break;
    }
    if (cfg.max_retrieval_items > 0 && int(items.size()) >= cfg.max_retrieval_items) break;
  }
  {
    std::vector<metrics::ScoredPool> scored(items.size());
    parallel_for(items.size(),
                 [&](size_t i) { scored[i] = metrics::score_pool(abot, c, tc, items[i]); });
    rep.retrieval = metrics::rank_metrics(scored);
  }
  return rep;
}

}  // namespace selftalk::evalrun
