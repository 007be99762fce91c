#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "selftalk/agents.hpp"
#include "selftalk/common.hpp"
#include "selftalk/corpus.hpp"
#include "selftalk/numeric.hpp"
#include "selftalk/training.hpp"
#include "selftalk/vocab.hpp"

namespace selftalk::metrics {

using corpus::split_tokens;

// ---------------------------------------------------------------------------
// Diversity

inline int novel_question_count(const std::set<std::string>& generated,
                                const std::set<std::string>& train_questions) {
  int count = 0;
  for (const auto& q : generated)
    if (!train_questions.count(q)) ++count;
  return count;
}

inline int unique_questions(const std::vector<std::string>& dialog_questions) {
  return int(std::set<std::string>(dialog_questions.begin(), dialog_questions.end()).size());
}

namespace detail {

using Ngram = std::vector<std::string>;

inline std::map<Ngram, int> ngram_counts(const std::vector<std::string>& tokens, int n) {
  std::map<Ngram, int> counts;
  for (size_t i = 0; i + size_t(n) <= tokens.size(); ++i)
    ++counts[Ngram(tokens.begin() + long(i), tokens.begin() + long(i + size_t(n)))];
  return counts;
}

}  // namespace detail

// BLEU-4 with add-1 smoothing on the n >= 2 precisions. Ten-token questions
// rarely share 4-grams, so unsmoothed BLEU-4 would be almost everywhere zero;
// the unigram precision stays raw so disjoint sentences still score 0.
inline double bleu4(const std::vector<std::string>& hypothesis,
                    const std::vector<std::string>& references) {
  check_domain(!hypothesis.empty(), "bleu4: empty hypothesis");
  check_domain(!references.empty(), "bleu4: no references");

  std::vector<std::vector<std::string>> ref_tokens;
  for (const auto& r : references) ref_tokens.push_back(split_tokens(r));

  double log_sum = 0.0;
  for (int n = 1; n <= 4; ++n) {
    auto hyp_counts = detail::ngram_counts(hypothesis, n);
    std::map<detail::Ngram, int> max_ref;
    for (const auto& ref : ref_tokens)
      for (const auto& [g, c] : detail::ngram_counts(ref, n))
        max_ref[g] = std::max(max_ref[g], c);
    long clipped = 0, total = 0;
    for (const auto& [g, c] : hyp_counts) {
      total += c;
      auto it = max_ref.find(g);
      clipped += std::min<long>(c, it == max_ref.end() ? 0 : it->second);
    }
    const double smooth = n >= 2 ? 1.0 : 0.0;
    const double p = (double(clipped) + smooth) / (double(total) + smooth);
    if (p <= 0.0) return 0.0;  // raw unigram precision of zero dominates
    log_sum += 0.25 * std::log(p);
  }

  const long c = long(hypothesis.size());
  long r = long(ref_tokens.front().size());
  for (const auto& ref : ref_tokens) {
    const long len = long(ref.size());
    if (std::abs(len - c) < std::abs(r - c) || (std::abs(len - c) == std::abs(r - c) && len < r))
      r = len;
  }
  const double bp = c >= r ? 1.0 : std::exp(1.0 - double(r) / double(c));
  return bp * std::exp(log_sum);
}

// Mean BLEU-4 of each question against the other questions of the dialog.
inline double mutual_overlap(const std::vector<std::string>& questions) {
  check_domain(questions.size() >= 2, "mutual_overlap: need at least two questions");
  double sum = 0.0;
  for (size_t i = 0; i < questions.size(); ++i) {
    std::vector<std::string> refs;
    for (size_t j = 0; j < questions.size(); ++j)
      if (j != i) refs.push_back(questions[j]);
    sum += bleu4(split_tokens(questions[i]), refs);
  }
  return sum / double(questions.size());
}

// dist_n: unique n-grams over total tokens. ent_n: Shannon entropy of the
// n-gram frequency distribution, natural log by default.
inline double dist_n(const std::vector<std::string>& questions, int n) {
  check_domain(n >= 1, "dist_n: n must be >= 1");
  std::set<detail::Ngram> unique;
  long total_tokens = 0;
  for (const auto& q : questions) {
    auto toks = split_tokens(q);
    total_tokens += long(toks.size());
    for (auto& [g, c] : detail::ngram_counts(toks, n)) unique.insert(g);
  }
  check_domain(total_tokens >= n, "dist_n: fewer tokens than n");
  return double(unique.size()) / double(total_tokens);
}

inline double ent_n(const std::vector<std::string>& questions, int n,
                    double log_base = 0.0 /* 0 = natural log */) {
  check_domain(n >= 1, "ent_n: n must be >= 1");
  std::map<detail::Ngram, long> counts;
  long total_tokens = 0;
  long total_ngrams = 0;
  for (const auto& q : questions) {
    auto toks = split_tokens(q);
    total_tokens += long(toks.size());
    for (auto& [g, c] : detail::ngram_counts(toks, n)) {
      counts[g] += c;
      total_ngrams += c;
    }
  }
  check_domain(total_tokens >= n, "ent_n: fewer tokens than n");
  double h = 0.0;
  for (const auto& [g, c] : counts) {
    const double p = double(c) / double(total_ngrams);
    h -= p * std::log(p);
  }
  if (log_base > 0.0) h /= std::log(log_base);
  return h;
}

struct DiversityReport {
  int novel_question_count = 0;
  double unique_questions_mean = 0.0, unique_questions_stderr = 0.0;
  double mutual_overlap_mean = 0.0, mutual_overlap_stderr = 0.0;
  double ent1 = 0.0, ent2 = 0.0, dist1 = 0.0, dist2 = 0.0;
  std::vector<int> per_dialog_unique;
  std::vector<double> per_dialog_overlap;
};

namespace detail {

inline std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  if (xs.empty()) return {0.0, 0.0};
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / double(xs.size() - 1));
  return {mean, sd / std::sqrt(double(xs.size()))};
}

}  // namespace detail

// Aggregates the Table-1 style diversity block over generated dialogs; every
// question string must already be canonical.
inline DiversityReport diversity_eval(const std::vector<std::vector<std::string>>& dialogs,
                                      const std::set<std::string>& train_questions) {
  check_domain(!dialogs.empty(), "diversity_eval: no dialogs");
  DiversityReport rep;
  std::set<std::string> generated;
  std::vector<std::string> all_questions;
  std::vector<double> uniques, overlaps;
  for (const auto& d : dialogs) {
    rep.per_dialog_unique.push_back(unique_questions(d));
    uniques.push_back(double(rep.per_dialog_unique.back()));
    rep.per_dialog_overlap.push_back(mutual_overlap(d));
    overlaps.push_back(rep.per_dialog_overlap.back());
    for (const auto& q : d) {
      generated.insert(q);
      all_questions.push_back(q);
    }
  }
  rep.novel_question_count = novel_question_count(generated, train_questions);
  std::tie(rep.unique_questions_mean, rep.unique_questions_stderr) =
      detail::mean_stderr(uniques);
  std::tie(rep.mutual_overlap_mean, rep.mutual_overlap_stderr) =
      detail::mean_stderr(overlaps);
  rep.dist1 = dist_n(all_questions, 1);
  rep.dist2 = dist_n(all_questions, 2);
  rep.ent1 = ent_n(all_questions, 1);
  rep.ent2 = ent_n(all_questions, 2);
  return rep;
}

// Fraction of (t, t+2) question pairs with identical strings, pooled.
inline double alt_repeat_rate(const std::vector<std::vector<std::string>>& dialogs) {
  long pairs = 0, matches = 0;
  for (const auto& d : dialogs) {
    check_domain(d.size() >= 3, "alt_repeat_rate: dialogs need at least 3 rounds");
    for (size_t t = 0; t + 2 < d.size(); ++t) {
      ++pairs;
      if (d[t] == d[t + 2]) ++matches;
    }
  }
  check_domain(pairs > 0, "alt_repeat_rate: no eligible pairs");
  return double(matches) / double(pairs);
}

// ---------------------------------------------------------------------------
// Retrieval

struct RetrievalReport {
  double ndcg = 0.0, mrr = 0.0;
  double r_at_1 = 0.0, r_at_5 = 0.0, r_at_10 = 0.0;
  double mean_rank = 0.0;
  long item_count = 0;
};

struct ScoredPool {
  Vec scores;               // model score per candidate, higher ranks first
  std::vector<double> relevance;
  int gt_index = 0;
};

// Core ranking metrics over pre-scored pools; ties break by candidate index.
// NDCG truncates at the number of positive-grade candidates.
inline RetrievalReport rank_metrics(const std::vector<ScoredPool>& items) {
  check_contract(!items.empty(), "rank_metrics: no items");
  RetrievalReport rep;
  rep.item_count = long(items.size());
  for (const auto& item : items) {
    const size_t k = item.scores.size();
    check_contract(k >= 1 && item.relevance.size() == k, "rank_metrics: malformed pool");
    check_contract(item.gt_index >= 0 && size_t(item.gt_index) < k,
                   "rank_metrics: bad gt_index");
    bool has_one = false;
    for (double g : item.relevance) has_one = has_one || g == 1.0;
    if (!has_one) throw ContractError("rank_metrics: pool has no grade-1.0 candidate");

    std::vector<size_t> order(k);
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      if (item.scores[a] != item.scores[b]) return item.scores[a] > item.scores[b];
      return a < b;
    });
    size_t rank = 0;
    for (size_t i = 0; i < k; ++i)
      if (order[i] == size_t(item.gt_index)) rank = i + 1;

    rep.mrr += 1.0 / double(rank);
    rep.mean_rank += double(rank);
    if (rank <= 1) rep.r_at_1 += 1.0;
    if (rank <= 5) rep.r_at_5 += 1.0;
    if (rank <= 10) rep.r_at_10 += 1.0;

    size_t positives = 0;
    for (double g : item.relevance)
      if (g > 0.0) ++positives;
    double dcg = 0.0, idcg = 0.0;
    std::vector<double> ideal = item.relevance;
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    for (size_t i = 0; i < positives && i < k; ++i) {
      dcg += item.relevance[order[i]] / std::log2(double(i) + 2.0);
      idcg += ideal[i] / std::log2(double(i) + 2.0);
    }
    rep.ndcg += dcg / idcg;
  }
  const double n = double(items.size());
  rep.ndcg /= n;
  rep.mrr /= n;
  rep.r_at_1 /= n;
  rep.r_at_5 /= n;
  rep.r_at_10 /= n;
  rep.mean_rank /= n;
  return rep;
}

// Percentile rank of the true image in a feature pool, ranked by squared L2
// distance to the prediction (closest = rank 1, ties by pool index).
inline double percentile_rank(const Vec& prediction, const std::vector<Vec>& pool,
                              int true_index) {
  check_domain(pool.size() >= 2, "percentile_rank: pool must hold at least 2 images");
  check_domain(true_index >= 0 && size_t(true_index) < pool.size(),
               "percentile_rank: bad true_index");
  Vec dists(pool.size());
  for (size_t i = 0; i < pool.size(); ++i)
    dists[i] = num::l2_distance_sq(prediction, pool[i]);
  size_t rank = 1;
  for (size_t i = 0; i < pool.size(); ++i) {
    if (i == size_t(true_index)) continue;
    if (dists[i] < dists[size_t(true_index)] ||
        (dists[i] == dists[size_t(true_index)] && i < size_t(true_index)))
      ++rank;
  }
  const double p = double(pool.size());
  return (p - double(rank)) / (p - 1.0);
}

// Per-round mean cosine of successive Q-bot states across transcripts.
inline std::vector<double> state_similarity_curve(
    const std::vector<train::DialogTranscript>& transcripts) {
  check_contract(!transcripts.empty(), "state_similarity_curve: no transcripts");
  const size_t rounds = transcripts.front().questions.size();
  std::vector<double> curve(rounds, 0.0);
  for (const auto& t : transcripts) {
    if (t.q_states.size() != rounds + 1)
      throw ContractError("state_similarity_curve: transcript missing its state trace");
    for (size_t r = 0; r < rounds; ++r)
      curve[r] += num::cosine_similarity(t.q_states[r], t.q_states[r + 1]);
  }
  for (auto& v : curve) v /= double(transcripts.size());
  return curve;
}

// ---------------------------------------------------------------------------
// Model-conditioned metrics

// Mean per-token negative log-likelihood of held-out ground-truth questions
// under the Q-bot decoder conditioned on teacher-forced history.
inline double nll_relevance(const agents::AgentParams& qbot,
                            const train::TokenizedCorpus& tc,
                            const std::vector<int>& image_ids) {
  check_contract(qbot.role == agents::AgentRole::qbot, "nll_relevance: wrong agent role");
  double total_nll = 0.0;
  long total_tokens = 0;
  for (int id : image_ids) {
    const auto& d = tc.dialogs.at(size_t(id));
    agents::QBotState st = agents::qbot_update_state(agents::qbot_start(qbot), d.caption, qbot);
    for (size_t t = 0; t < d.questions.size(); ++t) {
      total_nll -= agents::score_sequence(qbot, st.s, d.questions[t]);
      total_tokens += long(d.questions[t].size());
      std::vector<int> fact = d.questions[t];
      fact.insert(fact.end(), d.answers[t].begin(), d.answers[t].end());
      st = agents::qbot_update_state(st, fact, qbot);
    }
  }
  check_contract(total_tokens > 0, "nll_relevance: no question tokens");
  return total_nll / double(total_tokens);
}

struct RetrievalItem {
  int image_id = 0;
  int round = 0;  // 0-based round whose question is scored
  corpus::CandidatePool pool;
};

// Scores every candidate answer with the A-bot decoder conditioned on the
// image, teacher-forced history, and the round's question.
inline ScoredPool score_pool(const agents::AgentParams& abot, const corpus::Corpus& c,
                             const train::TokenizedCorpus& tc, const RetrievalItem& item) {
  const auto& d = tc.dialogs.at(size_t(item.image_id));
  const Vec& img = c.image(item.image_id).features;
  agents::ABotState st = agents::abot_start(abot, img, d.caption);
  for (int r = 0; r < item.round; ++r) {
    st = agents::abot_read_question(st, abot, img, d.questions[size_t(r)]);
    st = agents::abot_commit_answer(st, abot, img, d.questions[size_t(r)], d.answers[size_t(r)]);
  }
  st = agents::abot_read_question(st, abot, img, d.questions[size_t(item.round)]);

  ScoredPool scored;
  scored.relevance = item.pool.relevance;
  scored.gt_index = item.pool.gt_index;
  scored.scores.reserve(item.pool.candidates.size());
  for (const auto& cand : item.pool.candidates)
    scored.scores.push_back(agents::score_sequence(abot, st.s, c.vocab.encode(cand)));
  return scored;
}

inline RetrievalReport retrieval_eval(const agents::AgentParams& abot,
                                      const corpus::Corpus& c,
                                      const train::TokenizedCorpus& tc,
                                      const std::vector<RetrievalItem>& items) {
  check_contract(abot.role == agents::AgentRole::abot, "retrieval_eval: wrong agent role");
  std::vector<ScoredPool> scored;
  scored.reserve(items.size());
  for (const auto& item : items) scored.push_back(score_pool(abot, c, tc, item));
  return rank_metrics(scored);
}

}  // namespace selftalk::metrics
