#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "selftalk/metrics.hpp"

using namespace selftalk;
using namespace selftalk::metrics;

#include "metric_oracles.hpp"

TEST(NovelQuestions, SetSemantics) {
  EXPECT_EQ(novel_question_count({"a", "b"}, {"a", "b", "c"}), 0);
  EXPECT_EQ(novel_question_count({"a", "b"}, {"b"}), 1);
  // duplicates in the generated set are a single novel question
  std::set<std::string> gen = {"x"};
  EXPECT_EQ(novel_question_count(gen, {}), 1);
}

TEST(UniqueQuestions, Counts) {
  std::vector<std::string> same(10, "what color is it");
  EXPECT_EQ(unique_questions(same), 1);
  std::vector<std::string> distinct;
  for (int i = 0; i < 10; ++i) distinct.push_back("q" + std::to_string(i));
  EXPECT_EQ(unique_questions(distinct), 10);
  EXPECT_EQ(unique_questions({"q1", "q2", "q1", "q3"}), 3);
}

TEST(Bleu4, KnownValues) {
  EXPECT_DOUBLE_EQ(bleu4({"a", "b", "c", "d"}, {"a b c d"}), 1.0);
  EXPECT_DOUBLE_EQ(bleu4({"x", "y"}, {"a b c"}), 0.0);
  const double got = bleu4({"a", "b", "c", "d"}, {"a b c e"});
  const double want = oracle::bleu4({"a", "b", "c", "d"}, {{"a", "b", "c", "e"}});
  EXPECT_NEAR(got, want, 1e-12);
  EXPECT_GT(got, 0.0);
  EXPECT_LT(got, 1.0);
  EXPECT_THROW(bleu4({}, {"a"}), DomainError);
}

TEST(Bleu4, MatchesOracleOnRandomInputs) {
  Rng rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    auto hyp_str = oracle::random_question(rng);
    std::vector<std::string> refs;
    std::vector<oracle::Tokens> ref_toks;
    const int n_refs = rng.uniform_int(1, 4);
    for (int i = 0; i < n_refs; ++i) {
      refs.push_back(oracle::random_question(rng));
      ref_toks.push_back(corpus::split_tokens(refs.back()));
    }
    const double got = bleu4(corpus::split_tokens(hyp_str), refs);
    const double want = oracle::bleu4(corpus::split_tokens(hyp_str), ref_toks);
    ASSERT_NEAR(got, want, 1e-12) << "hyp: " << hyp_str;
    ASSERT_GE(got, 0.0);
    ASSERT_LE(got, 1.0 + 1e-12);
  }
}

TEST(MutualOverlap, KnownValuesAndPermutationInvariance) {
  std::vector<std::string> same(10, "what color is it");
  EXPECT_DOUBLE_EQ(mutual_overlap(same), 1.0);
  std::vector<std::string> disjoint = {"a b", "c d", "e f", "g h", "i j",
                                       "k l", "m n", "o p", "q r", "s t"};
  EXPECT_DOUBLE_EQ(mutual_overlap(disjoint), 0.0);

  Rng rng(37);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::string> qs;
    for (int i = 0; i < 6; ++i) qs.push_back(oracle::random_question(rng));
    const double got = mutual_overlap(qs);
    ASSERT_NEAR(got, oracle::mutual_overlap(qs), 1e-12);
    auto shuffled = qs;
    rng.shuffle(shuffled);
    ASSERT_NEAR(mutual_overlap(shuffled), got, 1e-12);
  }
}

TEST(DistEnt, KnownValues) {
  std::vector<std::string> two = {"what color is it", "what color is it"};
  EXPECT_DOUBLE_EQ(dist_n(two, 1), 0.5);  // 4 unique unigrams over 8 tokens
  EXPECT_DOUBLE_EQ(ent_n({"a a", "a a a"}, 1), 0.0);
  EXPECT_NEAR(ent_n({"a b"}, 1), std::log(2.0), 1e-14);
  EXPECT_THROW(dist_n({"a"}, 2), DomainError);
}

TEST(DistEnt, MatchOracleAndOrderInvariance) {
  Rng rng(41);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::string> qs;
    for (int i = 0; i < 5; ++i) qs.push_back(oracle::random_question(rng, 2, 6));
    for (int n = 1; n <= 2; ++n) {
      ASSERT_NEAR(dist_n(qs, n), oracle::dist_n(qs, n), 1e-12);
      ASSERT_NEAR(ent_n(qs, n), oracle::ent_n(qs, n), 1e-12);
    }
    auto shuffled = qs;
    rng.shuffle(shuffled);
    ASSERT_DOUBLE_EQ(dist_n(shuffled, 1), dist_n(qs, 1));
    ASSERT_DOUBLE_EQ(ent_n(shuffled, 2), ent_n(qs, 2));
  }
}

TEST(RankMetrics, KnownCases) {
  // Ground truth ranked first on every item.
  std::vector<ScoredPool> first(3);
  for (auto& it : first) {
    it.scores = {0.9, 0.5, 0.1, 0.0};
    it.relevance = {1.0, 0.5, 0.0, 0.0};
    it.gt_index = 0;
  }
  RetrievalReport r1 = rank_metrics(first);
  EXPECT_DOUBLE_EQ(r1.mrr, 1.0);
  EXPECT_DOUBLE_EQ(r1.r_at_1, 1.0);
  EXPECT_DOUBLE_EQ(r1.ndcg, 1.0);
  EXPECT_DOUBLE_EQ(r1.mean_rank, 1.0);

  // Ground truth always at rank 4.
  std::vector<ScoredPool> fourth(2);
  for (auto& it : fourth) {
    it.scores = {0.9, 0.8, 0.7, 0.6, 0.5};
    it.relevance = {0.0, 0.0, 0.0, 1.0, 0.0};
    it.gt_index = 3;
  }
  RetrievalReport r4 = rank_metrics(fourth);
  EXPECT_DOUBLE_EQ(r4.mrr, 0.25);
  EXPECT_DOUBLE_EQ(r4.r_at_1, 0.0);
  EXPECT_DOUBLE_EQ(r4.r_at_5, 1.0);
  EXPECT_DOUBLE_EQ(r4.mean_rank, 4.0);

  // Hand-computed two-entry NDCG with grades {1.0, 0.5, 0, 0}: model ranks the
  // 0.5 paraphrase first, truth second.
  ScoredPool hand;
  hand.scores = {0.2, 0.9, 0.1, 0.0};
  hand.relevance = {1.0, 0.5, 0.0, 0.0};
  hand.gt_index = 0;
  RetrievalReport rh = rank_metrics({hand});
  const double dcg = 0.5 / std::log2(2.0) + 1.0 / std::log2(3.0);
  const double idcg = 1.0 / std::log2(2.0) + 0.5 / std::log2(3.0);
  EXPECT_NEAR(rh.ndcg, dcg / idcg, 1e-15);

  ScoredPool no_gt;
  no_gt.scores = {0.5, 0.4};
  no_gt.relevance = {0.5, 0.0};
  no_gt.gt_index = 0;
  EXPECT_THROW(rank_metrics({no_gt}), ContractError);
}

TEST(RankMetrics, MatchesOracleOnRandomPools) {
  Rng rng(43);
  for (int rep = 0; rep < 50; ++rep) {
    const int n_items = rng.uniform_int(1, 5);
    std::vector<ScoredPool> items(static_cast<size_t>(n_items));
    for (auto& it : items) {
      const int k = rng.uniform_int(4, 16);
      it.scores.resize(size_t(k));
      it.relevance.assign(size_t(k), 0.0);
      // quantized scores produce frequent ties
      for (auto& s : it.scores) s = double(rng.uniform_int(-5, 5)) / 10.0;
      it.gt_index = rng.uniform_int(0, k - 1);
      it.relevance[size_t(it.gt_index)] = 1.0;
      for (int j = 0; j < k; ++j)
        if (j != it.gt_index && rng.next_double() < 0.3) it.relevance[size_t(j)] = 0.5;
    }
    RetrievalReport got = rank_metrics(items);
    oracle::RankStats want = oracle::rank_metrics(items);
    ASSERT_NEAR(got.ndcg, want.ndcg, 1e-12);
    ASSERT_NEAR(got.mrr, want.mrr, 1e-12);
    ASSERT_NEAR(got.r_at_1, want.r1, 1e-12);
    ASSERT_NEAR(got.r_at_5, want.r5, 1e-12);
    ASSERT_NEAR(got.r_at_10, want.r10, 1e-12);
    ASSERT_NEAR(got.mean_rank, want.mean_rank, 1e-12);
    ASSERT_LE(got.r_at_1, got.r_at_5);
    ASSERT_LE(got.r_at_5, got.r_at_10);
    ASSERT_GE(got.mean_rank, 1.0);
  }
}

TEST(PercentileRank, KnownValuesAndPermutationInvariance) {
  std::vector<Vec> pool;
  for (int i = 0; i < 16; ++i) pool.push_back({double(i), 0.0});
  // prediction at origin: pool[0] is closest, pool[15] farthest
  EXPECT_DOUBLE_EQ(percentile_rank({0.0, 0.0}, pool, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile_rank({0.0, 0.0}, pool, 15), 0.0);
  EXPECT_NEAR(percentile_rank({0.0, 0.0}, pool, 7), 8.0 / 15.0, 1e-15);

  Rng rng(47);
  for (int rep = 0; rep < 50; ++rep) {
    const int p = rng.uniform_int(2, 12);
    std::vector<Vec> feats(static_cast<size_t>(p), Vec(3));
    for (auto& f : feats)
      for (auto& v : f) v = rng.normal();
    Vec pred(3);
    for (auto& v : pred) v = rng.normal();
    const int true_idx = rng.uniform_int(0, p - 1);
    const double got = percentile_rank(pred, feats, true_idx);
    ASSERT_DOUBLE_EQ(got, oracle::percentile_rank(pred, feats, true_idx));

    // permutation invariance (distances are generic, no ties)
    std::vector<size_t> perm(static_cast<size_t>(p));
    std::iota(perm.begin(), perm.end(), size_t(0));
    rng.shuffle(perm);
    std::vector<Vec> shuffled(static_cast<size_t>(p));
    int new_true = 0;
    for (size_t i = 0; i < perm.size(); ++i) {
      shuffled[i] = feats[perm[i]];
      if (perm[i] == size_t(true_idx)) new_true = int(i);
    }
    ASSERT_DOUBLE_EQ(percentile_rank(pred, shuffled, new_true), got);
  }
}

TEST(StateCurve, ConstantStatesAndHandCase) {
  train::DialogTranscript t;
  t.questions.resize(3);
  t.q_states.assign(4, Vec{1.0, 2.0});
  auto curve = state_similarity_curve({t, t});
  ASSERT_EQ(curve.size(), 3u);
  for (double v : curve) EXPECT_NEAR(v, 1.0, 1e-12);

  train::DialogTranscript h;
  h.questions.resize(2);
  h.q_states = {{1.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}};
  auto hand = state_similarity_curve({h});
  EXPECT_NEAR(hand[0], num::cosine_similarity({1.0, 0.0}, {1.0, 1.0}), 1e-15);
  EXPECT_NEAR(hand[1], num::cosine_similarity({1.0, 1.0}, {0.0, 1.0}), 1e-15);

  train::DialogTranscript broken;
  broken.questions.resize(3);
  broken.q_states.assign(2, Vec{1.0});
  EXPECT_THROW(state_similarity_curve({broken}), ContractError);
}

TEST(AltRepeat, KnownValuesAndOracle) {
  std::vector<std::string> alternating = {"a", "b", "a", "b", "a", "b", "a", "b", "a", "b"};
  EXPECT_DOUBLE_EQ(alt_repeat_rate({alternating}), 1.0);

  std::vector<std::string> distinct;
  for (int i = 0; i < 10; ++i) distinct.push_back("q" + std::to_string(i));
  EXPECT_DOUBLE_EQ(alt_repeat_rate({distinct}), 0.0);

  // one matching (t, t+2) pair among the 8 eligible in a 10-round dialog
  std::vector<std::string> one = distinct;
  one[2] = one[0];
  EXPECT_DOUBLE_EQ(alt_repeat_rate({one}), 0.125);

  EXPECT_THROW(alt_repeat_rate({{"a", "b"}}), DomainError);

  Rng rng(53);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<std::string>> dialogs(size_t(rng.uniform_int(1, 4)));
    for (auto& d : dialogs) {
      const int rounds = rng.uniform_int(3, 10);
      for (int i = 0; i < rounds; ++i)
        d.push_back("q" + std::to_string(rng.uniform_int(0, 3)));
    }
    ASSERT_DOUBLE_EQ(alt_repeat_rate(dialogs), oracle::alt_repeat_rate(dialogs));
  }
}

TEST(NllRelevance, UniformModelGivesLogV) {
  corpus::WorldConfig wc = corpus::WorldConfig::defaults();
  wc.image_count = 20;
  wc.split_fractions = {0.8, 0.1, 0.1};
  wc.attribute_sizes = {3, 3, 3, 3, 3, 3, 3, 3, 3, 3};
  corpus::Corpus c = corpus::generate_corpus(wc, 9);
  train::TokenizedCorpus tc = train::TokenizedCorpus::from(c);

  agents::ModelDims dims{.vocab = c.vocab.size(), .embed = 4, .hidden = 6, .feature = 32};
  auto uniform = agents::AgentParams::make(agents::AgentRole::qbot, dims);
  const double nll = nll_relevance(uniform, tc, {0, 1, 2});
  EXPECT_NEAR(nll, std::log(double(c.vocab.size())), 1e-12);

  auto trained = agents::AgentParams::init(agents::AgentRole::qbot, dims, 3);
  EXPECT_GE(nll_relevance(trained, tc, {0, 1}), 0.0);
}

TEST(DiversityReport, AggregatesAndBounds) {
  std::vector<std::vector<std::string>> dialogs = {
      {"what color is it", "what size is it", "what color is it"},
      {"where is it", "where is it", "where is it"},
  };
  DiversityReport rep = diversity_eval(dialogs, {"what color is it"});
  EXPECT_EQ(rep.per_dialog_unique, (std::vector<int>{2, 1}));
  EXPECT_DOUBLE_EQ(rep.unique_questions_mean, 1.5);
  EXPECT_EQ(rep.novel_question_count, 2);  // "what size is it", "where is it"
  EXPECT_GE(rep.mutual_overlap_mean, 0.0);
  EXPECT_LE(rep.mutual_overlap_mean, 1.0);
  EXPECT_GT(rep.dist1, 0.0);
  EXPECT_LE(rep.dist1, 1.0);
  EXPECT_GE(rep.ent1, 0.0);
}

TEST(ScorePool, UniformModelTiesRankByIndex) {
  corpus::WorldConfig wc = corpus::WorldConfig::defaults();
  wc.image_count = 20;
  wc.split_fractions = {0.8, 0.1, 0.1};
  wc.attribute_sizes = {3, 3, 3, 3, 3, 3, 3, 3, 3, 3};
  corpus::Corpus c = corpus::generate_corpus(wc, 9);
  train::TokenizedCorpus tc = train::TokenizedCorpus::from(c);
  agents::ModelDims dims{.vocab = c.vocab.size(), .embed = 4, .hidden = 6, .feature = 32};
  auto abot = agents::AgentParams::init(agents::AgentRole::abot, dims, 5);

  RetrievalItem item;
  item.image_id = 0;
  item.round = 2;
  item.pool = corpus::make_candidate_pool(c.images[0], c.dialogs[0].rounds[2].question, c,
                                          12, 7);
  RetrievalReport rep = retrieval_eval(abot, c, tc, {item});
  EXPECT_GE(rep.mean_rank, 1.0);
  EXPECT_LE(rep.mean_rank, 12.0);
  EXPECT_LE(rep.r_at_1, rep.r_at_5);
  EXPECT_LE(rep.r_at_5, rep.r_at_10);
  EXPECT_GE(rep.ndcg, 0.0);
  EXPECT_LE(rep.ndcg, 1.0);
}
