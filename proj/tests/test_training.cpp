#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "selftalk/corpus.hpp"
#include "selftalk/gradcheck.hpp"
#include "selftalk/training.hpp"

using namespace selftalk;
using namespace selftalk::train;
using agents::AgentParams;
using agents::AgentRole;
using agents::ModelDims;

namespace {

corpus::WorldConfig small_world(int images = 40) {
  corpus::WorldConfig cfg = corpus::WorldConfig::defaults();
  cfg.image_count = images;
  cfg.split_fractions = {0.8, 0.1, 0.1};
  cfg.attribute_sizes = {3, 3, 3, 3, 3, 3, 3, 3, 3, 3};
  return cfg;
}

// Hand-built corpus with a 20-token vocabulary and 2-round dialogs; the shape
// named by the gradient-suite acceptance criterion.
corpus::Corpus hand_corpus() {
  corpus::Corpus c;
  std::vector<std::string> words;
  for (int i = 0; i < 16; ++i) words.push_back("w" + std::to_string(i));
  c.vocab = corpus::Vocabulary::from_tokens(words);

  const char* caps[6] = {"w0 w1 w2", "w2 w3", "w4 w5 w6", "w7 w8", "w9 w10 w11", "w12 w13"};
  const char* qs[6][2] = {{"w3 w4 w5", "w7 w8"},  {"w6 w9", "w10 w11 w12"},
                          {"w13 w14", "w15 w0"},  {"w1 w2 w3", "w4 w5"},
                          {"w6 w7 w8", "w9 w10"}, {"w11 w12", "w13 w14 w15"}};
  const char* as[6][2] = {{"w6", "w9 w10"},  {"w13", "w14 w15"}, {"w1", "w2 w3"},
                          {"w6 w7", "w8"},   {"w11", "w12 w13"}, {"w0 w1", "w2"}};
  Rng rng(404);
  for (int id = 0; id < 6; ++id) {
    corpus::SyntheticImage img;
    img.id = id;
    img.features.resize(6);
    for (auto& v : img.features) v = rng.normal();
    c.images.push_back(img);
    corpus::GroundTruthDialog d;
    d.image_id = id;
    d.caption = caps[id];
    d.rounds.push_back({qs[id][0], as[id][0]});
    d.rounds.push_back({qs[id][1], as[id][1]});
    c.dialogs.push_back(d);
    c.train_ids.push_back(id);
  }
  return c;
}

TrainConfig quiet_config() {
  TrainConfig cfg;
  cfg.dropout_sl = 0.0;
  cfg.sl_epochs = 1;
  cfg.batch_size = 2;
  cfg.curriculum_sweeps = 0;
  return cfg;
}

}  // namespace

TEST(Reward, KnownValuesAndShapeError) {
  Vec y{0.0, 0.0};
  EXPECT_DOUBLE_EQ(compute_reward(y, {0.5, 0.5}, {0.5, 0.5}), 0.0);
  EXPECT_DOUBLE_EQ(compute_reward(y, {1.0, 0.0}, {0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(compute_reward(y, {1.0, 0.0}, {2.0, 0.0}), -3.0);
  EXPECT_THROW(compute_reward(y, {1.0}, {2.0, 0.0}), ShapeError);
}

TEST(Curriculum, AnnealsAndRepeats) {
  EXPECT_EQ(curriculum_rounds(0), 9);
  EXPECT_EQ(curriculum_rounds(5), 4);
  EXPECT_EQ(curriculum_rounds(6), 9);
  EXPECT_EQ(curriculum_rounds(11), 4);
  EXPECT_THROW(curriculum_rounds(-1), DomainError);
}

TEST(LearningRate, ScheduleMatchesPaperValues) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(lr_at(0, cfg), 1e-3);
  EXPECT_DOUBLE_EQ(lr_at(1, cfg), 7.5e-4);
  EXPECT_DOUBLE_EQ(lr_at(500, cfg), 5e-5);
  double prev = lr_at(0, cfg);
  for (int e = 1; e < 40; ++e) {
    const double lr = lr_at(e, cfg);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, cfg.lr_floor);
    prev = lr;
  }
}

TEST(SlLoss, LambdaZeroIsPlainMleAndFlagInvariant) {
  corpus::Corpus c = hand_corpus();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 8, .hidden = 8, .feature = 6};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 1);
  auto abot = AgentParams::init(AgentRole::abot, dims, 2);

  TrainConfig cfg = quiet_config();
  cfg.penalty_coefficient = 0.0;
  cfg.penalize_qbot = true;
  cfg.penalize_abot = true;
  SlBatchResult with_flags = sl_loss(tc, c, {0, 1}, qbot, abot, cfg, 0.0, 0);
  cfg.penalize_qbot = false;
  cfg.penalize_abot = false;
  SlBatchResult without = sl_loss(tc, c, {0, 1}, qbot, abot, cfg, 0.0, 0);

  EXPECT_DOUBLE_EQ(with_flags.loss, without.loss);
  EXPECT_EQ(agents::flatten_params(with_flags.q_grads),
            agents::flatten_params(without.q_grads));
  EXPECT_EQ(agents::flatten_params(with_flags.a_grads),
            agents::flatten_params(without.a_grads));
  EXPECT_DOUBLE_EQ(with_flags.loss, with_flags.q_ce + with_flags.a_ce +
                                        cfg.regression_weight * with_flags.regression);
}

TEST(SlLoss, DegenerateParamsGiveExactlyZeroPenalty) {
  corpus::Corpus c = hand_corpus();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 8, .hidden = 8, .feature = 6};
  // All-zero weights: every dialog state is identical, so every delta is 0.
  auto qbot = AgentParams::make(AgentRole::qbot, dims);
  auto abot = AgentParams::make(AgentRole::abot, dims);
  TrainConfig cfg = quiet_config();
  cfg.penalty_coefficient = 1e-3;
  SlBatchResult r = sl_loss(tc, c, {0, 1}, qbot, abot, cfg, 0.0, 0);
  EXPECT_DOUBLE_EQ(r.penalty_q, 0.0);
  EXPECT_DOUBLE_EQ(r.penalty_a, 0.0);
}

TEST(SlLoss, FullGradientMatchesFiniteDifferences) {
  corpus::Corpus c = hand_corpus();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 8, .hidden = 8, .feature = 6};
  ASSERT_EQ(dims.vocab, 20);
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 4);
  auto abot = AgentParams::init(AgentRole::abot, dims, 104);

  TrainConfig cfg = quiet_config();
  cfg.penalty_coefficient = 0.01;
  cfg.penalize_abot = true;
  cfg.regression_weight = 1.0;
  const std::vector<int> ids = {0, 1, 2, 3, 4, 5};

  // A short warm-up moves the dialog states apart; raw initializations leave
  // successive state norms nearly equal, which parks the penalty argument on
  // the |.| kink where central differences are meaningless.
  {
    Adam qo(qbot), ao(abot);
    for (int step = 0; step < 30; ++step) {
      SlBatchResult r = sl_loss(tc, c, ids, qbot, abot, cfg, 0.0, 0);
      qo.step(qbot, r.q_grads, 3e-3);
      ao.step(abot, r.a_grads, 3e-3);
    }
  }
  for (int id : ids) {
    QbotDialogInput qin;
    qin.caption = tc.dialogs[size_t(id)].caption;
    qin.questions = tc.dialogs[size_t(id)].questions;
    qin.answers = tc.dialogs[size_t(id)].answers;
    QbotGraph g = qbot_forward(qbot, qin, 0.0, nullptr);
    for (size_t t = 2; t < g.facts.size(); ++t) {
      const double d = num::state_delta(g.facts[t - 1].s, g.facts[t].s);
      ASSERT_GT(d, 5e-3);
      ASSERT_GT(std::abs(d - 0.1), 5e-3);
    }
    AbotDialogInput ain;
    ain.image_features = c.images[size_t(id)].features;
    ain.caption = qin.caption;
    ain.questions = qin.questions;
    ain.answers = qin.answers;
    AbotGraph ag = abot_forward(abot, ain, 0.0, nullptr);
    for (size_t t = 1; t < ag.s.size(); ++t) {
      const double d = num::state_delta(ag.s[t - 1], ag.s[t]);
      ASSERT_GT(d, 5e-3);
      ASSERT_GT(std::abs(d - 0.1), 5e-3);
    }
  }

  SlBatchResult r = sl_loss(tc, c, ids, qbot, abot, cfg, 0.0, 0);
  Vec point = agents::flatten_params(qbot);
  const size_t q_n = point.size();
  {
    Vec a_flat = agents::flatten_params(abot);
    point.insert(point.end(), a_flat.begin(), a_flat.end());
  }
  Vec analytic = agents::flatten_params(r.q_grads);
  {
    Vec a_flat = agents::flatten_params(r.a_grads);
    analytic.insert(analytic.end(), a_flat.begin(), a_flat.end());
  }

  AgentParams q_probe = qbot, a_probe = abot;
  auto f = [&](const Vec& flat) {
    Vec qf(flat.begin(), flat.begin() + long(q_n));
    Vec af(flat.begin() + long(q_n), flat.end());
    agents::unflatten_params(qf, q_probe);
    agents::unflatten_params(af, a_probe);
    return sl_loss(tc, c, ids, q_probe, a_probe, cfg, 0.0, 0).loss;
  };
  Rng pick(1);
  auto report = num::check_gradients(f, point, analytic, 1e-3, 500, &pick);
  EXPECT_LT(report.max_relative_error, 1e-4) << "worst coord " << report.worst_coordinate;
}

TEST(SelfTalk, TelescopingRewardInvariant) {
  corpus::Corpus c = corpus::generate_corpus(small_world(30), 5);
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 6, .hidden = 8, .feature = 32};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 7);
  auto abot = AgentParams::init(AgentRole::abot, dims, 8);
  agents::DecodeConfig q_cfg{.mode = agents::DecodeConfig::Mode::sample, .max_len = 8};
  agents::DecodeConfig a_cfg{.mode = agents::DecodeConfig::Mode::sample, .max_len = 6};

  for (int i = 0; i < 30; ++i) {
    Rng rng(uint64_t(1000 + i));
    const auto& img = c.images[size_t(i)];
    Episode ep = run_selftalk_episode(qbot, abot, img.features, tc.dialogs[size_t(i)].caption,
                                      corpus::kDialogRounds, q_cfg, a_cfg, &rng);
    ASSERT_EQ(ep.trace.rewards.size(), size_t(corpus::kDialogRounds));
    ASSERT_EQ(ep.trace.predictions.size(), size_t(corpus::kDialogRounds + 1));
    const double lhs = ep.trace.total();
    const double rhs = num::l2_distance_sq(img.features, ep.trace.predictions.front()) -
                       num::l2_distance_sq(img.features, ep.trace.predictions.back());
    EXPECT_NEAR(lhs, rhs, 1e-9);
  }
}

TEST(SelfTalk, ZeroRoundsAndSeedDeterminism) {
  corpus::Corpus c = corpus::generate_corpus(small_world(30), 5);
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 6, .hidden = 8, .feature = 32};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 9);
  auto abot = AgentParams::init(AgentRole::abot, dims, 10);
  agents::DecodeConfig q_cfg{.mode = agents::DecodeConfig::Mode::sample, .max_len = 8};
  agents::DecodeConfig a_cfg{.mode = agents::DecodeConfig::Mode::sample, .max_len = 6};

  Episode ep0 = run_selftalk_episode(qbot, abot, c.images[0].features,
                                     tc.dialogs[0].caption, 0, q_cfg, a_cfg, nullptr);
  EXPECT_TRUE(ep0.trace.rewards.empty());
  EXPECT_EQ(ep0.trace.predictions.size(), 1u);
  EXPECT_TRUE(ep0.transcript.questions.empty());

  Rng r1(42), r2(42);
  Episode a = run_selftalk_episode(qbot, abot, c.images[1].features, tc.dialogs[1].caption,
                                   corpus::kDialogRounds, q_cfg, a_cfg, &r1);
  Episode b = run_selftalk_episode(qbot, abot, c.images[1].features, tc.dialogs[1].caption,
                                   corpus::kDialogRounds, q_cfg, a_cfg, &r2);
  EXPECT_EQ(a.transcript.questions, b.transcript.questions);
  EXPECT_EQ(a.transcript.answers, b.transcript.answers);
  EXPECT_EQ(a.trace.rewards, b.trace.rewards);
}

TEST(Reinforce, PerfectGuessesGiveZeroUpdate) {
  corpus::Corpus c = hand_corpus();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 8, .hidden = 8, .feature = 6};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 11);
  auto abot = AgentParams::init(AgentRole::abot, dims, 12);
  // Regression head pinned to the ground truth: every guess is exact, every
  // reward is exactly zero, and the reward gradient through y_hat vanishes.
  qbot.reg_w.zero();
  for (int i = 0; i < dims.feature; ++i) qbot.reg_b.at(0, i) = c.images[0].features[size_t(i)];

  TrainConfig cfg = quiet_config();
  cfg.penalty_coefficient = 0.0;
  cfg.regression_weight = 0.0;
  Rng rng(3);
  MixedEpisode ep = run_mixed_episode(qbot, abot, tc.dialogs[0], c.images[0].features, 0,
                                      cfg, rng);
  for (double r : ep.rewards) EXPECT_DOUBLE_EQ(r, 0.0);

  AgentParams q_grads = qbot.zeros_like();
  AgentParams a_grads = abot.zeros_like();
  reinforce_gradients(ep, qbot, abot, cfg, 1.0, 0.0, q_grads, a_grads);
  for (double g : agents::flatten_params(q_grads)) EXPECT_DOUBLE_EQ(g, 0.0);
  for (double g : agents::flatten_params(a_grads)) EXPECT_DOUBLE_EQ(g, 0.0);

  Adam q_opt(qbot), a_opt(abot);
  Vec before_q = agents::flatten_params(qbot);
  Vec before_a = agents::flatten_params(abot);
  q_opt.step(qbot, q_grads, 1e-3);
  a_opt.step(abot, a_grads, 1e-3);
  EXPECT_EQ(agents::flatten_params(qbot), before_q);
  EXPECT_EQ(agents::flatten_params(abot), before_a);
}

TEST(Reinforce, BeamTranscriptsAreRejected) {
  corpus::Corpus c = hand_corpus();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 8, .hidden = 8, .feature = 6};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 13);
  auto abot = AgentParams::init(AgentRole::abot, dims, 14);
  TrainConfig cfg = quiet_config();
  Rng rng(1);
  MixedEpisode ep = run_mixed_episode(qbot, abot, tc.dialogs[0], c.images[0].features, 1,
                                      cfg, rng);
  ep.decode_mode = agents::DecodeConfig::Mode::beam;
  AgentParams q_grads = qbot.zeros_like();
  AgentParams a_grads = abot.zeros_like();
  EXPECT_THROW(reinforce_gradients(ep, qbot, abot, cfg, 1.0, 0.0, q_grads, a_grads),
               ContractError);
}

TEST(Reinforce, SameSeedGivesBitIdenticalUpdate) {
  corpus::Corpus c = corpus::generate_corpus(small_world(30), 5);
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 6, .hidden = 8, .feature = 32};
  TrainConfig cfg = quiet_config();

  auto run_once = [&]() {
    auto qbot = AgentParams::init(AgentRole::qbot, dims, 15);
    auto abot = AgentParams::init(AgentRole::abot, dims, 16);
    AgentParams q_grads = qbot.zeros_like();
    AgentParams a_grads = abot.zeros_like();
    for (int i = 0; i < 3; ++i) {
      Rng rng = derive_rng(99, "ep", uint64_t(i));
      MixedEpisode ep = run_mixed_episode(qbot, abot, tc.dialogs[size_t(i)],
                                          c.images[size_t(i)].features, 7, cfg, rng);
      reinforce_gradients(ep, qbot, abot, cfg, 1.0 / 3.0, 0.0, q_grads, a_grads);
    }
    Adam q_opt(qbot);
    q_opt.step(qbot, q_grads, 1e-3);
    return agents::flatten_params(qbot);
  };
  EXPECT_EQ(run_once(), run_once());
}

TEST(Reinforce, MonteCarloMeanMatchesEnumeratedPolicyGradient) {
  // 1-round, length-1 question, vocab 3: every action enumerable.
  ModelDims dims{.vocab = 3, .embed = 3, .hidden = 4, .feature = 2};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 17);
  const std::vector<int> caption = {0, 1};
  const Vec reward_of = {0.5, -0.2, 1.0};

  agents::QBotState state = agents::qbot_update_state(agents::qbot_start(qbot), caption, qbot);

  // Per-action gradients of r(a) * (-log pi(a)) and the action distribution.
  std::vector<Vec> action_grad(3);
  Vec pi(3);
  for (int a = 0; a < 3; ++a) {
    QbotDialogInput in;
    in.caption = caption;
    in.questions = {{a}};
    in.answers = {{0}};
    QbotGraph g = qbot_forward(qbot, in, 0.0, nullptr);
    pi[size_t(a)] = std::exp(g.decs[0].step_logprobs[0]);
    QbotLossWeights w;
    w.token_coeff = {reward_of[size_t(a)]};
    AgentParams grads = qbot.zeros_like();
    qbot_backward(qbot, in, g, w, grads);
    action_grad[size_t(a)] = agents::flatten_params(grads);
  }
  EXPECT_NEAR(pi[0] + pi[1] + pi[2], 1.0, 1e-12);

  const size_t dim = action_grad[0].size();
  Vec exact(dim, 0.0);
  for (int a = 0; a < 3; ++a)
    for (size_t i = 0; i < dim; ++i) exact[i] += pi[size_t(a)] * action_grad[size_t(a)][i];

  const int n = 20000;
  agents::DecodeConfig cfg{.mode = agents::DecodeConfig::Mode::sample, .max_len = 1};
  Vec sum(dim, 0.0), sum_sq(dim, 0.0);
  for (int e = 0; e < n; ++e) {
    Rng rng = derive_rng(321, "mc", uint64_t(e));
    agents::Decoded d = agents::qbot_ask(state, cfg, qbot, &rng);
    ASSERT_EQ(d.tokens.size(), 1u);
    const Vec& g = action_grad[size_t(d.tokens[0])];
    for (size_t i = 0; i < dim; ++i) {
      sum[i] += g[i];
      sum_sq[i] += g[i] * g[i];
    }
  }
  int violations = 0;
  for (size_t i = 0; i < dim; ++i) {
    const double mean = sum[i] / n;
    const double var = std::max(0.0, sum_sq[i] / n - mean * mean);
    const double se = std::sqrt(var / n);
    if (std::abs(mean - exact[i]) > 3.0 * se + 1e-12) ++violations;
  }
  EXPECT_EQ(violations, 0);
}

TEST(Training, PenaltyStepDoesNotDecreasePenaltySum) {
  corpus::Corpus c = hand_corpus();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 8, .hidden = 8, .feature = 6};
  auto qbot = AgentParams::init(AgentRole::qbot, dims, 18);

  QbotDialogInput in;
  in.caption = tc.dialogs[0].caption;
  in.questions = tc.dialogs[0].questions;
  in.answers = tc.dialogs[0].answers;

  QbotGraph g = qbot_forward(qbot, in, 0.0, nullptr);
  QbotLossWeights w;
  w.token_coeff.assign(in.questions.size(), 0.0);
  w.penalty_lambda = 1.0;  // loss = -sum f(delta): descending it raises the sum
  AgentParams grads = qbot.zeros_like();
  qbot_backward(qbot, in, g, w, grads);

  agents::axpy_params(-1e-4, grads, qbot);
  QbotGraph g2 = qbot_forward(qbot, in, 0.0, nullptr);
  EXPECT_GE(g2.penalty_sum, g.penalty_sum - 1e-12);
}

TEST(Training, SlOnlyPipelineRunsAndIsDeterministic) {
  corpus::Corpus c = corpus::generate_corpus(small_world(40), 6);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 6, .hidden = 8, .feature = 32};
  TrainConfig cfg;
  cfg.sl_epochs = 2;
  cfg.batch_size = 8;
  cfg.curriculum_sweeps = 0;  // pure SL
  cfg.dropout_sl = 0.5;
  cfg.seed = 77;

  TrainResult r1 = run_training(c, dims, cfg);
  TrainResult r2 = run_training(c, dims, cfg);
  EXPECT_EQ(agents::flatten_params(r1.qbot), agents::flatten_params(r2.qbot));
  EXPECT_EQ(agents::flatten_params(r1.abot), agents::flatten_params(r2.abot));
  ASSERT_EQ(r1.curves.size(), 2u);
  for (const auto& row : r1.curves) {
    EXPECT_TRUE(std::isfinite(row.sl_loss));
    EXPECT_EQ(row.phase, "sl");
  }
  EXPECT_LT(r1.curves[1].sl_loss, r1.curves[0].sl_loss);
  EXPECT_EQ(curves_to_csv(r1.curves), curves_to_csv(r2.curves));
}

TEST(Training, RlPhaseRunsWithCurriculum) {
  corpus::Corpus c = corpus::generate_corpus(small_world(30), 8);
  ModelDims dims{.vocab = c.vocab.size(), .embed = 6, .hidden = 8, .feature = 32};
  TrainConfig cfg;
  cfg.sl_epochs = 1;
  cfg.batch_size = 8;
  cfg.curriculum_sweeps = 1;
  cfg.rl_episodes_per_stage = 4;
  cfg.rl_batch = 2;
  cfg.dropout_sl = 0.0;
  cfg.seed = 88;

  std::vector<std::pair<std::string, int>> stages;
  TrainResult r = run_training(c, dims, cfg, [&](const std::string& phase, int stage,
                                          const AgentParams&, const AgentParams&) {
    stages.emplace_back(phase, stage);
  });
  ASSERT_EQ(r.curves.size(), 1u + 6u);
  EXPECT_EQ(stages.size(), 1u + 6u);
  EXPECT_EQ(stages[0].first, "sl");
  for (size_t i = 1; i < stages.size(); ++i) EXPECT_EQ(stages[i].first, "rl");
  for (const auto& row : r.curves) EXPECT_TRUE(std::isfinite(row.sl_loss));
}
