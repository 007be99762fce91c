#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "selftalk/agents.hpp"
#include "selftalk/corpus.hpp"
#include "selftalk/graph.hpp"
#include "selftalk/numeric.hpp"
#include "selftalk/rng.hpp"

namespace selftalk::train {

using agents::AgentParams;
using agents::AgentRole;
using agents::DecodeConfig;
using agents::ModelDims;

struct TrainConfig {
  double penalty_coefficient = 1e-4;  // lambda
  bool penalize_qbot = true;
  bool penalize_abot = false;  // Diverse-A-bot variant: penalty on A-bot states in SL
  double regression_weight = 1.0;
  double lr_initial = 1e-3;
  double lr_decay = 0.75;
  double lr_floor = 5e-5;
  double dropout_sl = 0.5;
  double dropout_rl = 0.0;
  int sl_epochs = 8;
  int batch_size = 16;
  int curriculum_sweeps = 2;  // full N=9..4 passes during RL
  int rl_episodes_per_stage = 150;
  int rl_batch = 8;
  double rl_temperature = 1.0;
  bool reward_baseline = false;  // optional running-mean baseline, off by default
  int max_question_len = 8;
  int max_answer_len = 6;
  uint64_t seed = 1;

  void validate() const {
    if (penalty_coefficient < 0.0) throw ConfigError("train: penalty_coefficient must be >= 0");
    if (regression_weight < 0.0) throw ConfigError("train: regression_weight must be >= 0");
    if (lr_floor > lr_initial) throw ConfigError("train: lr_floor must be <= lr_initial");
    if (lr_initial <= 0.0 || lr_floor <= 0.0 || lr_decay <= 0.0 || lr_decay > 1.0)
      throw ConfigError("train: bad learning-rate schedule");
    if (dropout_sl < 0.0 || dropout_sl >= 1.0)
      throw ConfigError("train: dropout must be in [0, 1)");
    if (dropout_rl != 0.0) throw ConfigError("train: dropout_rl is fixed at 0");
    if (sl_epochs < 0 || batch_size < 1 || curriculum_sweeps < 0 ||
        rl_episodes_per_stage < 0 || rl_batch < 1)
      throw ConfigError("train: bad epoch/batch settings");
    if (!(rl_temperature > 0.0)) throw ConfigError("train: rl_temperature must be positive");
    if (max_question_len < 1 || max_answer_len < 1)
      throw ConfigError("train: decode length limits must be >= 1");
  }
};

// r_t = ||y - y_prev||^2 - ||y - y_cur||^2: positive iff the guess moved closer.
inline double compute_reward(const Vec& y_gt, const Vec& y_prev, const Vec& y_cur) {
  return num::l2_distance_sq(y_gt, y_prev) - num::l2_distance_sq(y_gt, y_cur);
}

// N = 9 - (stage mod 6): supervised rounds anneal 9..4, then repeat.
inline int curriculum_rounds(int stage) {
  check_domain(stage >= 0, "curriculum_rounds: stage must be >= 0");
  return 9 - (stage % 6);
}

inline double lr_at(int epoch, const TrainConfig& cfg) {
  check_domain(epoch >= 0, "lr_at: epoch must be >= 0");
  return std::max(cfg.lr_initial * std::pow(cfg.lr_decay, double(epoch)), cfg.lr_floor);
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  explicit Adam(const AgentParams& shape)
      : m_(shape.zeros_like()), v_(shape.zeros_like()) {}

  void step(AgentParams& params, const AgentParams& grads, double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(kBeta1, double(t_));
    const double c2 = 1.0 - std::pow(kBeta2, double(t_));
    std::vector<Mat*> pm, mm, vm;
    std::vector<const Mat*> gm;
    params.for_each_tensor([&](const char*, Mat& t) { pm.push_back(&t); });
    grads.for_each_tensor([&](const char*, const Mat& t) { gm.push_back(&t); });
    m_.for_each_tensor([&](const char*, Mat& t) { mm.push_back(&t); });
    v_.for_each_tensor([&](const char*, Mat& t) { vm.push_back(&t); });
    for (size_t k = 0; k < pm.size(); ++k) {
      double* p = pm[k]->a.data();
      const double* g = gm[k]->a.data();
      double* m = mm[k]->a.data();
      double* v = vm[k]->a.data();
      const size_t n = pm[k]->a.size();
      for (size_t i = 0; i < n; ++i) {
        m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
        v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
      }
    }
  }

  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

 private:
  AgentParams m_, v_;
  long long t_ = 0;
};

// ---------------------------------------------------------------------------
// Tokenized corpus view

struct TokenizedDialog {
  int image_id = 0;
  std::vector<int> caption;
  std::vector<std::vector<int>> questions, answers;
};

struct TokenizedCorpus {
  std::vector<TokenizedDialog> dialogs;  // indexed by image id

  static TokenizedCorpus from(const corpus::Corpus& c) {
    TokenizedCorpus out;
    out.dialogs.reserve(c.dialogs.size());
    for (const auto& d : c.dialogs) {
      TokenizedDialog td;
      td.image_id = d.image_id;
      td.caption = c.vocab.encode(d.caption);
      for (const auto& r : d.rounds) {
        td.questions.push_back(c.vocab.encode(r.question));
        td.answers.push_back(c.vocab.encode(r.answer));
      }
      out.dialogs.push_back(std::move(td));
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Supervised loss over a batch of ground-truth dialogs

struct SlBatchResult {
  double loss = 0.0;  // mean per dialog: CE_q + CE_a + w_reg*reg - lambda*penalties
  double q_ce = 0.0, a_ce = 0.0, regression = 0.0;
  double penalty_q = 0.0, penalty_a = 0.0;  // mean sum f(delta), unweighted
  AgentParams q_grads, a_grads;
};

inline SlBatchResult sl_loss(const TokenizedCorpus& tc, const corpus::Corpus& c,
                             const std::vector<int>& image_ids, const AgentParams& qbot,
                             const AgentParams& abot, const TrainConfig& cfg,
                             double dropout, uint64_t dropout_seed) {
  check_contract(!image_ids.empty(), "sl_loss: empty batch");
  SlBatchResult out;
  out.q_grads = qbot.zeros_like();
  out.a_grads = abot.zeros_like();
  const double inv_b = 1.0 / double(image_ids.size());
  const double lambda_q = cfg.penalize_qbot ? cfg.penalty_coefficient : 0.0;
  const double lambda_a = cfg.penalize_abot ? cfg.penalty_coefficient : 0.0;

  Rng drop_rng(dropout_seed);
  for (int id : image_ids) {
    const TokenizedDialog& d = tc.dialogs.at(size_t(id));
    const size_t rounds = d.questions.size();

    QbotDialogInput qin;
    qin.caption = d.caption;
    qin.questions = d.questions;
    qin.answers = d.answers;
    qin.y_gt = c.image(id).features;
    QbotGraph qg = qbot_forward(qbot, qin, dropout, dropout > 0 ? &drop_rng : nullptr);
    QbotLossWeights qw;
    qw.token_coeff.assign(rounds, inv_b);
    qw.reg_pull.assign(rounds + 1, cfg.regression_weight * inv_b);
    qw.penalty_lambda = lambda_q * inv_b;
    qbot_backward(qbot, qin, qg, qw, out.q_grads);
    out.q_ce += qg.ce_sum * inv_b;
    out.regression += qg.reg_sum * inv_b;
    out.penalty_q += qg.penalty_sum * inv_b;

    AbotDialogInput ain;
    ain.image_features = c.image(id).features;
    ain.caption = d.caption;
    ain.questions = d.questions;
    ain.answers = d.answers;
    AbotGraph ag = abot_forward(abot, ain, dropout, dropout > 0 ? &drop_rng : nullptr);
    AbotLossWeights aw;
    aw.token_coeff.assign(rounds, inv_b);
    aw.penalty_lambda = lambda_a * inv_b;
    abot_backward(abot, ain, ag, aw, out.a_grads);
    out.a_ce += ag.ce_sum * inv_b;
    out.penalty_a += ag.penalty_sum * inv_b;
  }
  out.loss = out.q_ce + out.a_ce + cfg.regression_weight * out.regression -
             lambda_q * out.penalty_q - lambda_a * out.penalty_a;
  if (!std::isfinite(out.loss)) {
    std::string ids;
    for (int id : image_ids) ids += std::to_string(id) + " ";
    throw NumericError("sl_loss: non-finite loss on batch [ " + ids + "]");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Self-talk episodes

struct DialogTranscript {
  int image_id = -1;
  std::vector<int> caption;
  std::vector<std::vector<int>> questions, answers;
  std::vector<Vec> q_states;  // s^Q_0 .. s^Q_T
  std::vector<Vec> question_logprobs, answer_logprobs;
  DecodeConfig::Mode decode_mode = DecodeConfig::Mode::beam;
};

struct RewardTrace {
  Vec rewards;                   // r_1 .. r_T
  std::vector<Vec> predictions;  // y_hat_0 .. y_hat_T
  Vec y_gt;

  double total() const {
    double s = 0.0;
    for (double r : rewards) s += r;
    return s;
  }
};

struct Episode {
  DialogTranscript transcript;
  RewardTrace trace;
};

// Full self-talk: Q-bot sees only the caption, A-bot sees the image. One
// prediction per round plus the caption-only guess.
inline Episode run_selftalk_episode(const AgentParams& qbot, const AgentParams& abot,
                                    const Vec& image_features,
                                    const std::vector<int>& caption, int rounds,
                                    const DecodeConfig& q_cfg, const DecodeConfig& a_cfg,
                                    Rng* rng) {
  check_domain(rounds >= 0, "run_selftalk_episode: rounds must be >= 0");
  Episode ep;
  ep.transcript.caption = caption;
  ep.transcript.decode_mode = q_cfg.mode;
  ep.trace.y_gt = image_features;

  agents::QBotState q_state = agents::qbot_update_state(agents::qbot_start(qbot), caption, qbot);
  agents::ABotState a_state = agents::abot_start(abot, image_features, caption);
  ep.transcript.q_states.push_back(q_state.s);
  ep.trace.predictions.push_back(agents::qbot_guess(q_state, qbot));

  for (int t = 1; t <= rounds; ++t) {
    agents::Decoded q = agents::qbot_ask(q_state, q_cfg, qbot, rng);
    agents::AbotTurn turn = agents::abot_answer(a_state, image_features, q.tokens, a_cfg, abot, rng);
    a_state = turn.state;

    std::vector<int> fact = q.tokens;
    fact.insert(fact.end(), turn.answer.tokens.begin(), turn.answer.tokens.end());
    q_state = agents::qbot_update_state(q_state, fact, qbot);

    ep.transcript.questions.push_back(q.tokens);
    ep.transcript.answers.push_back(turn.answer.tokens);
    ep.transcript.question_logprobs.push_back(q.step_logprobs);
    ep.transcript.answer_logprobs.push_back(turn.answer.step_logprobs);
    ep.transcript.q_states.push_back(q_state.s);

    const Vec guess = agents::qbot_guess(q_state, qbot);
    ep.trace.rewards.push_back(
        compute_reward(image_features, ep.trace.predictions.back(), guess));
    ep.trace.predictions.push_back(guess);
  }
  return ep;
}

// Curriculum episode: rounds 1..N replay the ground-truth dialog, rounds
// N+1..10 are sampled self-talk with per-round rewards.
struct MixedEpisode {
  QbotDialogInput q_in;
  AbotDialogInput a_in;
  int supervised_rounds = 0;  // N
  Vec rewards;                // aligned to rounds; zero for t <= N
  double sampled_reward_sum = 0.0;
  DecodeConfig::Mode decode_mode = DecodeConfig::Mode::sample;
};

inline MixedEpisode run_mixed_episode(const AgentParams& qbot, const AgentParams& abot,
                                      const TokenizedDialog& gt, const Vec& image_features,
                                      int supervised_rounds, const TrainConfig& cfg,
                                      Rng& rng) {
  const int total_rounds = int(gt.questions.size());
  check_domain(supervised_rounds >= 0 && supervised_rounds <= total_rounds,
               "run_mixed_episode: bad supervised round count");
  MixedEpisode ep;
  ep.supervised_rounds = supervised_rounds;
  ep.q_in.caption = gt.caption;
  ep.q_in.y_gt = image_features;
  ep.a_in.caption = gt.caption;
  ep.a_in.image_features = image_features;
  ep.rewards.assign(size_t(total_rounds), 0.0);

  agents::QBotState q_state = agents::qbot_update_state(agents::qbot_start(qbot), gt.caption, qbot);
  agents::ABotState a_state = agents::abot_start(abot, image_features, gt.caption);

  DecodeConfig q_cfg{.mode = DecodeConfig::Mode::sample,
                     .max_len = cfg.max_question_len,
                     .temperature = cfg.rl_temperature};
  DecodeConfig a_cfg{.mode = DecodeConfig::Mode::sample,
                     .max_len = cfg.max_answer_len,
                     .temperature = cfg.rl_temperature};

  Vec prev_guess;  // guess after round N anchors the incremental rewards
  for (int t = 1; t <= total_rounds; ++t) {
    std::vector<int> q, a;
    if (t <= supervised_rounds) {
      q = gt.questions[size_t(t - 1)];
      a = gt.answers[size_t(t - 1)];
      a_state = agents::abot_commit_answer(
          agents::abot_read_question(a_state, abot, image_features, q), abot,
          image_features, q, a);
    } else {
      q = agents::qbot_ask(q_state, q_cfg, qbot, &rng).tokens;
      agents::AbotTurn turn = agents::abot_answer(a_state, image_features, q, a_cfg, abot, &rng);
      a = turn.answer.tokens;
      a_state = turn.state;
    }
    std::vector<int> fact = q;
    fact.insert(fact.end(), a.begin(), a.end());
    q_state = agents::qbot_update_state(q_state, fact, qbot);
    if (t == supervised_rounds) prev_guess = agents::qbot_guess(q_state, qbot);
    if (t > supervised_rounds) {
      if (prev_guess.empty()) {
        // N == 0: anchor on the caption-only guess.
        agents::QBotState cap_state =
            agents::qbot_update_state(agents::qbot_start(qbot), gt.caption, qbot);
        prev_guess = agents::qbot_guess(cap_state, qbot);
      }
      const Vec guess = agents::qbot_guess(q_state, qbot);
      const double r = compute_reward(image_features, prev_guess, guess);
      ep.rewards[size_t(t - 1)] = r;
      ep.sampled_reward_sum += r;
      prev_guess = guess;
    }
    ep.q_in.questions.push_back(q);
    ep.q_in.answers.push_back(a);
    ep.a_in.questions.push_back(std::move(q));
    ep.a_in.answers.push_back(std::move(a));
  }
  return ep;
}

// REINFORCE + supervised gradients for one curriculum episode. Token gradients
// on sampled rounds are weighted by that round's reward; the regression head
// receives the analytic gradient of each reward through its own prediction.
struct ReinforceStats {
  double q_ce = 0.0, a_ce = 0.0, penalty_q = 0.0;
};

inline ReinforceStats reinforce_gradients(const MixedEpisode& ep, const AgentParams& qbot,
                                          const AgentParams& abot, const TrainConfig& cfg,
                                          double scale, double baseline,
                                          AgentParams& q_grads, AgentParams& a_grads) {
  if (ep.decode_mode != DecodeConfig::Mode::sample)
    throw ContractError("reinforce_gradients: policy gradients need sampled transcripts");
  const size_t rounds = ep.q_in.questions.size();
  const int n_sup = ep.supervised_rounds;
  const double lambda_q = cfg.penalize_qbot ? cfg.penalty_coefficient : 0.0;

  QbotGraph qg = qbot_forward(qbot, ep.q_in, cfg.dropout_rl,
                              nullptr);  // dropout_rl is fixed at 0
  QbotLossWeights qw;
  qw.token_coeff.assign(rounds, 0.0);
  qw.reg_pull.assign(rounds + 1, 0.0);
  qw.penalty_lambda = lambda_q * scale;
  for (size_t t = 1; t <= rounds; ++t) {
    if (int(t) <= n_sup) {
      qw.token_coeff[t - 1] = scale;
      qw.reg_pull[t] = cfg.regression_weight * scale;
    } else {
      qw.token_coeff[t - 1] = (ep.rewards[t - 1] - baseline) * scale;
      // Direct gradient of r_t through y_hat_t; the previous prediction is the
      // already-taken action and is held fixed.
      qw.reg_pull[t] += scale;
    }
  }
  if (n_sup >= 0) qw.reg_pull[0] += cfg.regression_weight * scale;  // caption-only guess
  qbot_backward(qbot, ep.q_in, qg, qw, q_grads);

  AbotGraph ag = abot_forward(abot, ep.a_in, cfg.dropout_rl, nullptr);
  AbotLossWeights aw;
  aw.token_coeff.assign(rounds, 0.0);
  aw.penalty_lambda = 0.0;  // A-bot penalty is an SL-pretraining variant only
  for (size_t t = 1; t <= rounds; ++t)
    aw.token_coeff[t - 1] =
        int(t) <= n_sup ? scale : (ep.rewards[t - 1] - baseline) * scale;
  abot_backward(abot, ep.a_in, ag, aw, a_grads);

  ReinforceStats stats;
  for (size_t t = 0; t < size_t(n_sup); ++t) {
    stats.q_ce += qg.decs[t].ce;
    stats.a_ce += ag.decs[t].ce;
  }
  stats.penalty_q = qg.penalty_sum;
  return stats;
}

// ---------------------------------------------------------------------------
// Training driver

struct CurveRow {
  std::string phase;  // "sl" or "rl"
  int stage = 0;
  int epoch = 0;
  double sl_loss = 0.0;
  double penalty_term = 0.0;
  double mean_reward = 0.0;
  double mean_state_cosine = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  AgentParams qbot, abot;
  std::vector<CurveRow> curves;
};

using StageCallback =
    std::function<void(const std::string& phase, int stage, const AgentParams& qbot,
                       const AgentParams& abot)>;

// Mean cosine of successive Q-bot states over a handful of greedy self-talk
// probes; the cheap training-time proxy for the state-similarity diagnostic.
inline double probe_state_cosine(const AgentParams& qbot, const AgentParams& abot,
                                 const corpus::Corpus& c, const TokenizedCorpus& tc,
                                 const std::vector<int>& ids, const TrainConfig& cfg) {
  DecodeConfig q_cfg{.mode = DecodeConfig::Mode::greedy, .max_len = cfg.max_question_len};
  DecodeConfig a_cfg{.mode = DecodeConfig::Mode::greedy, .max_len = cfg.max_answer_len};
  double sum = 0.0;
  long count = 0;
  for (int id : ids) {
    Episode ep = run_selftalk_episode(qbot, abot, c.image(id).features,
                                      tc.dialogs[size_t(id)].caption, corpus::kDialogRounds,
                                      q_cfg, a_cfg, nullptr);
    for (size_t t = 1; t < ep.transcript.q_states.size(); ++t) {
      sum += num::cosine_similarity(ep.transcript.q_states[t - 1], ep.transcript.q_states[t]);
      ++count;
    }
  }
  return count ? sum / double(count) : 0.0;
}

struct Bots {
  AgentParams qbot, abot;
};

inline Bots init_bots(const ModelDims& dims, uint64_t seed) {
  return {AgentParams::init(AgentRole::qbot, dims, mix_seed(seed, "init-qbot")),
          AgentParams::init(AgentRole::abot, dims, mix_seed(seed, "init-abot"))};
}

inline std::vector<int> probe_ids_for(const corpus::Corpus& c) {
  return {c.val_ids.begin(), c.val_ids.begin() + long(std::min<size_t>(16, c.val_ids.size()))};
}

// Supervised pre-training: MLE on both agents plus regression and the
// diversity penalty, per the configured flags.
inline std::vector<CurveRow> run_sl_phase(Bots& bots, const corpus::Corpus& c,
                                          const TrainConfig& cfg) {
  cfg.validate();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  Adam q_opt(bots.qbot), a_opt(bots.abot);
  const std::vector<int> probe_ids = probe_ids_for(c);

  std::vector<CurveRow> curves;
  for (int epoch = 0; epoch < cfg.sl_epochs; ++epoch) {
    std::vector<int> order = c.train_ids;
    derive_rng(cfg.seed, "sl-shuffle", uint64_t(epoch)).shuffle(order);
    const double lr = lr_at(epoch, cfg);
    double epoch_loss = 0.0, epoch_pen = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.batch_size)) {
      std::vector<int> batch(order.begin() + long(start),
                             order.begin() + long(std::min(order.size(),
                                                           start + size_t(cfg.batch_size))));
      SlBatchResult r = sl_loss(tc, c, batch, bots.qbot, bots.abot, cfg, cfg.dropout_sl,
                                mix_seed(cfg.seed, "sl-dropout", uint64_t(epoch), start));
      q_opt.step(bots.qbot, r.q_grads, lr);
      a_opt.step(bots.abot, r.a_grads, lr);
      epoch_loss += r.loss;
      epoch_pen += r.penalty_q;
      ++batches;
    }
    curves.push_back({.phase = "sl",
                      .stage = 0,
                      .epoch = epoch,
                      .sl_loss = epoch_loss / batches,
                      .penalty_term = epoch_pen / batches,
                      .mean_reward = 0.0,
                      .mean_state_cosine =
                          probe_state_cosine(bots.qbot, bots.abot, c, tc, probe_ids, cfg),
                      .lr = lr});
  }
  return curves;
}

// Self-talk RL fine-tuning with the curriculum anneal: rounds 1..N supervised,
// rounds N+1..10 sampled with REINFORCE, N cycling 9..4.
inline std::vector<CurveRow> run_rl_phase(Bots& bots, const corpus::Corpus& c,
                                          const TrainConfig& cfg,
                                          const StageCallback& on_stage = {}) {
  cfg.validate();
  TokenizedCorpus tc = TokenizedCorpus::from(c);
  Adam q_opt(bots.qbot), a_opt(bots.abot);
  const std::vector<int> probe_ids = probe_ids_for(c);

  std::vector<CurveRow> curves;
  const int stages = 6 * cfg.curriculum_sweeps;
  double baseline = 0.0;
  bool baseline_ready = false;
  for (int stage = 0; stage < stages; ++stage) {
    const int n_sup = curriculum_rounds(stage);
    const double lr = lr_at(cfg.sl_epochs + stage, cfg);
    std::vector<int> order = c.train_ids;
    derive_rng(cfg.seed, "rl-shuffle", uint64_t(stage)).shuffle(order);
    if (int(order.size()) > cfg.rl_episodes_per_stage)
      order.resize(size_t(cfg.rl_episodes_per_stage));

    double stage_reward = 0.0, stage_ce = 0.0, stage_pen = 0.0;
    long episodes = 0;
    for (size_t start = 0; start < order.size(); start += size_t(cfg.rl_batch)) {
      AgentParams q_grads = bots.qbot.zeros_like();
      AgentParams a_grads = bots.abot.zeros_like();
      const size_t stop = std::min(order.size(), start + size_t(cfg.rl_batch));
      const double scale = 1.0 / double(stop - start);
      double batch_reward = 0.0;
      for (size_t i = start; i < stop; ++i) {
        Rng rng = derive_rng(cfg.seed, "rl-episode", uint64_t(stage), i);
        MixedEpisode ep = run_mixed_episode(bots.qbot, bots.abot, tc.dialogs[size_t(order[i])],
                                            c.image(order[i]).features, n_sup, cfg, rng);
        ReinforceStats st =
            reinforce_gradients(ep, bots.qbot, bots.abot, cfg, scale,
                                cfg.reward_baseline && baseline_ready ? baseline : 0.0,
                                q_grads, a_grads);
        stage_reward += ep.sampled_reward_sum;
        batch_reward += ep.sampled_reward_sum;
        stage_ce += st.q_ce + st.a_ce;
        stage_pen += st.penalty_q;
        ++episodes;
      }
      if (cfg.reward_baseline) {
        const double mean_r = batch_reward / double(stop - start);
        baseline = baseline_ready ? 0.9 * baseline + 0.1 * mean_r : mean_r;
        baseline_ready = true;
      }
      q_opt.step(bots.qbot, q_grads, lr);
      a_opt.step(bots.abot, a_grads, lr);
      if (!num::all_finite(bots.qbot.embed) || !num::all_finite(bots.abot.embed))
        throw NumericError("train: non-finite parameters after RL update at stage " +
                           std::to_string(stage));
    }
    curves.push_back({.phase = "rl",
                      .stage = stage,
                      .epoch = cfg.sl_epochs + stage,
                      .sl_loss = episodes ? stage_ce / double(episodes) : 0.0,
                      .penalty_term = episodes ? stage_pen / double(episodes) : 0.0,
                      .mean_reward = episodes ? stage_reward / double(episodes) : 0.0,
                      .mean_state_cosine =
                          probe_state_cosine(bots.qbot, bots.abot, c, tc, probe_ids, cfg),
                      .lr = lr});
    if (on_stage) on_stage("rl", stage, bots.qbot, bots.abot);
  }
  return curves;
}

inline TrainResult run_training(const corpus::Corpus& c, const ModelDims& dims,
                                const TrainConfig& cfg, const StageCallback& on_stage = {}) {
  cfg.validate();
  Bots bots = init_bots(dims, cfg.seed);
  TrainResult out;
  out.curves = run_sl_phase(bots, c, cfg);
  if (on_stage) on_stage("sl", 0, bots.qbot, bots.abot);
  auto rl = run_rl_phase(bots, c, cfg, on_stage);
  out.curves.insert(out.curves.end(), rl.begin(), rl.end());
  out.qbot = std::move(bots.qbot);
  out.abot = std::move(bots.abot);
  return out;
}

inline std::string curves_to_csv(const std::vector<CurveRow>& rows) {
  std::string csv = "phase,stage,epoch,sl_loss,penalty_term,mean_reward,mean_state_cosine,lr\n";
  for (const auto& r : rows) {
    csv += r.phase + "," + std::to_string(r.stage) + "," + std::to_string(r.epoch) + "," +
           format_double(r.sl_loss) + "," + format_double(r.penalty_term) + "," +
           format_double(r.mean_reward) + "," + format_double(r.mean_state_cosine) + "," +
           format_double(r.lr) + "\n";
  }
  return csv;
}

}  // namespace selftalk::train
