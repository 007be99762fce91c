#pragma once

// Training-time unrolled forward/backward passes for both agents. Forward
// passes record every activation needed by the hand-written backward passes;
// the same machinery serves supervised training (cross-entropy weights) and
// REINFORCE (per-round reward weights on the token gradients).

#include <vector>

#include "selftalk/agents.hpp"
#include "selftalk/lstm.hpp"
#include "selftalk/numeric.hpp"
#include "selftalk/rng.hpp"

namespace selftalk::train {

using agents::AgentParams;
using agents::AgentRole;

// Inverted dropout; the mask is recorded for the backward pass. Masks depend
// only on the rng stream and call order, never on parameter values, so a
// frozen seed gives identical masks across finite-difference probes.
inline void apply_dropout(Vec& v, double rate, Rng& rng, Vec& mask_out) {
  mask_out.resize(v.size());
  const double scale = 1.0 / (1.0 - rate);
  for (size_t i = 0; i < v.size(); ++i) {
    const double m = rng.next_double() < rate ? 0.0 : scale;
    mask_out[i] = m;
    v[i] *= m;
  }
}

// Reverse sweep over a recorded stack run. d_tops may be empty or hold one
// (possibly empty) vector per step; adj starts zeroed and ends holding the
// adjoint of the initial state.
inline void stack_run_backward(const num::LstmStack& p, const num::SeqCache& cache,
                               const std::vector<Vec>& d_tops, num::LstmStack& grads,
                               std::vector<Vec>& d_inputs, num::StackAdjoint& adj) {
  const size_t n = cache.steps.size();
  d_inputs.assign(n, Vec(size_t(p.input_dim()), 0.0));
  for (size_t t = n; t-- > 0;) {
    if (!d_tops.empty() && !d_tops[t].empty()) adj.add_top(d_tops[t]);
    num::stack_step_backward(p, cache.steps[t], adj, grads, &d_inputs[t]);
  }
}

// One encoded token sequence (fact, question, or history pair).
struct EncGraph {
  std::vector<int> tokens;
  std::vector<Vec> inputs;  // post-dropout encoder inputs
  std::vector<Vec> masks;   // empty when dropout is off
  num::SeqCache cache;
  Vec repr;  // final top hidden
};

inline EncGraph encode_seq(const AgentParams& p, const std::vector<int>& tokens,
                           const Vec* img_emb, double drop, Rng* drop_rng) {
  EncGraph g;
  g.tokens = tokens;
  g.inputs = agents::fact_inputs(p, tokens, img_emb);
  if (drop > 0.0) {
    g.masks.resize(g.inputs.size());
    for (size_t i = 0; i < g.inputs.size(); ++i)
      apply_dropout(g.inputs[i], drop, *drop_rng, g.masks[i]);
  }
  g.cache.steps.resize(g.inputs.size());
  num::StackState st(p.dims.hidden);
  for (size_t t = 0; t < g.inputs.size(); ++t)
    num::stack_step(p.fact_enc, g.inputs[t], st, &g.cache.steps[t]);
  g.repr = st.h1;
  return g;
}

// Routes d(encoder inputs) into the embedding table (word part) and the
// shared image embedding (image part, when present).
inline void encoder_input_grads(const AgentParams& p, const EncGraph& g,
                                std::vector<Vec>& d_inputs, AgentParams& grads,
                                Vec* d_img_emb) {
  const int e = p.dims.embed;
  for (size_t k = 0; k < d_inputs.size(); ++k) {
    Vec& d = d_inputs[k];
    if (!g.masks.empty())
      for (size_t i = 0; i < d.size(); ++i) d[i] *= g.masks[k][i];
    num::axpy(1.0, d.data(), grads.embed.row(g.tokens[k]), e);
    if (d_img_emb) num::axpy(1.0, d.data() + e, d_img_emb->data(), e);
  }
}

inline void encode_seq_backward(const AgentParams& p, const EncGraph& g, const Vec& d_repr,
                                AgentParams& grads, Vec* d_img_emb) {
  num::StackAdjoint adj(p.dims.hidden);
  adj.add_top(d_repr);
  std::vector<Vec> d_inputs;
  stack_run_backward(p.fact_enc, g.cache, {}, grads.fact_enc, d_inputs, adj);
  encoder_input_grads(p, g, d_inputs, grads, d_img_emb);
}

// Teacher-forced decoder over one target sequence, conditioned on state s.
struct DecGraph {
  std::vector<int> targets;    // tokens to reproduce (stop-terminated or truncated)
  std::vector<int> in_tokens;  // START + targets[:-1]
  std::vector<Vec> inputs;     // post-dropout decoder inputs
  std::vector<Vec> in_masks;
  num::SeqCache cache;
  std::vector<Vec> top_drop;  // post-dropout top hidden per step
  std::vector<Vec> top_masks;
  std::vector<Vec> probs;  // softmax per step
  Vec step_logprobs;
  double ce = 0.0;  // sum of -log p(target) over steps
};

inline DecGraph decoder_forward(const AgentParams& p, const Vec& s,
                                const std::vector<int>& targets, double drop,
                                Rng* drop_rng) {
  check_contract(!targets.empty(), "decoder_forward: empty target sequence");
  DecGraph g;
  g.targets = targets;
  g.in_tokens.push_back(kStartId);
  for (size_t i = 0; i + 1 < targets.size(); ++i) g.in_tokens.push_back(targets[i]);

  num::StackState st = agents::decoder_init(p, s);
  const size_t n = targets.size();
  g.cache.steps.resize(n);
  g.inputs.resize(n);
  if (drop > 0.0) {
    g.in_masks.resize(n);
    g.top_masks.resize(n);
  }
  g.top_drop.resize(n);
  g.probs.resize(n);
  g.step_logprobs.resize(n);
  for (size_t k = 0; k < n; ++k) {
    g.inputs[k] = agents::embed_token(p, g.in_tokens[k]);
    if (drop > 0.0) apply_dropout(g.inputs[k], drop, *drop_rng, g.in_masks[k]);
    num::stack_step(p.dec, g.inputs[k], st, &g.cache.steps[k]);
    g.top_drop[k] = st.h1;
    if (drop > 0.0) apply_dropout(g.top_drop[k], drop, *drop_rng, g.top_masks[k]);
    Vec logits(size_t(p.dims.vocab));
    num::matvec(p.out_w, g.top_drop[k].data(), logits.data());
    num::axpy(1.0, p.out_b.row(0), logits.data(), p.dims.vocab);
    const double lse = num::log_sum_exp(logits);
    g.step_logprobs[k] = logits[size_t(targets[k])] - lse;
    g.ce -= g.step_logprobs[k];
    for (auto& v : logits) v = std::exp(v - lse);
    g.probs[k] = std::move(logits);
  }
  return g;
}

// coeff scales the per-step token gradient (softmax - onehot): the supervised
// CE weight, or the round reward r_t under REINFORCE. ds accumulates the
// gradient wrt the conditioning state.
inline void decoder_backward(const AgentParams& p, const DecGraph& g, double coeff,
                             AgentParams& grads, Vec& ds) {
  if (coeff == 0.0) return;
  const size_t n = g.targets.size();
  std::vector<Vec> d_tops(n);
  for (size_t k = 0; k < n; ++k) {
    Vec dlogits = g.probs[k];
    for (auto& v : dlogits) v *= coeff;
    dlogits[size_t(g.targets[k])] -= coeff;
    num::outer_add(grads.out_w, dlogits.data(), g.top_drop[k].data());
    num::axpy(1.0, dlogits.data(), grads.out_b.row(0), p.dims.vocab);
    Vec dtop(size_t(p.dims.hidden), 0.0);
    num::matvec_t_add(p.out_w, dlogits.data(), dtop.data());
    if (!g.top_masks.empty())
      for (size_t i = 0; i < dtop.size(); ++i) dtop[i] *= g.top_masks[k][i];
    d_tops[k] = std::move(dtop);
  }
  num::StackAdjoint adj(p.dims.hidden);
  std::vector<Vec> d_inputs;
  stack_run_backward(p.dec, g.cache, d_tops, grads.dec, d_inputs, adj);
  // Both decoder layers were initialized with h = s.
  num::axpy(1.0, adj.dh0.data(), ds.data(), p.dims.hidden);
  num::axpy(1.0, adj.dh1.data(), ds.data(), p.dims.hidden);
  for (size_t k = 0; k < n; ++k) {
    Vec& d = d_inputs[k];
    if (!g.in_masks.empty())
      for (size_t i = 0; i < d.size(); ++i) d[i] *= g.in_masks[k][i];
    num::axpy(1.0, d.data(), grads.embed.row(g.in_tokens[k]), p.dims.embed);
  }
}

// Adds the gradient of -lambda * sum f(|‖s_{t-1}‖-‖s_t‖|) over consecutive
// entries of a round-state trace (s_1..s_T; the caption-only state is not
// penalized and must not be passed). Returns sum f over the pairs.
inline double penalty_backward(const std::vector<const Vec*>& states, double lambda,
                               std::vector<Vec>& ds) {
  double total = 0.0;
  for (size_t t = 1; t < states.size(); ++t) {
    const Vec& a = *states[t - 1];
    const Vec& b = *states[t];
    const double na = num::norm2(a);
    const double nb = num::norm2(b);
    const auto f = num::smooth_l1_penalty(std::abs(na - nb));
    total += f.value;
    if (lambda == 0.0) continue;
    const double sign = na > nb ? 1.0 : (na < nb ? -1.0 : 0.0);
    const double c = -lambda * f.derivative * sign;
    if (na > 1e-12)
      for (size_t i = 0; i < a.size(); ++i) ds[t - 1][i] += c * a[i] / na;
    if (nb > 1e-12)
      for (size_t i = 0; i < b.size(); ++i) ds[t][i] -= c * b[i] / nb;
  }
  return total;
}

// ---------------------------------------------------------------------------
// Q-bot dialog graph

struct QbotDialogInput {
  std::vector<int> caption;                 // stop-terminated
  std::vector<std::vector<int>> questions;  // one per round
  std::vector<std::vector<int>> answers;    // one per round
  Vec y_gt;                                 // empty disables regression outputs
};

struct QbotGraph {
  struct Fact {
    EncGraph enc;
    num::StackStepCache dlg;
    Vec s;
    Vec y_hat;
  };
  std::vector<Fact> facts;  // caption + one per round
  std::vector<DecGraph> decs;  // question decoders, decs[t] conditioned on facts[t].s
  double ce_sum = 0.0;
  double reg_sum = 0.0;      // sum_t ||y_gt - y_hat_t||^2
  double penalty_sum = 0.0;  // sum f(delta) over consecutive round states
};

inline QbotGraph qbot_forward(const AgentParams& p, const QbotDialogInput& in, double drop,
                              Rng* drop_rng) {
  check_contract(p.role == AgentRole::qbot, "qbot_forward: wrong agent role");
  check_contract(in.questions.size() == in.answers.size(),
                 "qbot_forward: question/answer count mismatch");
  const size_t rounds = in.questions.size();
  QbotGraph g;
  g.facts.reserve(rounds + 1);
  num::StackState dlg(p.dims.hidden);

  auto ingest = [&](const std::vector<int>& tokens) {
    QbotGraph::Fact fact;
    fact.enc = encode_seq(p, tokens, nullptr, drop, drop_rng);
    num::stack_step(p.dlg_enc, fact.enc.repr, dlg, &fact.dlg);
    fact.s = dlg.h1;
    if (!in.y_gt.empty()) {
      fact.y_hat.resize(size_t(p.dims.feature));
      num::matvec(p.reg_w, fact.s.data(), fact.y_hat.data());
      num::axpy(1.0, p.reg_b.row(0), fact.y_hat.data(), p.dims.feature);
      g.reg_sum += num::l2_distance_sq(in.y_gt, fact.y_hat);
    }
    g.facts.push_back(std::move(fact));
  };

  ingest(in.caption);
  for (size_t t = 0; t < rounds; ++t) {
    g.decs.push_back(decoder_forward(p, g.facts[t].s, in.questions[t], drop, drop_rng));
    g.ce_sum += g.decs.back().ce;
    std::vector<int> fact = in.questions[t];
    fact.insert(fact.end(), in.answers[t].begin(), in.answers[t].end());
    ingest(fact);
  }

  std::vector<const Vec*> states;
  for (size_t t = 1; t < g.facts.size(); ++t) states.push_back(&g.facts[t].s);
  std::vector<Vec> scratch(states.size());
  g.penalty_sum = penalty_backward(states, 0.0, scratch);
  return g;
}

struct QbotLossWeights {
  std::vector<double> token_coeff;  // per round; scales (softmax - onehot)
  std::vector<double> reg_pull;     // per state t=0..T; d y_hat += 2*pull*(y_hat - y)
  double penalty_lambda = 0.0;
};

inline void qbot_backward(const AgentParams& p, const QbotDialogInput& in,
                          const QbotGraph& g, const QbotLossWeights& w,
                          AgentParams& grads) {
  const size_t n_states = g.facts.size();
  check_contract(w.token_coeff.size() == g.decs.size(),
                 "qbot_backward: token_coeff size mismatch");
  check_contract(w.reg_pull.empty() || w.reg_pull.size() == n_states,
                 "qbot_backward: reg_pull size mismatch");
  std::vector<Vec> ds(n_states, Vec(size_t(p.dims.hidden), 0.0));

  if (!w.reg_pull.empty() && !in.y_gt.empty()) {
    for (size_t t = 0; t < n_states; ++t) {
      const double pull = w.reg_pull[t];
      if (pull == 0.0) continue;
      Vec dy(size_t(p.dims.feature));
      for (int i = 0; i < p.dims.feature; ++i)
        dy[size_t(i)] = 2.0 * pull * (g.facts[t].y_hat[size_t(i)] - in.y_gt[size_t(i)]);
      num::outer_add(grads.reg_w, dy.data(), g.facts[t].s.data());
      num::axpy(1.0, dy.data(), grads.reg_b.row(0), p.dims.feature);
      num::matvec_t_add(p.reg_w, dy.data(), ds[t].data());
    }
  }

  if (n_states > 1) {
    std::vector<const Vec*> states;
    for (size_t t = 1; t < n_states; ++t) states.push_back(&g.facts[t].s);
    std::vector<Vec> ds_rounds(states.size(), Vec(size_t(p.dims.hidden), 0.0));
    penalty_backward(states, w.penalty_lambda, ds_rounds);
    for (size_t t = 0; t < states.size(); ++t)
      num::axpy(1.0, ds_rounds[t].data(), ds[t + 1].data(), p.dims.hidden);
  }

  for (size_t t = 0; t < g.decs.size(); ++t)
    decoder_backward(p, g.decs[t], w.token_coeff[t], grads, ds[t]);

  num::StackAdjoint adj(p.dims.hidden);
  std::vector<Vec> d_reprs(n_states);
  for (size_t t = n_states; t-- > 0;) {
    adj.add_top(ds[t]);
    Vec d_repr(size_t(p.dims.hidden), 0.0);
    num::stack_step_backward(p.dlg_enc, g.facts[t].dlg, adj, grads.dlg_enc, &d_repr);
    d_reprs[t] = std::move(d_repr);
  }
  for (size_t t = 0; t < n_states; ++t)
    encode_seq_backward(p, g.facts[t].enc, d_reprs[t], grads, nullptr);
}

// ---------------------------------------------------------------------------
// A-bot dialog graph

struct AbotDialogInput {
  Vec image_features;
  std::vector<int> caption;
  std::vector<std::vector<int>> questions;
  std::vector<std::vector<int>> answers;
};

struct AbotGraph {
  Vec img_emb;
  EncGraph caption;                 // history representation for round 1
  std::vector<EncGraph> q_encs;     // per-round question encodings
  std::vector<EncGraph> hist_encs;  // (q,a) pair encodings for rounds 1..T-1
  std::vector<num::StackStepCache> dlg;
  std::vector<Vec> s;  // answering states, one per round
  std::vector<DecGraph> decs;
  double ce_sum = 0.0;
  double penalty_sum = 0.0;
};

inline AbotGraph abot_forward(const AgentParams& p, const AbotDialogInput& in, double drop,
                              Rng* drop_rng) {
  check_contract(p.role == AgentRole::abot, "abot_forward: wrong agent role");
  check_contract(in.questions.size() == in.answers.size(),
                 "abot_forward: question/answer count mismatch");
  const size_t rounds = in.questions.size();
  AbotGraph g;
  g.img_emb = agents::image_embedding(p, in.image_features);
  g.caption = encode_seq(p, in.caption, &g.img_emb, drop, drop_rng);

  num::StackState dlg(p.dims.hidden);
  g.dlg.resize(rounds);
  for (size_t t = 0; t < rounds; ++t) {
    g.q_encs.push_back(encode_seq(p, in.questions[t], &g.img_emb, drop, drop_rng));
    const Vec& hist = t == 0 ? g.caption.repr : g.hist_encs[t - 1].repr;
    Vec dlg_in = g.q_encs[t].repr;
    dlg_in.insert(dlg_in.end(), hist.begin(), hist.end());
    num::stack_step(p.dlg_enc, dlg_in, dlg, &g.dlg[t]);
    g.s.push_back(dlg.h1);
    g.decs.push_back(decoder_forward(p, g.s[t], in.answers[t], drop, drop_rng));
    g.ce_sum += g.decs.back().ce;
    if (t + 1 < rounds) {
      std::vector<int> fact = in.questions[t];
      fact.insert(fact.end(), in.answers[t].begin(), in.answers[t].end());
      g.hist_encs.push_back(encode_seq(p, fact, &g.img_emb, drop, drop_rng));
    }
  }

  std::vector<const Vec*> states;
  for (const auto& sv : g.s) states.push_back(&sv);
  std::vector<Vec> scratch(states.size());
  g.penalty_sum = penalty_backward(states, 0.0, scratch);
  return g;
}

struct AbotLossWeights {
  std::vector<double> token_coeff;
  double penalty_lambda = 0.0;
};

inline void abot_backward(const AgentParams& p, const AbotDialogInput& in,
                          const AbotGraph& g, const AbotLossWeights& w,
                          AgentParams& grads) {
  const size_t rounds = g.s.size();
  check_contract(w.token_coeff.size() == rounds, "abot_backward: token_coeff size mismatch");
  std::vector<Vec> ds(rounds, Vec(size_t(p.dims.hidden), 0.0));

  {
    std::vector<const Vec*> states;
    for (const auto& sv : g.s) states.push_back(&sv);
    penalty_backward(states, w.penalty_lambda, ds);
  }

  for (size_t t = 0; t < rounds; ++t)
    decoder_backward(p, g.decs[t], w.token_coeff[t], grads, ds[t]);

  Vec d_img(size_t(p.dims.embed), 0.0);
  std::vector<Vec> d_q(rounds), d_hist(rounds);
  num::StackAdjoint adj(p.dims.hidden);
  for (size_t t = rounds; t-- > 0;) {
    adj.add_top(ds[t]);
    Vec d_in(size_t(2 * p.dims.hidden), 0.0);
    num::stack_step_backward(p.dlg_enc, g.dlg[t], adj, grads.dlg_enc, &d_in);
    d_q[t].assign(d_in.begin(), d_in.begin() + p.dims.hidden);
    d_hist[t].assign(d_in.begin() + p.dims.hidden, d_in.end());
  }
  for (size_t t = 0; t < rounds; ++t) {
    encode_seq_backward(p, g.q_encs[t], d_q[t], grads, &d_img);
    if (t == 0)
      encode_seq_backward(p, g.caption, d_hist[0], grads, &d_img);
    else
      encode_seq_backward(p, g.hist_encs[t - 1], d_hist[t], grads, &d_img);
  }
  num::outer_add(grads.img_w, d_img.data(), in.image_features.data());
  num::axpy(1.0, d_img.data(), grads.img_b.row(0), p.dims.embed);
}

}  // namespace selftalk::train
