#pragma once

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "selftalk/lstm.hpp"
#include "selftalk/numeric.hpp"
#include "selftalk/rng.hpp"
#include "selftalk/vec.hpp"

namespace selftalk::agents {

struct ModelDims {
  int vocab = 0;    // V
  int embed = 32;   // E
  int hidden = 64;  // H
  int feature = 32; // F, image-feature / regression dimension
};

enum class AgentRole { qbot, abot };

// One agent's full parameter set. Word embeddings are shared across the fact
// encoder, dialog encoder and decoder. A-bot additionally projects image
// features to embedding space and concatenates the result with every encoder
// input token; Q-bot additionally owns the feature-regression head.
struct AgentParams {
  AgentRole role = AgentRole::qbot;
  ModelDims dims;

  Mat embed;               // V x E
  Mat img_w, img_b;        // E x F, 1 x E        (abot only)
  num::LstmStack fact_enc; // input E (qbot) / 2E (abot)
  num::LstmStack dlg_enc;  // input H (qbot) / 2H (abot)
  num::LstmStack dec;      // input E
  Mat out_w, out_b;        // V x H, 1 x V
  Mat reg_w, reg_b;        // F x H, 1 x F        (qbot only)

  static AgentParams make(AgentRole role, const ModelDims& dims) {
    AgentParams p;
    p.role = role;
    p.dims = dims;
    const int e_in = role == AgentRole::abot ? 2 * dims.embed : dims.embed;
    const int d_in = role == AgentRole::abot ? 2 * dims.hidden : dims.hidden;
    p.embed = Mat(dims.vocab, dims.embed);
    if (role == AgentRole::abot) {
      p.img_w = Mat(dims.embed, dims.feature);
      p.img_b = Mat(1, dims.embed);
    }
    p.fact_enc = num::LstmStack(e_in, dims.hidden);
    p.dlg_enc = num::LstmStack(d_in, dims.hidden);
    p.dec = num::LstmStack(dims.embed, dims.hidden);
    p.out_w = Mat(dims.vocab, dims.hidden);
    p.out_b = Mat(1, dims.vocab);
    if (role == AgentRole::qbot) {
      p.reg_w = Mat(dims.feature, dims.hidden);
      p.reg_b = Mat(1, dims.feature);
    }
    return p;
  }

  // Input weights start 4x wider than recurrent ones: the token signal passes
  // four recurrent layers before reaching the dialog state, and at standard
  // scales the chain attenuates it below any useful gradient scale.
  static AgentParams init(AgentRole role, const ModelDims& dims, uint64_t seed) {
    AgentParams p = make(role, dims);
    Rng rng(seed);
    const double r = 1.0 / std::sqrt(double(dims.hidden));
    p.embed.fill_uniform(rng, -1.0, 1.0);
    if (role == AgentRole::abot) {
      p.img_w.fill_uniform(rng, -1.0 / std::sqrt(double(dims.feature)),
                           1.0 / std::sqrt(double(dims.feature)));
    }
    for (num::LstmStack* s : {&p.fact_enc, &p.dlg_enc, &p.dec}) {
      for (num::LstmCell* c : {&s->l0, &s->l1}) {
        c->wx.fill_uniform(rng, -4.0 * r, 4.0 * r);
        c->wh.fill_uniform(rng, -r, r);
        // forget-gate bias starts at 1 so early training keeps cell memory
        for (int k = 0; k < c->hidden_dim; ++k) c->b.at(0, c->hidden_dim + k) = 1.0;
      }
    }
    p.out_w.fill_uniform(rng, -r, r);
    if (role == AgentRole::qbot) p.reg_w.fill_uniform(rng, -r, r);
    return p;
  }

  AgentParams zeros_like() const { return make(role, dims); }

  template <class Self, class F>
  static void visit_tensors(Self& self, F&& f) {
    f("embed", self.embed);
    f("img_w", self.img_w);
    f("img_b", self.img_b);
    f("fact_enc.l0.wx", self.fact_enc.l0.wx);
    f("fact_enc.l0.wh", self.fact_enc.l0.wh);
    f("fact_enc.l0.b", self.fact_enc.l0.b);
    f("fact_enc.l1.wx", self.fact_enc.l1.wx);
    f("fact_enc.l1.wh", self.fact_enc.l1.wh);
    f("fact_enc.l1.b", self.fact_enc.l1.b);
    f("dlg_enc.l0.wx", self.dlg_enc.l0.wx);
    f("dlg_enc.l0.wh", self.dlg_enc.l0.wh);
    f("dlg_enc.l0.b", self.dlg_enc.l0.b);
    f("dlg_enc.l1.wx", self.dlg_enc.l1.wx);
    f("dlg_enc.l1.wh", self.dlg_enc.l1.wh);
    f("dlg_enc.l1.b", self.dlg_enc.l1.b);
    f("dec.l0.wx", self.dec.l0.wx);
    f("dec.l0.wh", self.dec.l0.wh);
    f("dec.l0.b", self.dec.l0.b);
    f("dec.l1.wx", self.dec.l1.wx);
    f("dec.l1.wh", self.dec.l1.wh);
    f("dec.l1.b", self.dec.l1.b);
    f("out_w", self.out_w);
    f("out_b", self.out_b);
    f("reg_w", self.reg_w);
    f("reg_b", self.reg_b);
  }
  template <class F>
  void for_each_tensor(F&& f) {
    visit_tensors(*this, f);
  }
  template <class F>
  void for_each_tensor(F&& f) const {
    visit_tensors(*this, f);
  }

  size_t parameter_count() const {
    size_t n = 0;
    for_each_tensor([&](const char*, const Mat& m) { n += m.size(); });
    return n;
  }
};

inline Vec flatten_params(const AgentParams& p) {
  Vec out;
  out.reserve(p.parameter_count());
  p.for_each_tensor([&](const char*, const Mat& m) {
    out.insert(out.end(), m.a.begin(), m.a.end());
  });
  return out;
}

inline void unflatten_params(const Vec& flat, AgentParams& p) {
  size_t pos = 0;
  p.for_each_tensor([&](const char*, Mat& m) {
    check_shape(pos + m.size() <= flat.size(), "unflatten_params: size mismatch");
    std::copy(flat.begin() + long(pos), flat.begin() + long(pos + m.size()), m.a.begin());
    pos += m.size();
  });
  check_shape(pos == flat.size(), "unflatten_params: size mismatch");
}

// dst += alpha * src, tensor by tensor.
inline void axpy_params(double alpha, const AgentParams& src, AgentParams& dst) {
  std::vector<const Mat*> from;
  src.for_each_tensor([&](const char*, const Mat& m) { from.push_back(&m); });
  size_t i = 0;
  dst.for_each_tensor([&](const char*, Mat& m) {
    check_shape(m.size() == from[i]->size(), "axpy_params: tensor shape mismatch");
    num::axpy(alpha, from[i]->a.data(), m.a.data(), int(m.size()));
    ++i;
  });
}

inline void validate_tokens(const std::vector<int>& tokens, int vocab, const char* what) {
  if (tokens.empty()) throw DataError(std::string(what) + ": empty token sequence");
  for (int t : tokens)
    if (t < 0 || t >= vocab)
      throw DataError(std::string(what) + ": token id out of vocabulary");
}

inline Vec embed_token(const AgentParams& p, int token) {
  Vec e(size_t(p.dims.embed));
  std::copy(p.embed.row(token), p.embed.row(token) + p.dims.embed, e.begin());
  return e;
}

inline Vec image_embedding(const AgentParams& p, const Vec& features) {
  check_shape(int(features.size()) == p.dims.feature,
              "image features: dimension mismatch");
  Vec e(size_t(p.dims.embed));
  num::matvec(p.img_w, features.data(), e.data());
  num::axpy(1.0, p.img_b.row(0), e.data(), p.dims.embed);
  return e;
}

// Encoder inputs for one fact: word embedding, with the image embedding
// concatenated to every token for A-bot.
inline std::vector<Vec> fact_inputs(const AgentParams& p, const std::vector<int>& tokens,
                                    const Vec* img_emb) {
  std::vector<Vec> inputs;
  inputs.reserve(tokens.size());
  for (int t : tokens) {
    Vec e = embed_token(p, t);
    if (img_emb) e.insert(e.end(), img_emb->begin(), img_emb->end());
    inputs.push_back(std::move(e));
  }
  return inputs;
}

// ---------------------------------------------------------------------------
// Decoding

struct DecodeConfig {
  enum class Mode { greedy, sample, beam };
  Mode mode = Mode::beam;
  int beam_size = 5;
  int max_len = 8;
  double temperature = 1.0;  // sampling only
  uint64_t seed = 0;

  void validate() const {
    if (beam_size < 1) throw ConfigError("decode: beam_size must be >= 1");
    if (max_len < 1) throw ConfigError("decode: max_len must be >= 1");
    if (!(temperature > 0.0)) throw ConfigError("decode: temperature must be positive");
  }
};

struct Decoded {
  std::vector<int> tokens;  // includes the stop token when emitted
  Vec step_logprobs;        // model log-probability of each emitted token

  double total_logprob() const {
    double s = 0.0;
    for (double v : step_logprobs) s += v;
    return s;
  }
};

inline num::StackState decoder_init(const AgentParams& p, const Vec& s) {
  check_shape(int(s.size()) == p.dims.hidden, "decoder_init: state dimension mismatch");
  num::StackState st(p.dims.hidden);
  st.h0 = s;
  st.h1 = s;
  return st;
}

inline Vec decoder_logits(const AgentParams& p, const num::StackState& st) {
  Vec logits(size_t(p.dims.vocab));
  num::matvec(p.out_w, st.h1.data(), logits.data());
  num::axpy(1.0, p.out_b.row(0), logits.data(), p.dims.vocab);
  return logits;
}

// Sum of token log-probabilities of `tokens` under the decoder conditioned on
// state s. Scores the full-vocabulary softmax; always <= 0.
inline double score_sequence(const AgentParams& p, const Vec& s,
                             const std::vector<int>& tokens, bool require_terminated = true) {
  validate_tokens(tokens, p.dims.vocab, "score_sequence");
  if (require_terminated && tokens.back() != kStopId)
    throw ContractError("score_sequence: sequence does not end with the stop token");
  num::StackState st = decoder_init(p, s);
  int prev = kStartId;
  double total = 0.0;
  for (int tok : tokens) {
    num::stack_step(p.dec, embed_token(p, prev), st, nullptr);
    Vec logits = decoder_logits(p, st);
    total += logits[size_t(tok)] - num::log_sum_exp(logits);
    prev = tok;
  }
  return total;
}

namespace detail {

// Greedy/beam never utter pad or start; their reported scores stay raw model
// log-probabilities, so rescoring with score_sequence is exact.
inline bool utterable(int token) { return token != kPadId && token != kStartId; }

struct BeamHyp {
  std::vector<int> tokens;
  double score = 0.0;
  bool done = false;
  Vec step_logprobs;
  num::StackState state;  // decoder state after consuming START + tokens
};

inline bool beam_better(const BeamHyp& a, const BeamHyp& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::lexicographical_compare(a.tokens.begin(), a.tokens.end(), b.tokens.begin(),
                                      b.tokens.end());
}

}  // namespace detail

struct BeamResult {
  std::vector<int> tokens;
  double score = 0.0;
};

// Deterministic beam search; output sorted by (score desc, token ids asc,
// shorter first) and duplicate-free. Hypotheses that reach max_len without the
// stop token are finalized as-is.
inline std::vector<BeamResult> beam_search(const AgentParams& p, const Vec& s,
                                           int beam_size, int max_len) {
  if (beam_size < 1) throw ConfigError("beam_search: beam_size must be >= 1");
  if (max_len < 1) throw ConfigError("beam_search: max_len must be >= 1");
  using detail::BeamHyp;

  std::vector<BeamHyp> beams(1);
  beams[0].state = decoder_init(p, s);
  num::stack_step(p.dec, embed_token(p, kStartId), beams[0].state, nullptr);

  for (int len = 0; len < max_len; ++len) {
    bool all_done = true;
    std::vector<BeamHyp> candidates;
    for (auto& hyp : beams) {
      if (hyp.done) {
        candidates.push_back(std::move(hyp));
        continue;
      }
      all_done = false;
      Vec logits = decoder_logits(p, hyp.state);
      const double lse = num::log_sum_exp(logits);
      for (int v = 0; v < p.dims.vocab; ++v) {
        if (!detail::utterable(v)) continue;
        BeamHyp next;
        next.tokens = hyp.tokens;
        next.tokens.push_back(v);
        next.step_logprobs = hyp.step_logprobs;
        next.step_logprobs.push_back(logits[size_t(v)] - lse);
        next.score = hyp.score + next.step_logprobs.back();
        next.done = (v == kStopId);
        if (!next.done) next.state = hyp.state;  // stepped below only if kept
        candidates.push_back(std::move(next));
      }
    }
    if (all_done) {
      beams = std::move(candidates);
      break;
    }
    std::sort(candidates.begin(), candidates.end(), detail::beam_better);
    if (int(candidates.size()) > beam_size) candidates.resize(size_t(beam_size));
    for (auto& hyp : candidates)
      if (!hyp.done && int(hyp.tokens.size()) == len + 1)
        num::stack_step(p.dec, embed_token(p, hyp.tokens.back()), hyp.state, nullptr);
    beams = std::move(candidates);
  }

  std::sort(beams.begin(), beams.end(), detail::beam_better);
  std::vector<BeamResult> out;
  out.reserve(beams.size());
  for (auto& b : beams) out.push_back({std::move(b.tokens), b.score});
  return out;
}

// Single-sequence decode under the given config. Sampling draws from the full
// model distribution at the configured temperature; reported log-probs are
// always the raw (temperature-1) model values.
inline Decoded decode(const AgentParams& p, const Vec& s, const DecodeConfig& cfg,
                      Rng* rng = nullptr) {
  cfg.validate();
  Decoded out;
  if (cfg.mode == DecodeConfig::Mode::beam) {
    auto beams = beam_search(p, s, cfg.beam_size, cfg.max_len);
    out.tokens = beams.front().tokens;
    // Recover the per-token log-probs by teacher forcing the winner.
    num::StackState st = decoder_init(p, s);
    int prev = kStartId;
    for (int tok : out.tokens) {
      num::stack_step(p.dec, embed_token(p, prev), st, nullptr);
      Vec logits = decoder_logits(p, st);
      out.step_logprobs.push_back(logits[size_t(tok)] - num::log_sum_exp(logits));
      prev = tok;
    }
    return out;
  }

  num::StackState st = decoder_init(p, s);
  int prev = kStartId;
  for (int step = 0; step < cfg.max_len; ++step) {
    num::stack_step(p.dec, embed_token(p, prev), st, nullptr);
    Vec logits = decoder_logits(p, st);
    const double lse = num::log_sum_exp(logits);
    int chosen;
    if (cfg.mode == DecodeConfig::Mode::greedy) {
      chosen = -1;
      for (int v = 0; v < p.dims.vocab; ++v) {
        if (!detail::utterable(v)) continue;
        if (chosen < 0 || logits[size_t(v)] > logits[size_t(chosen)]) chosen = v;
      }
    } else {
      check_contract(rng != nullptr, "decode: sampling requires an rng");
      Vec probs = logits;
      if (cfg.temperature != 1.0)
        for (auto& v : probs) v /= cfg.temperature;
      num::softmax_inplace(probs);
      const double u = rng->next_double();
      double acc = 0.0;
      chosen = p.dims.vocab - 1;
      for (int v = 0; v < p.dims.vocab; ++v) {
        acc += probs[size_t(v)];
        if (u < acc) {
          chosen = v;
          break;
        }
      }
    }
    out.tokens.push_back(chosen);
    out.step_logprobs.push_back(logits[size_t(chosen)] - lse);
    if (chosen == kStopId) break;
    prev = chosen;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Q-bot

struct QBotState {
  num::StackState dlg;
  Vec s;  // top-layer dialog hidden; feeds both question decoding and guessing
  int facts_observed = 0;
};

inline QBotState qbot_start(const AgentParams& p) {
  check_contract(p.role == AgentRole::qbot, "qbot_start: wrong agent role");
  QBotState st;
  st.dlg = num::StackState(p.dims.hidden);
  st.s.assign(size_t(p.dims.hidden), 0.0);
  return st;
}

inline QBotState qbot_update_state(const QBotState& state, const std::vector<int>& fact,
                                   const AgentParams& p) {
  validate_tokens(fact, p.dims.vocab, "qbot_update_state");
  QBotState next = state;
  const Vec repr = num::seq_encode(p.fact_enc, fact_inputs(p, fact, nullptr), nullptr);
  num::stack_step(p.dlg_enc, repr, next.dlg, nullptr);
  next.s = next.dlg.h1;
  next.facts_observed = state.facts_observed + 1;
  return next;
}

inline Decoded qbot_ask(const QBotState& state, const DecodeConfig& cfg,
                        const AgentParams& p, Rng* rng = nullptr) {
  return decode(p, state.s, cfg, rng);
}

inline Vec qbot_guess(const QBotState& state, const AgentParams& p) {
  check_contract(p.role == AgentRole::qbot, "qbot_guess: wrong agent role");
  Vec y(size_t(p.dims.feature));
  num::matvec(p.reg_w, state.s.data(), y.data());
  num::axpy(1.0, p.reg_b.row(0), y.data(), p.dims.feature);
  num::assert_finite(y, "qbot_guess");
  return y;
}

// ---------------------------------------------------------------------------
// A-bot

struct ABotState {
  num::StackState dlg;
  Vec s;             // answering state for the current round
  Vec pending_hist;  // fact representation of the previous round (or caption)
};

inline ABotState abot_start(const AgentParams& p, const Vec& image_features,
                            const std::vector<int>& caption) {
  check_contract(p.role == AgentRole::abot, "abot_start: wrong agent role");
  validate_tokens(caption, p.dims.vocab, "abot_start");
  ABotState st;
  st.dlg = num::StackState(p.dims.hidden);
  st.s.assign(size_t(p.dims.hidden), 0.0);
  const Vec img = image_embedding(p, image_features);
  st.pending_hist = num::seq_encode(p.fact_enc, fact_inputs(p, caption, &img), nullptr);
  return st;
}

// Steps the dialog encoder with [question repr ; previous-round repr]; the
// resulting state answers this round's question.
inline ABotState abot_read_question(const ABotState& state, const AgentParams& p,
                                    const Vec& image_features,
                                    const std::vector<int>& question) {
  validate_tokens(question, p.dims.vocab, "abot_read_question");
  ABotState next = state;
  const Vec img = image_embedding(p, image_features);
  Vec q_repr = num::seq_encode(p.fact_enc, fact_inputs(p, question, &img), nullptr);
  Vec dlg_in = q_repr;
  dlg_in.insert(dlg_in.end(), state.pending_hist.begin(), state.pending_hist.end());
  num::stack_step(p.dlg_enc, dlg_in, next.dlg, nullptr);
  next.s = next.dlg.h1;
  return next;
}

inline ABotState abot_commit_answer(const ABotState& state, const AgentParams& p,
                                    const Vec& image_features,
                                    const std::vector<int>& question,
                                    const std::vector<int>& answer) {
  validate_tokens(answer, p.dims.vocab, "abot_commit_answer");
  ABotState next = state;
  const Vec img = image_embedding(p, image_features);
  std::vector<int> fact = question;
  fact.insert(fact.end(), answer.begin(), answer.end());
  next.pending_hist = num::seq_encode(p.fact_enc, fact_inputs(p, fact, &img), nullptr);
  return next;
}

struct AbotTurn {
  Decoded answer;
  ABotState state;
};

inline AbotTurn abot_answer(const ABotState& state, const Vec& image_features,
                            const std::vector<int>& question, const DecodeConfig& cfg,
                            const AgentParams& p, Rng* rng = nullptr) {
  AbotTurn turn;
  ABotState read = abot_read_question(state, p, image_features, question);
  turn.answer = decode(p, read.s, cfg, rng);
  turn.state = abot_commit_answer(read, p, image_features, question, turn.answer.tokens);
  return turn;
}

}  // namespace selftalk::agents
