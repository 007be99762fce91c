#pragma once

#include <vector>

#include "selftalk/numeric.hpp"
#include "selftalk/vec.hpp"

namespace selftalk::num {

// Gated recurrent cell, 4 gates in fixed order (input, forget, candidate,
// output). The ordering is part of the checkpoint format.
struct LstmCell {
  Mat wx;  // 4H x input_dim
  Mat wh;  // 4H x hidden_dim
  Mat b;   // 1 x 4H
  int input_dim = 0;
  int hidden_dim = 0;

  LstmCell() = default;
  LstmCell(int in, int hid)
      : wx(4 * hid, in), wh(4 * hid, hid), b(1, 4 * hid), input_dim(in), hidden_dim(hid) {}
};

struct LstmStepCache {
  Vec x, h_prev, c_prev;
  Vec i, f, g, o, c;
};

// h, c updated in place. Pass cache when the step will be backpropagated.
inline void lstm_step(const LstmCell& p, const Vec& x, Vec& h, Vec& c,
                      LstmStepCache* cache) {
  const int hid = p.hidden_dim;
  check_shape(int(x.size()) == p.input_dim, "lstm_step: input dimension mismatch");
  check_shape(int(h.size()) == hid && int(c.size()) == hid,
              "lstm_step: state dimension mismatch");
  Vec z(size_t(4) * size_t(hid));
  matvec(p.wx, x.data(), z.data());
  matvec_add(p.wh, h.data(), z.data());
  axpy(1.0, p.b.row(0), z.data(), 4 * hid);

  Vec gi(hid), gf(hid), gg(hid), go(hid), c_new(hid);
  for (int k = 0; k < hid; ++k) {
    gi[k] = sigmoid(z[size_t(k)]);
    gf[k] = sigmoid(z[size_t(hid + k)]);
    gg[k] = std::tanh(z[size_t(2 * hid + k)]);
    go[k] = sigmoid(z[size_t(3 * hid + k)]);
    c_new[k] = gf[k] * c[k] + gi[k] * gg[k];
  }
  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->c_prev = c;
    cache->i = gi;
    cache->f = gf;
    cache->g = gg;
    cache->o = go;
    cache->c = c_new;
  }
  for (int k = 0; k < hid; ++k) {
    c[k] = c_new[k];
    h[k] = go[k] * std::tanh(c_new[k]);
  }
}

// Reverse step. dx accumulates (may be null); dh_prev/dc_prev are overwritten.
inline void lstm_step_backward(const LstmCell& p, const LstmStepCache& cc, const Vec& dh,
                               const Vec& dc_in, LstmCell& grads, Vec* dx, Vec& dh_prev,
                               Vec& dc_prev) {
  const int hid = p.hidden_dim;
  Vec dz(size_t(4) * size_t(hid));
  dc_prev.assign(size_t(hid), 0.0);
  for (int k = 0; k < hid; ++k) {
    const double tc = std::tanh(cc.c[k]);
    const double do_ = dh[k] * tc;
    const double dc = dc_in[k] + dh[k] * cc.o[k] * (1.0 - tc * tc);
    const double di = dc * cc.g[k];
    const double df = dc * cc.c_prev[k];
    const double dg = dc * cc.i[k];
    dz[size_t(k)] = di * cc.i[k] * (1.0 - cc.i[k]);
    dz[size_t(hid + k)] = df * cc.f[k] * (1.0 - cc.f[k]);
    dz[size_t(2 * hid + k)] = dg * (1.0 - cc.g[k] * cc.g[k]);
    dz[size_t(3 * hid + k)] = do_ * cc.o[k] * (1.0 - cc.o[k]);
    dc_prev[k] = dc * cc.f[k];
  }
  outer_add(grads.wx, dz.data(), cc.x.data());
  outer_add(grads.wh, dz.data(), cc.h_prev.data());
  axpy(1.0, dz.data(), grads.b.row(0), 4 * hid);
  if (dx) matvec_t_add(p.wx, dz.data(), dx->data());
  dh_prev.assign(size_t(hid), 0.0);
  matvec_t_add(p.wh, dz.data(), dh_prev.data());
}

struct RecurrentStepResult {
  Vec h, c;
};

// Value-semantics single step; the contract-level entry point.
inline RecurrentStepResult recurrent_step(const LstmCell& p, const Vec& x, const Vec& h,
                                          const Vec& c) {
  RecurrentStepResult r{h, c};
  lstm_step(p, x, r.h, r.c, nullptr);
  assert_finite(r.h, "recurrent_step h");
  assert_finite(r.c, "recurrent_step c");
  return r;
}

// Two stacked cells; all recurrent encoders/decoders in the model are 2-layer.
struct LstmStack {
  LstmCell l0, l1;
  LstmStack() = default;
  LstmStack(int in, int hid) : l0(in, hid), l1(hid, hid) {}
  int hidden_dim() const { return l0.hidden_dim; }
  int input_dim() const { return l0.input_dim; }
};

struct StackState {
  Vec h0, c0, h1, c1;
  StackState() = default;
  explicit StackState(int hid) : h0(hid, 0.0), c0(hid, 0.0), h1(hid, 0.0), c1(hid, 0.0) {}
};

struct StackStepCache {
  LstmStepCache s0, s1;
};

inline void stack_step(const LstmStack& p, const Vec& x, StackState& st,
                       StackStepCache* cache) {
  lstm_step(p.l0, x, st.h0, st.c0, cache ? &cache->s0 : nullptr);
  lstm_step(p.l1, st.h0, st.h1, st.c1, cache ? &cache->s1 : nullptr);
}

// Running adjoint of a StackState during the reverse sweep.
struct StackAdjoint {
  Vec dh0, dc0, dh1, dc1;
  explicit StackAdjoint(int hid) : dh0(hid, 0.0), dc0(hid, 0.0), dh1(hid, 0.0), dc1(hid, 0.0) {}
  void add_top(const Vec& d) { axpy(1.0, d.data(), dh1.data(), int(dh1.size())); }
};

// One reverse step. Caller injects any extra d(top hidden) into adj.dh1 first.
inline void stack_step_backward(const LstmStack& p, const StackStepCache& cc,
                                StackAdjoint& adj, LstmStack& grads, Vec* dx) {
  const int hid = p.hidden_dim();
  Vec dh1_prev, dc1_prev;
  Vec d_mid(size_t(hid), 0.0);  // gradient wrt layer-0 output at this step
  lstm_step_backward(p.l1, cc.s1, adj.dh1, adj.dc1, grads.l1, &d_mid, dh1_prev, dc1_prev);
  axpy(1.0, d_mid.data(), adj.dh0.data(), hid);
  Vec dh0_prev, dc0_prev;
  lstm_step_backward(p.l0, cc.s0, adj.dh0, adj.dc0, grads.l0, dx, dh0_prev, dc0_prev);
  adj.dh0 = std::move(dh0_prev);
  adj.dc0 = std::move(dc0_prev);
  adj.dh1 = std::move(dh1_prev);
  adj.dc1 = std::move(dc1_prev);
}

struct SeqCache {
  std::vector<StackStepCache> steps;
};

// Encodes a sequence from a zero state; returns the final top hidden.
inline Vec seq_encode(const LstmStack& p, const std::vector<Vec>& inputs, SeqCache* cache) {
  check_contract(!inputs.empty(), "seq_encode: empty input sequence");
  StackState st(p.hidden_dim());
  if (cache) cache->steps.resize(inputs.size());
  for (size_t t = 0; t < inputs.size(); ++t)
    stack_step(p, inputs[t], st, cache ? &cache->steps[t] : nullptr);
  return st.h1;
}

// Backward of seq_encode given d(final top hidden); fills d_inputs (resized,
// overwritten) and accumulates parameter gradients.
inline void seq_encode_backward(const LstmStack& p, const SeqCache& cache,
                                const Vec& d_final, LstmStack& grads,
                                std::vector<Vec>& d_inputs) {
  const int hid = p.hidden_dim();
  const size_t n = cache.steps.size();
  d_inputs.assign(n, Vec(size_t(p.input_dim()), 0.0));
  StackAdjoint adj(hid);
  adj.add_top(d_final);
  for (size_t t = n; t-- > 0;)
    stack_step_backward(p, cache.steps[t], adj, grads, &d_inputs[t]);
}

}  // namespace selftalk::num
