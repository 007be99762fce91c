#pragma once

#include <algorithm>
#include <cmath>
#include <utility>

#include "selftalk/common.hpp"
#include "selftalk/vec.hpp"

namespace selftalk::num {

struct PenaltyValue {
  double value = 0.0;
  double derivative = 0.0;
};

// Piecewise smooth-L1 on the successive state-norm gap. Quadratic branch is
// strict `<` at the 0.1 knee; both value and derivative are continuous there.
inline PenaltyValue smooth_l1_penalty(double delta) {
  check_domain(std::isfinite(delta) && delta >= 0.0,
               "smooth_l1_penalty: delta must be finite and >= 0");
  if (delta < 0.1) return {0.5 * delta * delta, delta};
  return {0.1 * (delta - 0.05), 0.1};
}

// Delta_t = | ||s_prev||_2 - ||s_cur||_2 |. Note this is a norm gap, not a
// distance: sign flips of a whole state vector leave it unchanged.
inline double state_delta(const Vec& s_prev, const Vec& s_cur) {
  check_shape(s_prev.size() == s_cur.size(), "state_delta: dimension mismatch");
  return std::abs(norm2(s_prev) - norm2(s_cur));
}

inline double cosine_similarity(const Vec& a, const Vec& b) {
  check_shape(a.size() == b.size(), "cosine_similarity: dimension mismatch");
  const double na = norm2(a);
  const double nb = norm2(b);
  check_domain(na > 0.0 && nb > 0.0, "cosine_similarity: zero-norm input");
  return dot(a, b) / (na * nb);
}

inline double l2_distance_sq(const Vec& a, const Vec& b) {
  check_shape(a.size() == b.size(), "l2_distance_sq: dimension mismatch");
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// In-place numerically stable softmax.
inline void softmax_inplace(Vec& x) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (auto& v : x) {
    v = std::exp(v - m);
    z += v;
  }
  for (auto& v : x) v /= z;
}

inline double log_sum_exp(const Vec& x) {
  const double m = *std::max_element(x.begin(), x.end());
  double z = 0.0;
  for (double v : x) z += std::exp(v - m);
  return m + std::log(z);
}

struct CrossEntropyResult {
  double loss = 0.0;
  Vec grad;  // softmax(logits) - onehot(target); sums to zero
};

inline CrossEntropyResult softmax_cross_entropy(const Vec& logits, int target) {
  if (target < 0 || size_t(target) >= logits.size())
    throw IndexError("softmax_cross_entropy: target out of range");
  CrossEntropyResult r;
  const double lse = log_sum_exp(logits);
  r.loss = lse - logits[size_t(target)];
  r.grad = logits;
  for (auto& v : r.grad) v = std::exp(v - lse);
  r.grad[size_t(target)] -= 1.0;
  return r;
}

}  // namespace selftalk::num
