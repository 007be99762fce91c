#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "selftalk/common.hpp"
#include "selftalk/rng.hpp"

namespace selftalk {

// All numerics are 64-bit; gradient checks do not hold at float precision.
using Vec = std::vector<double>;

// Row-major dense matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(size_t(r) * size_t(c), 0.0) {}

  double* row(int i) { return a.data() + size_t(i) * size_t(cols); }
  const double* row(int i) const { return a.data() + size_t(i) * size_t(cols); }
  double& at(int r, int c) { return a[size_t(r) * size_t(cols) + size_t(c)]; }
  double at(int r, int c) const { return a[size_t(r) * size_t(cols) + size_t(c)]; }
  size_t size() const { return a.size(); }

  void zero() { std::fill(a.begin(), a.end(), 0.0); }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (auto& v : a) v = rng.uniform(lo, hi);
  }
};

namespace num {

// Eight independent accumulators break the reduction dependence so the loop
// vectorizes without relaxing FP semantics; the summation order is fixed, so
// results stay bit-identical across runs.
inline double dot(const double* x, const double* y, int n) {
  double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  int i = 0;
  for (; i + 8 <= n; i += 8)
    for (int j = 0; j < 8; ++j) acc[j] += x[i + j] * y[i + j];
  double s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

inline double dot(const Vec& x, const Vec& y) {
  check_shape(x.size() == y.size(), "dot: dimension mismatch");
  return dot(x.data(), y.data(), int(x.size()));
}

inline void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline double norm2(const Vec& x) { return std::sqrt(dot(x.data(), x.data(), int(x.size()))); }

// y = W x
inline void matvec(const Mat& w, const double* x, double* y) {
  for (int r = 0; r < w.rows; ++r) y[r] = dot(w.row(r), x, w.cols);
}

// y += W x
inline void matvec_add(const Mat& w, const double* x, double* y) {
  for (int r = 0; r < w.rows; ++r) y[r] += dot(w.row(r), x, w.cols);
}

// dx += W^T dy
inline void matvec_t_add(const Mat& w, const double* dy, double* dx) {
  for (int r = 0; r < w.rows; ++r) axpy(dy[r], w.row(r), dx, w.cols);
}

// dW += dy x^T
inline void outer_add(Mat& dw, const double* dy, const double* x) {
  for (int r = 0; r < dw.rows; ++r) axpy(dy[r], x, dw.row(r), dw.cols);
}

inline bool all_finite(const Vec& x) {
  for (double v : x)
    if (!std::isfinite(v)) return false;
  return true;
}

inline bool all_finite(const Mat& m) {
  for (double v : m.a)
    if (!std::isfinite(v)) return false;
  return true;
}

inline void assert_finite(const Vec& x, const char* what) {
  if (!all_finite(x)) throw NumericError(std::string("non-finite values in ") + what);
}

}  // namespace num
}  // namespace selftalk
