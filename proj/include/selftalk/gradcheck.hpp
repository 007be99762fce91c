#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

#include "selftalk/common.hpp"
#include "selftalk/rng.hpp"
#include "selftalk/vec.hpp"

namespace selftalk::num {

struct GradCheckReport {
  double max_relative_error = 0.0;
  size_t worst_coordinate = 0;
  size_t probe_count = 0;
};

// Central finite differences against an analytic gradient. The relative-error
// denominator clamps at 1e-8 so near-zero gradients do not blow up the ratio.
// probes == 0 checks every coordinate; otherwise `probes` coordinates are
// sampled without replacement from the given rng stream.
inline GradCheckReport check_gradients(const std::function<double(const Vec&)>& f,
                                       const Vec& point, const Vec& analytic_grad,
                                       double eps, size_t probes = 0, Rng* rng = nullptr) {
  check_domain(eps >= 1e-7 && eps <= 1e-3, "check_gradients: eps outside [1e-7, 1e-3]");
  check_shape(point.size() == analytic_grad.size(),
              "check_gradients: gradient/point dimension mismatch");
  std::vector<size_t> coords(point.size());
  std::iota(coords.begin(), coords.end(), size_t(0));
  if (probes > 0 && probes < coords.size()) {
    check_contract(rng != nullptr, "check_gradients: probe sampling needs an rng");
    for (size_t i = 0; i < probes; ++i) {
      const size_t j = i + size_t(rng->below(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(probes);
  }

  GradCheckReport report;
  report.probe_count = coords.size();
  Vec x = point;
  for (size_t k : coords) {
    const double x0 = x[k];
    x[k] = x0 + eps;
    const double fp = f(x);
    x[k] = x0 - eps;
    const double fm = f(x);
    x[k] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("check_gradients: non-finite function value at probe");
    const double numeric = (fp - fm) / (2.0 * eps);
    const double analytic = analytic_grad[k];
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    const double rel = std::abs(analytic - numeric) / denom;
    if (rel > report.max_relative_error) {
      report.max_relative_error = rel;
      report.worst_coordinate = k;
    }
  }
  return report;
}

}  // namespace selftalk::num
