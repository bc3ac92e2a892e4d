#pragma once

#include <algorithm>
#include <functional>
#include <string>
#include <vector>

#include "pie/rng.hpp"
#include "pie/tape.hpp"

namespace pie {

struct GradCheckOptions {
  double step = 1e-5;
  int probes_per_param = 25;
  uint64_t seed = 20240001;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int probes = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> per_param;
  double max_rel_err = 0.0;

  bool ok(double tolerance) const { return max_rel_err < tolerance; }
};

// Central-difference check of analytic gradients. `eval(with_grad)` must
// return the loss; when with_grad it must also populate fresh gradients in
// `params` (grads are zeroed here first). Double precision only — finite
// differences are not trustworthy in single.
inline GradCheckReport grad_check(const std::vector<Parameter<double>*>& params,
                                  const std::function<double(bool)>& eval,
                                  GradCheckOptions opt = {}) {
  for (auto* p : params) p->zero_grad();
  eval(true);

  Rng rng(opt.seed);
  GradCheckReport report;
  for (auto* p : params) {
    GradCheckEntry entry;
    entry.name = p->name;
    int64_t n = p->value.numel();
    std::vector<int64_t> coords;
    if (n <= opt.probes_per_param) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int i = 0; i < opt.probes_per_param; ++i)
        coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
    }
    for (int64_t c : coords) {
      double orig = p->value.v[static_cast<size_t>(c)];
      p->value.v[static_cast<size_t>(c)] = orig + opt.step;
      double up = eval(false);
      p->value.v[static_cast<size_t>(c)] = orig - opt.step;
      double down = eval(false);
      p->value.v[static_cast<size_t>(c)] = orig;
      double numeric = (up - down) / (2.0 * opt.step);
      double analytic = p->grad.v[static_cast<size_t>(c)];
      double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
      entry.max_rel_err = std::max(entry.max_rel_err, std::abs(analytic - numeric) / denom);
      ++entry.probes;
    }
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

}  // namespace pie
