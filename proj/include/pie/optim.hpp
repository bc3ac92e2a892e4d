#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pie/tape.hpp"

namespace pie {

struct AdamConfig {
  double learning_rate = 2e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_stability = 1e-8;
  int64_t warmup_steps = 0;  // 0 = constant learning rate
};

// Bias-corrected Adam. Moments are kept per parameter name so optimizer state
// can round-trip through checkpoints.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t step_count() const { return step_; }

  struct Slot {
    Tensor<T> m, v;
  };

  void step(const std::vector<Parameter<T>*>& params) {
    ++step_;
    double lr = cfg_.learning_rate;
    if (cfg_.warmup_steps > 0 && step_ < cfg_.warmup_steps)
      lr *= static_cast<double>(step_) / static_cast<double>(cfg_.warmup_steps);
    double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Parameter<T>* p : params) {
      Slot& slot = slots_[p->name];
      if (slot.m.numel() == 0) {
        slot.m = Tensor<T>::zeros(p->value.shape);
        slot.v = Tensor<T>::zeros(p->value.shape);
      }
      for (int64_t i = 0; i < p->value.numel(); ++i) {
        double g = static_cast<double>(p->grad.v[i]);
        if (!std::isfinite(g))
          throw NumericError("non-finite gradient in parameter '" + p->name + "'");
        double m = cfg_.beta1 * static_cast<double>(slot.m.v[i]) + (1.0 - cfg_.beta1) * g;
        double v = cfg_.beta2 * static_cast<double>(slot.v.v[i]) + (1.0 - cfg_.beta2) * g * g;
        slot.m.v[i] = static_cast<T>(m);
        slot.v.v[i] = static_cast<T>(v);
        double update = lr * (m / bc1) / (std::sqrt(v / bc2) + cfg_.eps_stability);
        p->value.v[i] = static_cast<T>(static_cast<double>(p->value.v[i]) - update);
      }
    }
  }

  std::map<std::string, Slot>& slots() { return slots_; }
  void set_step_count(int64_t s) { step_ = s; }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::map<std::string, Slot> slots_;
};

}  // namespace pie
