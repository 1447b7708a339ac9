#pragma once

#include <limits>
#include <unordered_map>
#include <utility>

#include "dmn/tensor.hpp"

namespace dmn {

struct AdamConfig {
  Scalar lr = 1e-5;
  Scalar beta1 = 0.9;
  Scalar beta2 = 0.999;
  Scalar eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  Scalar lr() const { return cfg_.lr; }
  void set_lr(Scalar lr) { cfg_.lr = lr; }
  long step_count() const { return step_; }

  // Standard bias-corrected update; clears every gradient afterwards.
  void step(const NamedParams& params) {
    for (const auto& [name, p] : params)
      check(p.has_grad(), "adam_step: missing gradient for parameter '" + name + "'");
    ++step_;
    Scalar bc1 = 1.0 - std::pow(cfg_.beta1, (Scalar)step_);
    Scalar bc2 = 1.0 - std::pow(cfg_.beta2, (Scalar)step_);
    for (const auto& [name, p] : params) {
      auto& slot = state_[name];
      auto& pv = const_cast<Tensor&>(p).data();
      const auto& g = p.grad();
      if (slot.m.size() != pv.size()) {
        slot.m.assign(pv.size(), 0.0);
        slot.v.assign(pv.size(), 0.0);
      }
      for (size_t i = 0; i < pv.size(); ++i) {
        slot.m[i] = cfg_.beta1 * slot.m[i] + (1.0 - cfg_.beta1) * g[i];
        slot.v[i] = cfg_.beta2 * slot.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        Scalar m_hat = slot.m[i] / bc1;
        Scalar v_hat = slot.v[i] / bc2;
        pv[i] -= cfg_.lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
      }
      const_cast<Tensor&>(p).clear_grad();
    }
  }

 private:
  struct Moments {
    std::vector<Scalar> m, v;
  };
  AdamConfig cfg_;
  long step_ = 0;
  std::unordered_map<std::string, Moments> state_;
};

// Divides the learning rate by `factor` once the loss has failed to improve
// for `patience` consecutive epochs.
class PlateauScheduler {
 public:
  PlateauScheduler(int patience = 2, Scalar factor = 10.0)
      : patience_(patience), factor_(factor) {}

  // Call once per epoch with that epoch's loss; returns true if the rate dropped.
  bool observe(Scalar loss, Adam& opt) {
    if (loss < best_) {
      best_ = loss;
      bad_epochs_ = 0;
      return false;
    }
    ++bad_epochs_;
    if (bad_epochs_ >= patience_) {
      opt.set_lr(opt.lr() / factor_);
      bad_epochs_ = 0;
      return true;
    }
    return false;
  }

  Scalar best_loss() const { return best_; }

 private:
  int patience_;
  Scalar factor_;
  Scalar best_ = std::numeric_limits<Scalar>::infinity();
  int bad_epochs_ = 0;
};

}  // namespace dmn
