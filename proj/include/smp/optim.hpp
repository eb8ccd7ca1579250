// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "smp/tensor.hpp"

namespace smp {

struct AdamWConfig {
  double lr = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

// Decoupled-weight-decay Adam over a name-keyed parameter set. Moments are
// keyed by parameter name so freeze masks and checkpoint round-trips stay
// stable across runs.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(AdamWConfig cfg) : cfg_(cfg) {}

  // One update applied to every parameter that has an entry in `grads`.
  // Atomic: if any listed gradient is non-finite the step is rejected, no
  // parameter or moment changes, the counter stays put, and a diagnostic is
  // written to stderr. Returns whether the step was applied.
  bool step(const std::map<std::string, Tensor*>& params,
            const std::map<std::string, std::vector<double>>& grads);

  long long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  // Checkpoint access: moments keyed by parameter name.
  const std::map<std::string, std::vector<double>>& m() const { return m_; }
  const std::map<std::string, std::vector<double>>& v() const { return v_; }
  void restore(long long t, std::map<std::string, std::vector<double>> m,
               std::map<std::string, std::vector<double>> v);

 private:
  AdamWConfig cfg_;
  long long t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

}  // namespace smp
