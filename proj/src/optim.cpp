// SPDX-License-Identifier: Apache-2.0
#include "smp/optim.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace smp {

bool AdamW::step(const std::map<std::string, Tensor*>& params,
                 const std::map<std::string, std::vector<double>>& grads) {
  // Validate everything before touching any state: rejection must be atomic.
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw std::invalid_argument("AdamW::step: gradient for unknown parameter " + name);
    if (static_cast<int>(g.size()) != it->second->numel())
      throw std::invalid_argument("AdamW::step: gradient size mismatch for " + name);
    for (double v : g) {
      if (!std::isfinite(v)) {
        std::cerr << "adamw: non-finite gradient on " << name << ", step " << (t_ + 1) << " rejected\n";
        return false;
      }
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (const auto& [name, g] : grads) {
    Tensor* p = params.at(name);
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.empty()) m.assign(g.size(), 0.0);
    if (v.empty()) v.assign(g.size(), 0.0);
    auto& w = p->raw();
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
  return true;
}

void AdamW::restore(long long t, std::map<std::string, std::vector<double>> m,
                    std::map<std::string, std::vector<double>> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace smp
