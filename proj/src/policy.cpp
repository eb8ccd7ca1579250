// SPDX-License-Identifier: Apache-2.0
#include "smp/policy.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace smp {

void TrainConfig::validate() const {
  if (!(sigma_a > 0.0)) throw std::invalid_argument("TrainConfig: sigma_a must be > 0");
  if (!(eps > 0.0)) throw std::invalid_argument("TrainConfig: eps must be > 0");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be > 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (total_steps < 0) throw std::invalid_argument("TrainConfig: total_steps must be >= 0");
  if (w_coeff < 0.0 || w_recon < 0.0 || w_gate < 0.0 || w_align < 0.0)
    throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
  if (!(anneal_frac >= 0.0 && anneal_frac <= 1.0))
    throw std::invalid_argument("TrainConfig: anneal_frac must be in [0,1]");
  if (!(align_temp > 0.0)) throw std::invalid_argument("TrainConfig: align_temp must be > 0");
  if (freeze_basis && freeze_experts && freeze_posterior && freeze_usage && freeze_router)
    throw std::invalid_argument("TrainConfig: freeze mask covers every component");
  if (metric_every < 1) throw std::invalid_argument("TrainConfig: metric_every must be >= 1");
  if (checkpoint_every < 1)
    throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
}

SkillPolicy SkillPolicy::init(const PolicyDims& dims, const GateHyper& hyper,
                              const TrainConfig& config, Rng& rng) {
  config.validate();
  if (dims.d_s < 1 || dims.d < 1 || dims.K < 1 || dims.H < 1)
    throw std::invalid_argument("SkillPolicy::init: dims must be positive");
  if (dims.K > dims.d)
    throw std::invalid_argument("SkillPolicy::init: K > d breaks basis orthonormality");
  SkillPolicy p;
  p.dims = dims;
  p.hyper = hyper;
  p.config = config;
  p.basis = BasisNet::init(dims.d_s, dims.d, dims.K, dims.basis_hidden, rng);
  p.gates = GateAmortizer::init(dims.d_s, dims.d, dims.K, dims.gate_hidden, rng);
  p.experts = ExpertDenoiser::init(dims.K, dims.d_s, dims.temb_dim, dims.expert_hidden, rng);
  p.schedule = make_schedule(dims.diff_steps, dims.beta_start, dims.beta_end);
  return p;
}

nn::ParamRefs SkillPolicy::params() {
  nn::ParamRefs out;
  basis.collect("basis", out);
  gates.collect("gates", out);
  experts.collect("experts", out);
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::map<std::string, Tensor*> SkillPolicy::param_map() {
  std::map<std::string, Tensor*> out;
  for (auto& [name, t] : params()) out.emplace(name, t);
  return out;
}

SkillPolicy SkillPolicy::watched(Tape& tape) const {
  SkillPolicy p = *this;
  p.basis = basis.watched(tape);
  p.gates = gates.watched(tape);
  p.experts = experts.watched(tape);
  return p;
}

void SkillPolicy::validate() const {
  if (basis.K != dims.K || gates.K != dims.K || experts.K != dims.K)
    throw std::invalid_argument("SkillPolicy: component K disagrees with dims.K");
  if (basis.d != dims.d) throw std::invalid_argument("SkillPolicy: basis d disagrees");
  if (experts.d_s != dims.d_s) throw std::invalid_argument("SkillPolicy: expert d_s disagrees");
  if (experts.temb_dim != dims.temb_dim)
    throw std::invalid_argument("SkillPolicy: expert temb_dim disagrees");
  if (schedule.steps != dims.diff_steps || schedule.steps < 1)
    throw std::invalid_argument("SkillPolicy: schedule length disagrees");
  SkillPolicy& self = const_cast<SkillPolicy&>(*this);
  for (auto& [name, t] : self.params()) {
    if (!t->all_finite())
      throw std::invalid_argument("SkillPolicy: non-finite parameter " + name);
  }
  config.validate();
}

int SkillPolicy::total_param_count() {
  int n = 0;
  for (auto& [name, t] : params()) n += t->numel();
  return n;
}

}  // namespace smp
