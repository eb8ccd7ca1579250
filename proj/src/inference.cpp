// SPDX-License-Identifier: Apache-2.0
#include "smp/inference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "smp/basis.hpp"
#include "smp/diffusion.hpp"
#include "smp/gates.hpp"

namespace smp {

void ActivationBudget::validate(int K) const {
  if (k < 1 || k > K)
    throw std::invalid_argument("ActivationBudget: k must be in [1, K], got " +
                                std::to_string(k));
  // tau_m = 0 is the degenerate guard case served by the top-1 fallback.
  if (!(tau_m >= 0.0 && tau_m <= 1.0))
    throw std::invalid_argument("ActivationBudget: tau_m must be in [0, 1]");
}

std::vector<double> router_mean(const SkillPolicy& policy, const std::vector<double>& s) {
  if (static_cast<int>(s.size()) != policy.dims.d_s)
    throw std::invalid_argument("router_mean: state size disagrees with policy");
  Tensor S({1, policy.dims.d_s}, s);
  Tensor conc = policy.gates.router_conc(S).reshaped({policy.dims.K});
  return dirichlet_mean(conc).data();
}

ActiveSet select_active(const std::vector<double>& g_bar, const ActivationBudget& budget,
                        long long* comparisons) {
  const int K = static_cast<int>(g_bar.size());
  if (K < 1) throw std::invalid_argument("select_active: empty gate");
  budget.validate(K);

  ActiveSet out;
  out.masses.resize(static_cast<std::size_t>(K));
  double total = 0.0;
  for (int i = 0; i < K; ++i) {
    const double g = g_bar[static_cast<std::size_t>(i)];
    const double m = budget.linear_mass ? g : g * g;
    out.masses[static_cast<std::size_t>(i)] = m;
    total += m;
  }
  if (!(total > 0.0)) throw std::invalid_argument("select_active: gate mass is zero");

  long long count = 0;
  // (mass, index) max-heap; equal masses surface the lower index first.
  auto before = [&](const std::pair<double, int>& a, const std::pair<double, int>& b) {
    ++count;
    if (a.first != b.first) return a.first < b.first;  // max-heap on mass
    return a.second > b.second;
  };
  std::vector<std::pair<double, int>> heap;
  heap.reserve(static_cast<std::size_t>(K));
  for (int i = 0; i < K; ++i) heap.emplace_back(out.masses[static_cast<std::size_t>(i)], i);
  std::make_heap(heap.begin(), heap.end(), before);

  const bool use_k = budget.mode != ActivationBudget::Mode::Coverage;
  const bool use_tau = budget.mode != ActivationBudget::Mode::TopK;
  double selected = 0.0;
  while (!heap.empty()) {
    if (use_k && static_cast<int>(out.indices.size()) >= budget.k) break;
    if (use_tau && selected / total >= budget.tau_m) break;
    std::pop_heap(heap.begin(), heap.end(), before);
    auto [m, idx] = heap.back();
    heap.pop_back();
    out.indices.push_back(idx);
    selected += m;
  }
  if (out.indices.empty()) {  // degenerate tau_m = 0: top-1 fallback
    int best = 0;
    for (int i = 1; i < K; ++i)
      if (out.masses[static_cast<std::size_t>(i)] > out.masses[static_cast<std::size_t>(best)])
        best = i;
    out.indices.push_back(best);
    selected = out.masses[static_cast<std::size_t>(best)];
  }
  out.covered = selected / total;
  if (comparisons) *comparisons = count;
  return out;
}

ActResult act(const SkillPolicy& policy, const std::vector<double>& s,
              const ActivationBudget& budget, const Rng& stream) {
  if (static_cast<int>(s.size()) != policy.dims.d_s)
    throw std::invalid_argument("act: state size disagrees with policy");
  ActResult res;
  res.gate = router_mean(policy, s);
  res.active = select_active(res.gate, budget);

  Tensor sv({policy.dims.d_s}, s);
  SkillBasis sb = policy.basis.forward(sv);
  Tensor g({policy.dims.K}, res.gate);

  res.chunk.reserve(static_cast<std::size_t>(policy.dims.H));
  for (int h = 0; h < policy.dims.H; ++h) {
    std::vector<double> z =
        denoise_sample(policy.experts, s, res.active.indices, policy.schedule,
                       stream.derived(static_cast<std::uint64_t>(h)));
    if (h == 0) res.z = z;
    Tensor zt({policy.dims.K}, z);
    res.chunk.push_back(decode_action(sb.B, g, zt).data());
  }
  res.action = res.chunk.front();
  return res;
}

Trajectory rollout(const SkillPolicy& policy, const TaskSpec& task, const EnvParams& env,
                   const ActivationBudget& budget, int max_steps, Rng& rng,
                   RolloutDiagnostics* diag) {
  if (max_steps < 0) throw std::invalid_argument("rollout: max_steps must be >= 0");
  budget.validate(policy.dims.K);

  Trajectory traj;
  traj.task_id = task.id;
  RolloutDiagnostics local;
  RolloutDiagnostics& dg = diag ? *diag : local;
  dg = RolloutDiagnostics{};

  std::vector<double> state = initial_state(task, env, rng);
  traj.final_state = state;

  long long act_calls = 0;
  int step = 0;
  bool done = false;
  while (step < max_steps && !done) {
    bool finite = true;
    for (double v : state)
      if (!std::isfinite(v)) finite = false;
    if (!finite) {
      dg.failed = true;
      break;
    }
    ActResult ar = act(policy, state, budget, rng.derived(0x616374ULL + 7919ULL * static_cast<std::uint64_t>(act_calls)));
    ++act_calls;
    for (const std::vector<double>& a : ar.chunk) {
      traj.steps.push_back(Step{state, a, -1});
      try {
        state = env_step(state, a, env);
      } catch (const std::invalid_argument&) {  // non-finite action
        traj.steps.pop_back();
        dg.failed = true;
        done = true;
        break;
      }
      traj.final_state = state;
      dg.gates.push_back(ar.gate);
      dg.active_sets.push_back(ar.active.indices);
      dg.mean_active += static_cast<double>(ar.active.indices.size());
      ++step;
      traj.progress = success_check(traj, task, env);
      if (traj.progress == 1.0) {
        done = true;
        break;
      }
      if (step >= max_steps) break;
      bool ok = true;
      for (double v : state)
        if (!std::isfinite(v)) ok = false;
      if (!ok) {
        dg.failed = true;
        done = true;
        break;
      }
    }
    if (dg.failed) break;
  }
  traj.progress = traj.steps.empty() ? 0.0 : success_check(traj, task, env);
  dg.progress = dg.failed ? 0.0 : traj.progress;
  dg.steps = static_cast<int>(traj.steps.size());
  if (!traj.steps.empty()) dg.mean_active /= static_cast<double>(traj.steps.size());
  return traj;
}

}  // namespace smp
