// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "smp/policy.hpp"
#include "smp/rng.hpp"
#include "smp/synthenv.hpp"

namespace smp {

// Expert-activation budget. The combined mode stops when either bound is
// reached; the pure modes serve the sweep ablations. linear_mass swaps the
// squared-gate mass for the raw gate (ablation; squared is the default).
struct ActivationBudget {
  enum class Mode { TopK, Coverage, Both };
  int k = 4;
  double tau_m = 0.95;
  Mode mode = Mode::Both;
  bool linear_mass = false;

  void validate(int K) const;  // throws std::invalid_argument
};

// Greedy activation result. indices are in selection order (descending mass,
// ties to the lower index); masses is index-aligned over all K experts.
struct ActiveSet {
  std::vector<int> indices;
  double covered = 0.0;  // selected fraction of total mass
  std::vector<double> masses;
};

// Mean gate of the state-only router at s.
std::vector<double> router_mean(const SkillPolicy& policy, const std::vector<double>& s);

// Heap-based greedy selection in descending mass; the minimum-cardinality set
// reaching the coverage bound (the objective is modular, so the greedy prefix
// is exactly optimal). Guarantees a nonempty set via top-1 fallback. When
// `comparisons` is given it receives the comparison count, which is bounded
// by 3K + 2|S|(log2 K + 2).
ActiveSet select_active(const std::vector<double>& g_bar, const ActivationBudget& budget,
                        long long* comparisons = nullptr);

// One policy step: route, select, denoise the active coefficients, decode.
// chunk holds H actions from a single routing decision; action is chunk[0].
struct ActResult {
  std::vector<double> action;
  std::vector<std::vector<double>> chunk;
  ActiveSet active;
  std::vector<double> gate;
  std::vector<double> z;  // denoised coefficients of chunk[0]
};
ActResult act(const SkillPolicy& policy, const std::vector<double>& s,
              const ActivationBudget& budget, const Rng& stream);

struct RolloutDiagnostics {
  std::vector<std::vector<double>> gates;      // router mean per step
  std::vector<std::vector<int>> active_sets;   // selected experts per step
  double progress = 0.0;
  bool failed = false;  // environment produced a non-finite state
  int steps = 0;
  double mean_active = 0.0;
};

// Closed loop: act / env_step until the phase program completes or max_steps.
// The layout and every denoising stream derive from `rng`, so a rollout is a
// pure function of (policy, task, budget, max_steps, rng seed).
Trajectory rollout(const SkillPolicy& policy, const TaskSpec& task, const EnvParams& env,
                   const ActivationBudget& budget, int max_steps, Rng& rng,
                   RolloutDiagnostics* diag = nullptr);

}  // namespace smp
