// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "smp/rng.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Planar bimanual point-mass world. State layout (d_s = 22):
//   [0..1]   left arm position
//   [2..3]   right arm position
//   [4]      left gripper in [0,1] (closed when > 0.5)
//   [5]      right gripper
//   [6..7]   left object position
//   [8..9]   right object position
//   [10..11] left target position
//   [12..13] right target position
//   [14..21] task one-hot over the 8-task suite
// Action layout (d = 6): left dx,dy; right dx,dy; gripper deltas (rate-limited).
inline constexpr int kNumTasks = 8;
inline constexpr int kStateDim = 14 + kNumTasks;
inline constexpr int kActionDim = 6;

struct EnvParams {
  double gain = 0.3;          // proportional controller gain
  double grasp_radius = 0.05; // object follows a closed gripper inside this
  double tol = 0.02;          // position tolerance for phase completion
  double grip_rate = 0.5;     // max gripper change per step
  double grip_close = 0.5;    // closed threshold (strictly greater)
  int cap = 120;              // episode length cap
  double layout_lo = -0.8;    // randomized layout bounds
  double layout_hi = 0.8;
};

// Where a phase sends an arm; resolved against the current state.
enum class Target { None = 0, ObjL, ObjR, TargetL, TargetR, Meet };

// One phase of a task program. Termination: every commanded arm subject
// (the arm, or the object it carries when carry_* is set) within tol of its
// goal, and every commanded gripper at its extreme (>= 0.9 closed, <= 0.1
// open). The active action subspace is derived from the commands.
struct PhaseSpec {
  std::string name;
  Target goal_l = Target::None;
  Target goal_r = Target::None;
  bool carry_l = false;  // termination tracks the object held by the left arm
  bool carry_r = false;
  int grip_l = -1;  // -1 hold, 0 open, 1 close
  int grip_r = -1;

  std::vector<int> subspace() const;  // sorted active action coordinates
};

struct TaskSpec {
  int id = -1;
  std::string name;
  std::vector<PhaseSpec> phases;
  int cap = 120;
};

// The fixed 8-task suite: 6 training tasks then 2 recombination tasks.
const std::vector<TaskSpec>& task_suite();
const TaskSpec& task_by_id(int id);
// Training tasks only (ids 0..5).
std::vector<int> train_task_ids();
std::vector<int> recombination_task_ids();

struct Step {
  std::vector<double> state;   // before the action
  std::vector<double> action;
  int phase = -1;              // index into the task's phase program; -1 unknown
};

struct Trajectory {
  int task_id = -1;
  std::vector<Step> steps;
  std::vector<double> final_state;  // after the last action
  double progress = 0.0;            // success_check score; 1.0 = success
};

// Point-mass integrator: arms translate (positions clipped to [-1,1]^2),
// grippers move by the rate-limited command, then each object snaps to the
// new position of a closed gripper whose previous arm position was within
// grasp_radius (left gripper first). Zero action is an exact fixed point.
// Rejects NaN actions and wrong dimensions.
std::vector<double> env_step(const std::vector<double>& state, const std::vector<double>& action,
                             const EnvParams& params);

// Proportional controller for the current phase. Advances phase_idx past
// every already-satisfied predicate first; returns the action (exactly zero
// outside the acting phase's subspace). phase_idx == phases.size() means done
// and yields a zero action.
std::vector<double> scripted_expert(const std::vector<double>& state, const TaskSpec& spec,
                                    const EnvParams& params, int& phase_idx);

// Fraction of the phase program completed by the trajectory's state sequence
// (initial states plus final_state), phases checked in order.
double success_check(const Trajectory& traj, const TaskSpec& spec, const EnvParams& params);

// Orthonormal coordinate basis [kActionDim, rank] of the phase's declared
// subspace. Overloads by phase index and by phase name; unknown -> rejected.
Tensor ground_truth_subspace(const TaskSpec& spec, int phase_idx);
Tensor ground_truth_subspace(const TaskSpec& spec, const std::string& phase_name);

// Initial state with home arms, open grippers, and a seeded random layout.
std::vector<double> initial_state(const TaskSpec& spec, const EnvParams& params, Rng& rng);

// One scripted episode on a fresh layout drawn from `layout_rng`.
Trajectory run_scripted_episode(const TaskSpec& spec, const EnvParams& params, Rng& layout_rng);

// n successful scripted demos for each listed task. Episode (task t, index e,
// retry r) draws its layout from seed-derived stream (t, e, r); failures
// retry up to 10 fresh layouts, then throw. Pure function of its arguments.
std::vector<Trajectory> gen_demos(const std::vector<int>& task_ids, int n_per_task,
                                  std::uint64_t seed, const EnvParams& params);

}  // namespace smp
