// SPDX-License-Identifier: Apache-2.0
#include "smp/synthenv.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smp {

namespace {

// State coordinate names; see the layout comment in the header.
enum : int { LX = 0, LY, RX, RY, GL, GR, OLX, OLY, ORX, ORY, TLX, TLY, TRX, TRY, OH };

double dist2d(double ax, double ay, double bx, double by) {
  return std::hypot(ax - bx, ay - by);
}

struct Pos {
  double x = 0.0, y = 0.0;
};

Pos resolve(Target t, const std::vector<double>& s) {
  switch (t) {
    case Target::ObjL: return {s[OLX], s[OLY]};
    case Target::ObjR: return {s[ORX], s[ORY]};
    case Target::TargetL: return {s[TLX], s[TLY]};
    case Target::TargetR: return {s[TRX], s[TRY]};
    case Target::Meet: return {0.5 * (s[TLX] + s[TRX]), 0.5 * (s[TLY] + s[TRY])};
    case Target::None: break;
  }
  throw std::invalid_argument("resolve: no goal declared");
}

// Object currently held by an arm, honoring the left gripper's priority.
// Returns false when the arm holds nothing.
bool carried_pos(const std::vector<double>& s, bool left_arm, const EnvParams& P, Pos& out) {
  const double ax = left_arm ? s[LX] : s[RX];
  const double ay = left_arm ? s[LY] : s[RY];
  const double grip = left_arm ? s[GL] : s[GR];
  if (!(grip > P.grip_close)) return false;
  auto held_by_left = [&](double ox, double oy) {
    return s[GL] > P.grip_close && dist2d(ox, oy, s[LX], s[LY]) <= P.grasp_radius;
  };
  auto reach_this = [&](double ox, double oy) {
    if (dist2d(ox, oy, ax, ay) > P.grasp_radius) return false;
    if (!left_arm && held_by_left(ox, oy)) return false;  // left wins contested grabs
    return true;
  };
  // Own-side object first, then the other one.
  const double firsts[2][2] = {{s[OLX], s[OLY]}, {s[ORX], s[ORY]}};
  int order[2] = {left_arm ? 0 : 1, left_arm ? 1 : 0};
  for (int k = 0; k < 2; ++k) {
    double ox = firsts[order[k]][0], oy = firsts[order[k]][1];
    if (reach_this(ox, oy)) {
      out = {ox, oy};
      return true;
    }
  }
  return false;
}

// Position the phase steers and checks for one arm: the held object when
// carry is set, else the arm itself.
bool subject_pos(const std::vector<double>& s, bool left_arm, bool carry, const EnvParams& P,
                 Pos& out) {
  if (!carry) {
    out = left_arm ? Pos{s[LX], s[LY]} : Pos{s[RX], s[RY]};
    return true;
  }
  return carried_pos(s, left_arm, P, out);
}

bool phase_satisfied(const PhaseSpec& ph, const std::vector<double>& s, const EnvParams& P) {
  if (ph.goal_l != Target::None) {
    Pos subj;
    if (!subject_pos(s, true, ph.carry_l, P, subj)) return false;
    Pos g = resolve(ph.goal_l, s);
    if (dist2d(subj.x, subj.y, g.x, g.y) > P.tol) return false;
  }
  if (ph.goal_r != Target::None) {
    Pos subj;
    if (!subject_pos(s, false, ph.carry_r, P, subj)) return false;
    Pos g = resolve(ph.goal_r, s);
    if (dist2d(subj.x, subj.y, g.x, g.y) > P.tol) return false;
  }
  if (ph.grip_l == 1 && !(s[GL] >= 0.9)) return false;
  if (ph.grip_l == 0 && !(s[GL] <= 0.1)) return false;
  if (ph.grip_r == 1 && !(s[GR] >= 0.9)) return false;
  if (ph.grip_r == 0 && !(s[GR] <= 0.1)) return false;
  return true;
}

std::vector<double> phase_action(const PhaseSpec& ph, const std::vector<double>& s,
                                 const EnvParams& P) {
  std::vector<double> a(kActionDim, 0.0);
  if (ph.goal_l != Target::None) {
    Pos subj;
    Pos g = resolve(ph.goal_l, s);
    if (subject_pos(s, true, ph.carry_l, P, subj)) {
      a[LX] = P.gain * (g.x - subj.x);
      a[LY] = P.gain * (g.y - subj.y);
    }
  }
  if (ph.goal_r != Target::None) {
    Pos subj;
    Pos g = resolve(ph.goal_r, s);
    if (subject_pos(s, false, ph.carry_r, P, subj)) {
      a[RX] = P.gain * (g.x - subj.x);
      a[RY] = P.gain * (g.y - subj.y);
    }
  }
  if (ph.grip_l == 1) a[GL] = P.grip_rate;
  if (ph.grip_l == 0) a[GL] = -P.grip_rate;
  if (ph.grip_r == 1) a[GR] = P.grip_rate;
  if (ph.grip_r == 0) a[GR] = -P.grip_rate;
  return a;
}

}  // namespace

std::vector<int> PhaseSpec::subspace() const {
  std::vector<int> out;
  if (goal_l != Target::None) {
    out.push_back(LX);
    out.push_back(LY);
  }
  if (goal_r != Target::None) {
    out.push_back(RX);
    out.push_back(RY);
  }
  if (grip_l >= 0) out.push_back(GL);
  if (grip_r >= 0) out.push_back(GR);
  return out;  // construction order is already sorted
}

const std::vector<TaskSpec>& task_suite() {
  static const std::vector<TaskSpec> suite = [] {
    auto phase = [](std::string name) {
      PhaseSpec p;
      p.name = std::move(name);
      return p;
    };
    std::vector<TaskSpec> tasks;

    {
      TaskSpec t;
      t.id = 0;
      t.name = "reach-left";
      PhaseSpec reach = phase("reach");
      reach.goal_l = Target::TargetL;
      t.phases = {reach};
      tasks.push_back(std::move(t));
    }
    {
      TaskSpec t;
      t.id = 1;
      t.name = "reach-right";
      PhaseSpec reach = phase("reach");
      reach.goal_r = Target::TargetR;
      t.phases = {reach};
      tasks.push_back(std::move(t));
    }
    {
      TaskSpec t;
      t.id = 2;
      t.name = "pick-left";
      PhaseSpec reach = phase("reach");
      reach.goal_l = Target::ObjL;
      PhaseSpec grasp = phase("grasp");
      grasp.grip_l = 1;
      PhaseSpec move = phase("move");
      move.goal_l = Target::TargetL;
      move.carry_l = true;
      PhaseSpec release = phase("release");
      release.grip_l = 0;
      t.phases = {reach, grasp, move, release};
      tasks.push_back(std::move(t));
    }
    {
      TaskSpec t;
      t.id = 3;
      t.name = "pick-right";
      PhaseSpec reach = phase("reach");
      reach.goal_r = Target::ObjR;
      PhaseSpec grasp = phase("grasp");
      grasp.grip_r = 1;
      PhaseSpec move = phase("move");
      move.goal_r = Target::TargetR;
      move.carry_r = true;
      PhaseSpec release = phase("release");
      release.grip_r = 0;
      t.phases = {reach, grasp, move, release};
      tasks.push_back(std::move(t));
    }
    {
      TaskSpec t;
      t.id = 4;
      t.name = "handover";
      PhaseSpec reach = phase("reach");
      reach.goal_l = Target::ObjL;
      reach.goal_r = Target::Meet;
      PhaseSpec graspl = phase("grasp-l");
      graspl.grip_l = 1;
      PhaseSpec movel = phase("move-l");
      movel.goal_l = Target::Meet;
      movel.carry_l = true;
      PhaseSpec handoff = phase("handoff");
      handoff.grip_l = 0;
      handoff.grip_r = 1;
      PhaseSpec mover = phase("move-r");
      mover.goal_r = Target::TargetR;
      mover.carry_r = true;
      PhaseSpec release = phase("release-r");
      release.grip_r = 0;
      t.phases = {reach, graspl, movel, handoff, mover, release};
      tasks.push_back(std::move(t));
    }
    {
      TaskSpec t;
      t.id = 5;
      t.name = "pick-place-both";
      PhaseSpec reach = phase("reach");
      reach.goal_l = Target::ObjL;
      reach.goal_r = Target::ObjR;
      PhaseSpec grasp = phase("grasp");
      grasp.grip_l = 1;
      grasp.grip_r = 1;
      PhaseSpec move = phase("move");
      move.goal_l = Target::TargetL;
      move.goal_r = Target::TargetR;
      move.carry_l = true;
      move.carry_r = true;
      PhaseSpec release = phase("release");
      release.grip_l = 0;
      release.grip_r = 0;
      t.phases = {reach, grasp, move, release};
      tasks.push_back(std::move(t));
    }
    {
      // Recombination: the handover program mirrored right-to-left.
      TaskSpec t;
      t.id = 6;
      t.name = "recomb-handover-rl";
      PhaseSpec reach = phase("reach");
      reach.goal_r = Target::ObjR;
      reach.goal_l = Target::Meet;
      PhaseSpec graspr = phase("grasp-r");
      graspr.grip_r = 1;
      PhaseSpec mover = phase("move-r");
      mover.goal_r = Target::Meet;
      mover.carry_r = true;
      PhaseSpec handoff = phase("handoff");
      handoff.grip_r = 0;
      handoff.grip_l = 1;
      PhaseSpec movel = phase("move-l");
      movel.goal_l = Target::TargetL;
      movel.carry_l = true;
      PhaseSpec release = phase("release-l");
      release.grip_l = 0;
      t.phases = {reach, graspr, mover, handoff, movel, release};
      tasks.push_back(std::move(t));
    }
    {
      // Recombination: both arms pick, then deliver to the crossed targets.
      TaskSpec t;
      t.id = 7;
      t.name = "recomb-swap";
      PhaseSpec reach = phase("reach");
      reach.goal_l = Target::ObjL;
      reach.goal_r = Target::ObjR;
      PhaseSpec grasp = phase("grasp");
      grasp.grip_l = 1;
      grasp.grip_r = 1;
      PhaseSpec move = phase("move-cross");
      move.goal_l = Target::TargetR;
      move.goal_r = Target::TargetL;
      move.carry_l = true;
      move.carry_r = true;
      PhaseSpec release = phase("release");
      release.grip_l = 0;
      release.grip_r = 0;
      t.phases = {reach, grasp, move, release};
      tasks.push_back(std::move(t));
    }
    return tasks;
  }();
  return suite;
}

const TaskSpec& task_by_id(int id) {
  const auto& suite = task_suite();
  if (id < 0 || id >= static_cast<int>(suite.size())) {
    throw std::invalid_argument("task_by_id: unknown task id " + std::to_string(id));
  }
  return suite[static_cast<std::size_t>(id)];
}

std::vector<int> train_task_ids() { return {0, 1, 2, 3, 4, 5}; }
std::vector<int> recombination_task_ids() { return {6, 7}; }

std::vector<double> env_step(const std::vector<double>& state, const std::vector<double>& action,
                             const EnvParams& P) {
  if (static_cast<int>(state.size()) != kStateDim) {
    throw std::invalid_argument("env_step: state size " + std::to_string(state.size()) +
                                " != " + std::to_string(kStateDim));
  }
  if (static_cast<int>(action.size()) != kActionDim) {
    throw std::invalid_argument("env_step: action size " + std::to_string(action.size()) +
                                " != " + std::to_string(kActionDim));
  }
  for (double a : action) {
    if (!std::isfinite(a)) throw std::invalid_argument("env_step: non-finite action component");
  }

  std::vector<double> next = state;
  for (int i = LX; i <= RY; ++i) {
    next[i] = std::clamp(state[i] + action[i], -1.0, 1.0);
  }
  next[GL] = std::clamp(state[GL] + std::clamp(action[GL], -P.grip_rate, P.grip_rate), 0.0, 1.0);
  next[GR] = std::clamp(state[GR] + std::clamp(action[GR], -P.grip_rate, P.grip_rate), 0.0, 1.0);

  // Objects ride a closed gripper by the arm's displacement; the attachment
  // test uses pre-step gripper and positions, so a zero action moves nothing.
  for (int base : {OLX, ORX}) {
    const double ox = state[base], oy = state[base + 1];
    if (state[GL] > P.grip_close && dist2d(ox, oy, state[LX], state[LY]) <= P.grasp_radius) {
      next[base] = ox + (next[LX] - state[LX]);
      next[base + 1] = oy + (next[LY] - state[LY]);
    } else if (state[GR] > P.grip_close &&
               dist2d(ox, oy, state[RX], state[RY]) <= P.grasp_radius) {
      next[base] = ox + (next[RX] - state[RX]);
      next[base + 1] = oy + (next[RY] - state[RY]);
    }
  }
  return next;
}

std::vector<double> scripted_expert(const std::vector<double>& state, const TaskSpec& spec,
                                    const EnvParams& P, int& phase_idx) {
  const int n = static_cast<int>(spec.phases.size());
  while (phase_idx < n && phase_satisfied(spec.phases[static_cast<std::size_t>(phase_idx)],
                                          state, P)) {
    ++phase_idx;
  }
  if (phase_idx >= n) return std::vector<double>(kActionDim, 0.0);
  return phase_action(spec.phases[static_cast<std::size_t>(phase_idx)], state, P);
}

double success_check(const Trajectory& traj, const TaskSpec& spec, const EnvParams& P) {
  const int n = static_cast<int>(spec.phases.size());
  if (n == 0) return 1.0;
  int done = 0;
  auto visit = [&](const std::vector<double>& s) {
    while (done < n && phase_satisfied(spec.phases[static_cast<std::size_t>(done)], s, P)) {
      ++done;
    }
  };
  for (const Step& st : traj.steps) visit(st.state);
  if (!traj.final_state.empty()) visit(traj.final_state);
  return static_cast<double>(done) / n;
}

Tensor ground_truth_subspace(const TaskSpec& spec, int phase_idx) {
  if (phase_idx < 0 || phase_idx >= static_cast<int>(spec.phases.size())) {
    throw std::invalid_argument("ground_truth_subspace: phase index " +
                                std::to_string(phase_idx) + " outside task '" + spec.name + "'");
  }
  std::vector<int> coords = spec.phases[static_cast<std::size_t>(phase_idx)].subspace();
  const int r = static_cast<int>(coords.size());
  std::vector<double> v(static_cast<std::size_t>(kActionDim) * r, 0.0);
  for (int j = 0; j < r; ++j) v[static_cast<std::size_t>(coords[j]) * r + j] = 1.0;
  return Tensor({kActionDim, r}, std::move(v));
}

Tensor ground_truth_subspace(const TaskSpec& spec, const std::string& phase_name) {
  for (std::size_t i = 0; i < spec.phases.size(); ++i) {
    if (spec.phases[i].name == phase_name) {
      return ground_truth_subspace(spec, static_cast<int>(i));
    }
  }
  throw std::invalid_argument("ground_truth_subspace: unknown phase '" + phase_name +
                              "' in task '" + spec.name + "'");
}

std::vector<double> initial_state(const TaskSpec& spec, const EnvParams& P, Rng& rng) {
  if (spec.id < 0 || spec.id >= kNumTasks) {
    throw std::invalid_argument("initial_state: task id " + std::to_string(spec.id) +
                                " outside the suite");
  }
  std::vector<double> s(kStateDim, 0.0);
  s[LX] = -0.5;
  s[LY] = 0.0;
  s[RX] = 0.5;
  s[RY] = 0.0;
  // Layout draw order: objL, objR, targetL, targetR (x before y).
  for (int i : {OLX, OLY, ORX, ORY, TLX, TLY, TRX, TRY}) {
    s[i] = rng.uniform(P.layout_lo, P.layout_hi);
  }
  s[OH + spec.id] = 1.0;
  return s;
}

Trajectory run_scripted_episode(const TaskSpec& spec, const EnvParams& P, Rng& layout_rng) {
  Trajectory tr;
  tr.task_id = spec.id;
  std::vector<double> s = initial_state(spec, P, layout_rng);
  int phase = 0;
  const int n = static_cast<int>(spec.phases.size());
  for (int t = 0; t < spec.cap; ++t) {
    std::vector<double> a = scripted_expert(s, spec, P, phase);
    if (phase >= n) break;
    tr.steps.push_back({s, a, phase});
    s = env_step(s, a, P);
  }
  tr.final_state = std::move(s);
  tr.progress = success_check(tr, spec, P);
  return tr;
}

std::vector<Trajectory> gen_demos(const std::vector<int>& task_ids, int n_per_task,
                                  std::uint64_t seed, const EnvParams& P) {
  if (n_per_task < 1) {
    throw std::invalid_argument("gen_demos: n_per_task must be >= 1, got " +
                                std::to_string(n_per_task));
  }
  Rng master(seed);
  std::vector<Trajectory> out;
  out.reserve(task_ids.size() * static_cast<std::size_t>(n_per_task));
  for (int ti : task_ids) {
    const TaskSpec& spec = task_by_id(ti);
    for (int e = 0; e < n_per_task; ++e) {
      bool ok = false;
      for (int retry = 0; retry <= 10 && !ok; ++retry) {
        std::uint64_t stream = (static_cast<std::uint64_t>(ti) << 40) |
                               (static_cast<std::uint64_t>(e) << 8) |
                               static_cast<std::uint64_t>(retry);
        Rng erng = master.derived(stream);
        Trajectory tr = run_scripted_episode(spec, P, erng);
        if (tr.progress == 1.0) {
          out.push_back(std::move(tr));
          ok = true;
        }
      }
      if (!ok) {
        throw std::runtime_error("gen_demos: task '" + spec.name + "' episode " +
                                 std::to_string(e) + " failed after 10 retries");
      }
    }
  }
  return out;
}

}  // namespace smp
