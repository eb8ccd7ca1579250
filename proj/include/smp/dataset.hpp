// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "smp/synthenv.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Demonstration corpus plus the generation recipe that produced it.
struct Dataset {
  int version = 1;
  int d_s = kStateDim;
  int d = kActionDim;
  std::uint64_t seed = 0;
  int n_per_task = 0;
  std::vector<int> task_ids;
  std::vector<Trajectory> trajs;
};

Dataset make_dataset(const std::vector<int>& task_ids, int n_per_task, std::uint64_t seed,
                     const EnvParams& params);

// Single-file format: a text manifest ("smpdata" magic, version, dims, seed,
// counts, task ids; one key=value per line, blank-line terminated) followed
// by binary trajectory records (task id, step count, progress, per-step
// state/action/phase, final state), all integers and floats little-endian
// 64-bit. Loading verifies magic and version (mismatch reported with both
// numbers) and rejects truncated files.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Stacked per-trajectory matrices: states [T, d_s] and actions [T, d].
// Rejects empty trajectories.
std::pair<Tensor, Tensor> traj_matrices(const Trajectory& traj);

}  // namespace smp
