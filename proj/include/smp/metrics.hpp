// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smp/policy.hpp"
#include "smp/synthenv.hpp"
#include "smp/tensor.hpp"

namespace smp {

// Argmax with ties broken toward the lower index.
int gate_argmax(const std::vector<double>& g);

// Fraction of consecutive steps whose gate argmax changes; needs length >= 2.
double flip_rate(const std::vector<int>& argmax_seq);

// Mean length of maximal constant runs; needs length >= 1.
double mean_segment_length(const std::vector<int>& argmax_seq);

// Canonical angles (radians, ascending) between the column spans of two
// orthonormal matrices with the same ambient dimension: arccos of the
// singular values of B1^T B2, clamped into [0, 1]. Inputs with
// ||B^T B - I||_inf > 1e-6 are rejected.
std::vector<double> principal_angles(const Tensor& B1, const Tensor& B2);

// Deployment parameter accounting. Deployed components are the basis net,
// the state-only router, and the experts; the posterior and usage amortizers
// are training scaffolding and count in neither figure.
struct ParamAccounting {
  long long total = 0;       // basis + router + all experts
  long long shared = 0;      // basis + router
  double active = 0.0;       // shared + mean over steps of selected expert params
  double ratio = 0.0;        // active / total
};
ParamAccounting active_param_count(SkillPolicy& policy,
                                   const std::vector<std::vector<int>>& active_trace);

// Fraction of tr(sum_{i in S} m_i b_i b_i^T) falling inside span(G):
// sum_{i in S} m_i ||G^T b_i||^2 / sum_{i in S} m_i. B's selected columns
// must be unit length and G orthonormal; scale of the masses cancels.
double subspace_trace_fraction(const Tensor& B, const std::vector<double>& masses,
                               const std::vector<int>& S, const Tensor& G);

// Phase label per step, recovered by replaying the task program over the
// stored states: each step is labeled with the first phase whose predicate
// its state has not yet satisfied; steps after completion get phase count.
std::vector<int> phase_labels(const Trajectory& traj, const TaskSpec& spec,
                              const EnvParams& env);

// One logging event: a run id, a step or episode index, and named scalars.
struct MetricsRow {
  std::string run;
  long long index = 0;
  std::vector<std::pair<std::string, double>> values;
};

// Whole-file emitters (never append). Every row must carry exactly `names`
// in order; scalars are written as %.17g so write -> read -> write is
// byte-identical. CSV quoting follows RFC 4180.
void emit_csv(const std::vector<std::string>& names, const std::vector<MetricsRow>& rows,
              const std::string& path);
void emit_jsonl(const std::vector<std::string>& names, const std::vector<MetricsRow>& rows,
                const std::string& path);

// Reads a CSV produced by emit_csv; returns the value names and the rows.
std::pair<std::vector<std::string>, std::vector<MetricsRow>> read_csv(const std::string& path);

}  // namespace smp
