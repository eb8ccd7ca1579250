// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "smp/rng.hpp"
#include "smp/tensor.hpp"

namespace smp::nn {

// Named handle to a parameter tensor; the unit of optimization and
// checkpointing across the whole system.
using ParamRefs = std::vector<std::pair<std::string, Tensor*>>;

// Affine layer y = xW + b with W stored [in, out]. Inputs are row-batched:
// x is [N, in] and the output [N, out].
struct Linear {
  Tensor W;
  Tensor b;

  static Linear init(int in, int out, Rng& rng);  // Glorot-uniform W, zero b

  Tensor forward(const Tensor& x) const;

  // Copy whose parameters are leaf views on `tape`. Cheap: buffers shared.
  Linear watched(Tape& tape) const;
  void collect(const std::string& prefix, ParamRefs& out);
  int param_count() const { return W.numel() + b.numel(); }
};

// Plain MLP with softplus between layers and a linear head.
struct MLP {
  std::vector<Linear> layers;

  // dims = {in, hidden..., out}; at least one layer.
  static MLP init(const std::vector<int>& dims, Rng& rng);

  Tensor forward(const Tensor& x) const;

  MLP watched(Tape& tape) const;
  void collect(const std::string& prefix, ParamRefs& out);
  int param_count() const;
};

}  // namespace smp::nn
