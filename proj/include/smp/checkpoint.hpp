// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "smp/optim.hpp"
#include "smp/policy.hpp"
#include "smp/rng.hpp"

namespace smp {

// Resumable training state: the policy, the optimizer moments and step
// counter, and the training rng. Round-trips through disk bitwise.
struct Checkpoint {
  SkillPolicy policy;
  AdamW opt;
  Rng rng{0};
};

// Format: a text manifest (key=value lines; parameters key-sorted with shape
// and blob offset) terminated by a blank line, then one raw little-endian
// 64-bit float blob holding parameters and optimizer moments. Scalar floats
// in the manifest are hexfloats, so save -> load -> save is byte-identical.
// Non-const: parameter collection traffics in mutable tensor handles.
void save_checkpoint(Checkpoint& ck, const std::string& path);

// Rejects unknown magic, a mismatched format version (reporting both
// numbers), manifest/blob length disagreement, and truncation.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace smp
