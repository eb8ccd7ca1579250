// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace smp::special {

// Digamma psi(x) and trigamma psi'(x) for x > 0.
//
// Both use the recurrence to shift the argument above 10 and then evaluate
// the asymptotic Bernoulli series; absolute error is below 1e-12 on the
// positive axis. Non-positive arguments return NaN (poles live there and
// nothing in this codebase evaluates them on purpose).
double digamma(double x);
double trigamma(double x);

}  // namespace smp::special
