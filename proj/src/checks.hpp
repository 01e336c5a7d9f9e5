// Copyright 2026 The IMLS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Self-check sweeps shared by the CLI and the test suites, so users and CI
// run the same code paths.

#ifndef IMLS_CHECKS_HPP
#define IMLS_CHECKS_HPP

#include <cstdint>
#include <string>

namespace imls {

struct CheckResult {
  bool ok = true;
  int cases = 0;
  int failures = 0;
  std::string report;
};

// Multi-level firing vs the iterative integrate-and-fire oracle over the
// full (v, theta, T) grid, the spike-train expansion identity, and the
// event-driven matmul against its dense oracle. level_bias shifts every
// computed spike level and exists so tests can prove the sweep catches an
// off-by-one.
CheckResult check_equivalence(int level_bias = 0);

// Factored vs fused attention logits and end-to-end model equivalence after
// reparameterization, plus the double-fusion guard.
CheckResult check_reparam(uint64_t seed, int trials);

}  // namespace imls

#endif  // IMLS_CHECKS_HPP
