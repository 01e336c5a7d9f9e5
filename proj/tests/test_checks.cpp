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

#include "checks.hpp"
#include "doctest.h"

using namespace imls;

TEST_CASE("equivalence sweep passes on the real implementation") {
  CheckResult r = check_equivalence();
  CHECK(r.ok);
  CHECK(r.failures == 0);
  CHECK(r.cases >= 4545);
}

TEST_CASE("an injected off-by-one is caught and localized") {
  // Mutation check: the sweep must detect a +1 bias in every firing level
  // and name an offending (v, theta, T) triple.
  CheckResult r = check_equivalence(/*level_bias=*/1);
  CHECK_FALSE(r.ok);
  CHECK(r.failures > 0);
  CHECK(r.report.find("mismatch v=") != std::string::npos);
  CHECK(r.report.find("theta=") != std::string::npos);
  CHECK(r.report.find("T=") != std::string::npos);
}

TEST_CASE("reparam sweep is clean and seed-deterministic") {
  CheckResult a = check_reparam(17, 16);
  CheckResult b = check_reparam(17, 16);
  CHECK(a.ok);
  CHECK(a.report == b.report);
  CheckResult zero = check_reparam(17, 0);
  CHECK(zero.ok);
  CHECK(zero.cases == 0);
}
