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

#include <cmath>
#include <cstdio>
#include <sstream>

#include "model.hpp"
#include "neuron.hpp"
#include "rng.hpp"
#include "tensor.hpp"

namespace imls {

namespace {

int oracle_level(float v, double theta, int T) {
  const std::vector<int> train = if_multistep_fire(static_cast<double>(v), theta, T);
  int total = 0;
  for (int s : train) total += s;
  return total;
}

}  // namespace

CheckResult check_equivalence(int level_bias) {
  CheckResult r;
  std::ostringstream report;
  const double thetas[] = {0.5, 1.0, 1.3};
  const int windows[] = {1, 2, 4, 6, 8};

  // Dense grid: 303 values spanning [-2, 8], then the coarser 0.1-step grid.
  auto sweep = [&](auto&& values, const char* label) {
    int local_cases = 0, local_failures = 0;
    for (float v : values) {
      for (double theta : thetas) {
        for (int T : windows) {
          Tensor vt({1});
          vt.at(0) = v;
          SpikeTensor got = mls_fire(vt, theta, T);
          const int mls = static_cast<int>(got.levels[0]) + level_bias;
          const int want = oracle_level(v, theta, T);
          ++local_cases;
          if (mls != want) {
            ++local_failures;
            if (local_failures <= 5) {
              char buf[128];
              std::snprintf(buf, sizeof buf,
                            "  mismatch v=%.9g theta=%.2f T=%d: mls=%d iterative=%d\n",
                            static_cast<double>(v), theta, T, mls, want);
              report << buf;
            }
          }
        }
      }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s: %d cases, %d failures\n", label,
                  local_cases, local_failures);
    report << buf;
    r.cases += local_cases;
    r.failures += local_failures;
  };

  std::vector<float> dense;
  for (int i = 0; i < 303; ++i)
    dense.push_back(static_cast<float>(-2.0 + 10.0 * static_cast<double>(i) / 302.0));
  sweep(dense, "mls/if sweep (303-point grid)");

  std::vector<float> coarse;
  for (int i = 0; i <= 100; ++i)
    coarse.push_back(static_cast<float>(-2.0 + 0.1 * static_cast<double>(i)));
  sweep(coarse, "mls/if sweep (0.1-step grid)");

  // Spike-train expansion: sum over time must reproduce every level, with
  // the ones packed first.
  Pcg32 rng(11);
  int expansion_failures = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const int T = static_cast<int>(rng.next_int(1, 8));
    SpikeTensor s({rng.next_int(1, 6), rng.next_int(1, 6)}, T);
    for (auto& l : s.levels) l = static_cast<uint8_t>(rng.next_int(0, T));
    SpikeTrain train = expand_spike_train(s);
    for (int64_t i = 0; i < s.numel(); ++i) {
      int sum = 0;
      bool ones_then_zeros = true;
      bool seen_zero = false;
      for (int t = 0; t < T; ++t) {
        const int bit = train.planes[static_cast<size_t>(t)][static_cast<size_t>(i)];
        sum += bit;
        if (bit == 0) seen_zero = true;
        if (bit == 1 && seen_zero) ones_then_zeros = false;
      }
      ++r.cases;
      if (sum != static_cast<int>(s.levels[static_cast<size_t>(i)]) || !ones_then_zeros) {
        ++r.failures;
        ++expansion_failures;
      }
    }
  }
  report << "expansion identity: " << expansion_failures << " failures\n";

  // Event-driven matmul vs its dense oracle.
  int event_failures = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int T = static_cast<int>(rng.next_int(1, 8));
    const int64_t n = rng.next_int(1, 8), d = rng.next_int(1, 8), m = rng.next_int(1, 8);
    SpikeTensor s({n, d}, T);
    int64_t spike_total = 0;
    for (auto& l : s.levels) {
      l = static_cast<uint8_t>(rng.next_int(0, T));
      spike_total += l;
    }
    Tensor w = Tensor::normal(rng, {d, m});
    EventMatmulResult got = spike_matmul(s, w);
    Tensor dense = matmul(s.to_tensor(), w);
    const double diff = relative_diff(got.out, dense);
    ++r.cases;
    if (diff > 1e-5 || got.events != spike_total * m) {
      ++r.failures;
      ++event_failures;
    }
  }
  report << "event matmul oracle: 200 trials, " << event_failures << " failures\n";

  r.ok = r.failures == 0;
  r.report = report.str();
  return r;
}

CheckResult check_reparam(uint64_t seed, int trials) {
  CheckResult r;
  std::ostringstream report;
  if (trials == 0) {
    r.report = "reparam check: 0 trials requested, nothing to do\n";
    return r;
  }
  Pcg32 rng(seed);

  // Factored vs fused logits.
  double worst_logits = 0.0;
  for (int trial = 0; trial < trials; ++trial) {
    const int heads = rng.next_int(0, 1) ? 4 : 2;
    const int64_t d = heads * rng.next_int(2, 6);
    const int64_t n = rng.next_int(2, 10);
    const int T = 4;
    AttentionParams p;
    p.heads = heads;
    p.w_q = Tensor::normal(rng, {d, d}, 0.0f, 0.3f);
    p.w_k = Tensor::normal(rng, {d, d}, 0.0f, 0.3f);
    p.w_v = Tensor::normal(rng, {d, d}, 0.0f, 0.3f);
    p.w_out = Tensor::normal(rng, {d, d}, 0.0f, 0.3f);
    SpikeTensor xs({n, d}, T);
    for (auto& l : xs.levels) l = static_cast<uint8_t>(rng.next_int(0, T));
    FusedAttentionParams fused = rep_fuse(p);
    Tensor a_f = attn_logits(xs, p, nullptr, LogitMode::kFactored);
    Tensor a_u = attn_logits(xs, p, &fused, LogitMode::kFused);
    const double diff = relative_diff(a_u, a_f);
    worst_logits = std::max(worst_logits, diff);
    ++r.cases;
    if (diff > 1e-5) ++r.failures;
  }
  char buf[128];
  std::snprintf(buf, sizeof buf, "logits factored vs fused: %d trials, worst %.3g\n",
                trials, worst_logits);
  report << buf;

  // End-to-end model equivalence across reparameterize().
  const int model_trials = std::max(1, trials / 2);
  double worst_model = 0.0;
  for (int trial = 0; trial < model_trials; ++trial) {
    ModelConfig cfg;
    cfg.num_layers = 2;
    cfg.d = 16;
    cfg.heads = 4;
    cfg.d_ff = 32;
    cfg.num_classes = 4;
    cfg.input_dim = 8;
    cfg.neuron.T = 4;
    cfg.variant = trial % 2 ? AttentionVariant::kHdRepssaL : AttentionVariant::kHdRepssaS;
    Model m = Model::init(cfg, seed + static_cast<uint64_t>(trial) * 97 + 1);
    const int64_t len = rng.next_int(5, 12);
    Tensor features = Tensor::normal(rng, {len, cfg.input_dim});
    Tensor before = m.forward(features, len);
    Model fused_model = m;
    fused_model.reparameterize();
    Tensor after = fused_model.forward(features, len);
    const double diff = relative_diff(after, before);
    worst_model = std::max(worst_model, diff);
    ++r.cases;
    if (diff > 1e-4) ++r.failures;
    if (trial == 0) {
      // Double fusion must be rejected.
      ++r.cases;
      bool guarded = false;
      try {
        fused_model.reparameterize();
      } catch (const StateError&) {
        guarded = true;
      }
      if (!guarded) {
        ++r.failures;
        report << "  double fusion was not rejected\n";
      }
    }
  }
  std::snprintf(buf, sizeof buf, "end-to-end pre/post fusion: %d models, worst %.3g\n",
                model_trials, worst_model);
  report << buf;

  r.ok = r.failures == 0;
  r.report = report.str();
  return r;
}

}  // namespace imls
