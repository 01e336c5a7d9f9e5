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

#include <numeric>

#include "doctest.h"
#include "neuron.hpp"
#include "rng.hpp"

using namespace imls;

namespace {

int level_of(const Tensor& v, double theta, int T) {
  return static_cast<int>(mls_fire(v, theta, T).levels[0]);
}

Tensor scalar(float v) { return Tensor({1}, {v}); }

int sum_train(double v, double theta, int T) {
  auto train = if_multistep_fire(v, theta, T);
  return std::accumulate(train.begin(), train.end(), 0);
}

}  // namespace

TEST_CASE("lif_step integrates, fires inclusively at threshold, soft-resets") {
  NeuronConfig cfg;
  cfg.theta = 1.0f;
  cfg.beta = 1.0f;
  MembraneState st{Tensor({1})};
  Tensor spikes = lif_step(st, scalar(1.0f), cfg);
  CHECK(spikes.at(0) == 1.0f);  // v == theta fires
  CHECK(st.v.at(0) == 0.0f);

  cfg.beta = 0.5f;
  MembraneState st2{Tensor({1})};
  Tensor s1 = lif_step(st2, scalar(0.4f), cfg);
  Tensor s2 = lif_step(st2, scalar(0.4f), cfg);
  CHECK(s1.at(0) == 0.0f);
  CHECK(s2.at(0) == 0.0f);
  CHECK(st2.v.at(0) == doctest::Approx(0.6).epsilon(1e-6));

  MembraneState st3{Tensor({1})};
  Tensor s3 = lif_step(st3, scalar(0.0f), cfg);
  CHECK(s3.at(0) == 0.0f);
  CHECK(st3.v.at(0) == 0.0f);
}

TEST_CASE("if_multistep_fire hand traces") {
  CHECK(if_multistep_fire(2.5, 1.0, 4) == std::vector<int>{1, 1, 0, 0});
  CHECK(if_multistep_fire(-0.3, 1.0, 4) == std::vector<int>{0, 0, 0, 0});
  CHECK(if_multistep_fire(5.7, 1.0, 4) == std::vector<int>{1, 1, 1, 1});
}

TEST_CASE("mls_fire matches hand values and the boundary fires") {
  CHECK(level_of(scalar(2.5f), 1.0, 4) == 2);
  CHECK(level_of(scalar(-0.3f), 1.0, 4) == 0);
  CHECK(level_of(scalar(5.7f), 1.0, 4) == 4);
  CHECK(level_of(scalar(1.0f), 1.0, 4) == 1);
}

TEST_CASE("mls equals the iterative oracle over the sweep grid") {
  // The same grid the acceptance suite uses, asserted exactly.
  for (double theta : {0.5, 1.0, 1.3}) {
    for (int T : {1, 2, 4, 6, 8}) {
      for (int i = 0; i <= 100; ++i) {
        const float v = static_cast<float>(-2.0 + 0.1 * i);
        CHECK(level_of(scalar(v), theta, T) ==
              sum_train(static_cast<double>(v), theta, T));
      }
    }
  }
}

TEST_CASE("mls_fire is monotone in v and antitone in theta") {
  Pcg32 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const float v1 = static_cast<float>(rng.next_uniform() * 10.0 - 2.0);
    const float v2 = v1 + static_cast<float>(rng.next_uniform());
    const double th1 = 0.4 + rng.next_uniform();
    const double th2 = th1 + rng.next_uniform();
    const int T = static_cast<int>(rng.next_int(1, 8));
    CHECK(level_of(scalar(v1), th1, T) <= level_of(scalar(v2), th1, T));
    CHECK(level_of(scalar(v1), th2, T) <= level_of(scalar(v1), th1, T));
  }
}

TEST_CASE("surrogate gradient is the clip derivative with inclusive bounds") {
  CHECK(mls_surrogate_grad(scalar(2.5f), 1.0, 4).at(0) == 1.0f);
  CHECK(mls_surrogate_grad(scalar(4.5f), 1.0, 4).at(0) == 0.0f);
  CHECK(mls_surrogate_grad(scalar(0.5f), 0.5, 4).at(0) == 2.0f);
  // Inclusive at both ends: v = 0 and v = theta*T carry gradient.
  CHECK(mls_surrogate_grad(scalar(0.0f), 1.0, 4).at(0) == 1.0f);
  CHECK(mls_surrogate_grad(scalar(4.0f), 1.0, 4).at(0) == 1.0f);
  CHECK(mls_surrogate_grad(scalar(-0.001f), 1.0, 4).at(0) == 0.0f);
}

TEST_CASE("compute_batch_max respects valid lengths and the clamp") {
  Tensor x({1, 3, 2});
  x.at(0) = 0.1f;  x.at(1) = -1.0f;
  x.at(2) = 0.9f;  x.at(3) = -2.0f;
  x.at(4) = -0.2f; x.at(5) = -0.5f;
  Tensor mx = compute_batch_max(x, {3}, 1e-5f);
  CHECK(mx.at(0) == 0.9f);
  CHECK(mx.at(1) == 1e-5f);  // all-negative channel clamps to epsilon

  // A padded frame holding a huge value must not leak into the max.
  Tensor padded({1, 3, 1});
  padded.at(0) = 0.5f;
  padded.at(1) = 0.25f;
  padded.at(2) = 10.0f;
  CHECK(compute_batch_max(padded, {2}, 1e-5f).at(0) == 0.5f);

  CHECK_THROWS_AS(compute_batch_max(padded, {0}, 1e-5f), DimensionError);
}

TEST_CASE("update_running_max applies the momentum rule") {
  NeuronConfig cfg;
  cfg.T = 4;
  ThresholdState st = ThresholdState::neutral(1, cfg);
  st.running_max[0] = 1.0f;
  Tensor mx({1}, {3.0f});
  update_running_max(st, mx, 0.1f, cfg.T);
  CHECK(st.running_max[0] == doctest::Approx(1.2).epsilon(1e-6));
  CHECK(st.lambda[0] * st.running_max[0] == doctest::Approx(4.0).epsilon(1e-6));

  update_running_max(st, mx, 1.0f, cfg.T);
  CHECK(st.running_max[0] == 3.0f);  // alpha = 1 replaces outright

  Tensor same({1}, {3.0f});
  update_running_max(st, same, 0.25f, cfg.T);
  CHECK(st.running_max[0] == 3.0f);  // fixed point

  st.frozen = true;
  CHECK_THROWS_AS(update_running_max(st, mx, 0.1f, cfg.T), StateError);
}

TEST_CASE("imls_fire scales the threshold by the running max") {
  NeuronConfig cfg;
  cfg.T = 4;
  cfg.theta = 1.0f;
  ThresholdState st = ThresholdState::neutral(1, cfg);
  st.running_max[0] = 1.2f;
  st.recompute_lambda(cfg.T);
  Tensor x({1, 1, 1}, {0.6f});
  ImlsResult r = imls_fire(x, st, cfg, false, {});
  CHECK(static_cast<int>(r.spikes.levels[0]) == 2);  // theta_eff = 0.3

  Tensor at_max({1, 1, 1}, {1.2f});
  ImlsResult rm = imls_fire(at_max, st, cfg, false, {});
  CHECK(static_cast<int>(rm.spikes.levels[0]) == cfg.T);

  Tensor zero({1, 1, 1}, {0.0f});
  CHECK(static_cast<int>(imls_fire(zero, st, cfg, false, {}).spikes.levels[0]) == 0);
}

TEST_CASE("imls_fire training mode updates statistics before firing") {
  NeuronConfig cfg;
  cfg.T = 4;
  cfg.alpha = 1.0f;  // full replacement makes the expectation exact
  ThresholdState st = ThresholdState::neutral(1, cfg);
  Tensor x({1, 2, 1}, {2.0f, 1.0f});
  ImlsResult r = imls_fire(x, st, cfg, true, {2});
  CHECK(st.running_max[0] == 2.0f);
  // theta_eff = 2/4 = 0.5 after the update, so 2.0 fires at level 4.
  CHECK(static_cast<int>(r.spikes.levels[0]) == 4);
  CHECK(static_cast<int>(r.spikes.levels[1]) == 2);
}

TEST_CASE("imls_fire is invariant to common power-of-two rescaling") {
  NeuronConfig cfg;
  cfg.T = 4;
  Pcg32 rng(5);
  ThresholdState st = ThresholdState::neutral(3, cfg);
  for (int c = 0; c < 3; ++c)
    st.running_max[static_cast<size_t>(c)] = static_cast<float>(0.5 + rng.next_uniform());
  st.recompute_lambda(cfg.T);
  Tensor x = Tensor::normal(rng, {2, 5, 3});
  ImlsResult base = imls_fire(x, st, cfg, false, {});
  for (float scale : {0.25f, 0.5f, 2.0f, 8.0f}) {
    ThresholdState st2 = st;
    for (auto& m : st2.running_max) m *= scale;
    st2.recompute_lambda(cfg.T);
    Tensor x2 = x;
    for (auto& v : x2.values()) v *= scale;
    ImlsResult scaled = imls_fire(x2, st2, cfg, false, {});
    CHECK(scaled.spikes.levels == base.spikes.levels);
  }
}

TEST_CASE("imls_fire rejects channel mismatch") {
  NeuronConfig cfg;
  ThresholdState st = ThresholdState::neutral(2, cfg);
  Tensor x({1, 1, 3});
  CHECK_THROWS_AS(imls_fire(x, st, cfg, false, {}), DimensionError);
}

TEST_CASE("expand_spike_train packs ones first and sums back") {
  SpikeTensor s({1}, 4);
  s.levels[0] = 3;
  SpikeTrain train = expand_spike_train(s);
  CHECK(train.planes[0][0] == 1);
  CHECK(train.planes[1][0] == 1);
  CHECK(train.planes[2][0] == 1);
  CHECK(train.planes[3][0] == 0);

  s.levels[0] = 0;
  SpikeTrain silent = expand_spike_train(s);
  for (int t = 0; t < 4; ++t) CHECK(silent.planes[static_cast<size_t>(t)][0] == 0);

  Pcg32 rng(6);
  SpikeTensor rand_s({4, 5}, 6);
  for (auto& l : rand_s.levels) l = static_cast<uint8_t>(rng.next_int(0, 6));
  SpikeTrain expanded = expand_spike_train(rand_s);
  for (int64_t i = 0; i < rand_s.numel(); ++i) {
    int total = 0;
    for (int t = 0; t < 6; ++t) total += expanded.planes[static_cast<size_t>(t)][static_cast<size_t>(i)];
    CHECK(total == static_cast<int>(rand_s.levels[static_cast<size_t>(i)]));
  }

  SpikeTensor corrupt({1}, 2);
  corrupt.levels[0] = 3;
  CHECK_THROWS_AS(expand_spike_train(corrupt), FormatError);
}

TEST_CASE("spike_matmul_event equals the dense product and counts events") {
  SpikeTensor zero({2, 3}, 4);
  Tensor w = Tensor::identity(3);
  EventMatmulResult silent = spike_matmul(zero, w);
  CHECK(silent.events == 0);
  CHECK(max_abs(silent.out) == 0.0);

  SpikeTensor two({1, 1}, 4);
  two.levels[0] = 2;
  Tensor w3({1, 1}, {3.0f});
  EventMatmulResult r = spike_matmul(two, w3);
  CHECK(r.out.at(0) == 6.0f);
  CHECK(r.events == 2);

  Pcg32 rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = static_cast<int>(rng.next_int(1, 8));
    const int64_t n = rng.next_int(1, 7), d = rng.next_int(1, 7), m = rng.next_int(1, 7);
    SpikeTensor s({n, d}, T);
    int64_t total = 0;
    for (auto& l : s.levels) {
      l = static_cast<uint8_t>(rng.next_int(0, T));
      total += l;
    }
    Tensor weights = Tensor::normal(rng, {d, m});
    EventMatmulResult ev = spike_matmul(s, weights);
    Tensor dense = matmul(s.to_tensor(), weights);
    CHECK(relative_diff(ev.out, dense) < 1e-5);
    CHECK(ev.events == total * m);
  }
}
