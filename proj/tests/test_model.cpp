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

#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "model.hpp"
#include "rng.hpp"

using namespace imls;

namespace {

ModelConfig small_config(AttentionVariant v = AttentionVariant::kHdRepssaS) {
  ModelConfig cfg;
  cfg.num_layers = 2;
  cfg.d = 16;
  cfg.heads = 4;
  cfg.d_ff = 32;
  cfg.num_classes = 4;
  cfg.input_dim = 8;
  cfg.neuron.T = 4;
  cfg.variant = v;
  return cfg;
}

std::string temp_path(const char* name) {
  return std::string("imls_test_") + name;
}

std::string file_bytes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("zeroed blocks reduce the model to pooled projection plus head") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 3);
  for (auto& b : m.blocks) {
    for (Tensor* w : {&b.attn.w_q, &b.attn.w_k, &b.attn.w_v, &b.attn.w_out,
                      &b.w1, &b.w2})
      for (auto& v : w->values()) v = 0.0f;
  }
  Pcg32 rng(4);
  Tensor features = Tensor::normal(rng, {10, cfg.input_dim});
  Tensor logits = m.forward(features, 10);

  // Oracle: blocks are identity, so logits = mean(features W_in) W_head + b.
  Tensor x = matmul(features, m.w_in);
  Tensor pooled({1, cfg.d});
  for (int64_t j = 0; j < cfg.d; ++j) {
    double acc = 0;
    for (int64_t r = 0; r < 10; ++r) acc += x.at(r, j);
    pooled.at(0, j) = static_cast<float>(acc / 10.0);
  }
  Tensor want2 = matmul(pooled, m.w_head);
  for (int64_t j = 0; j < cfg.num_classes; ++j)
    CHECK(logits.at(j) == doctest::Approx(want2.at(0, j) + m.b_head.at(j)).epsilon(1e-6));
}

TEST_CASE("all-zero features return exactly the head bias") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 5);
  for (int64_t j = 0; j < cfg.num_classes; ++j)
    m.b_head.at(j) = static_cast<float>(j) * 0.5f - 1.0f;
  Tensor features({6, cfg.input_dim});
  Tensor logits = m.forward(features, 6);
  for (int64_t j = 0; j < cfg.num_classes; ++j)
    CHECK(logits.at(j) == m.b_head.at(j));
}

TEST_CASE("single-token identity-weight block reproduces the hand trace") {
  ModelConfig cfg;
  cfg.num_layers = 1;
  cfg.d = 4;
  cfg.heads = 1;
  cfg.d_ff = 4;
  cfg.num_classes = 4;
  cfg.input_dim = 4;
  cfg.neuron.T = 4;
  cfg.neuron.theta = 1.0f;
  cfg.variant = AttentionVariant::kHdRepssaS;
  Model m = Model::init(cfg, 1);
  m.w_in = Tensor::identity(4);
  m.blocks[0].attn.w_q = Tensor::identity(4);
  m.blocks[0].attn.w_k = Tensor::identity(4);
  m.blocks[0].attn.w_v = Tensor::identity(4);
  m.blocks[0].attn.w_out = Tensor::identity(4);
  m.blocks[0].w1 = Tensor::identity(4);
  m.blocks[0].w2 = Tensor::identity(4);
  m.w_head = Tensor::identity(4);
  for (auto& v : m.b_head.values()) v = 0.0f;

  // x = [1.5, 0.5, 2, 3]: entry spikes [1,0,2,3]; A = 14; softmax over the
  // single token = 1; attention leaves [1,0,2,3]; X' = [2.5,0.5,4,6];
  // MLP spikes clip at T=4 giving [2,0,4,4]; X'' = [4.5,0.5,8,10].
  Tensor features({1, 4}, {1.5f, 0.5f, 2.0f, 3.0f});
  Tensor logits = m.forward(features, 1);
  CHECK(logits.at(0) == 4.5f);
  CHECK(logits.at(1) == 0.5f);
  CHECK(logits.at(2) == 8.0f);
  CHECK(logits.at(3) == 10.0f);
}

TEST_CASE("tape forward matches the dense forward bitwise in eval terms") {
  for (AttentionVariant v :
       {AttentionVariant::kHdRepssaS, AttentionVariant::kHdRepssaL,
        AttentionVariant::kRepssaS, AttentionVariant::kRepssaL,
        AttentionVariant::kSdsa3}) {
    ModelConfig cfg = small_config(v);
    Model m = Model::init(cfg, 11);
    Pcg32 rng(6);
    const int64_t b = 3, lmax = 9;
    Tensor features({b, lmax, cfg.input_dim});
    std::vector<int64_t> valid{9, 6, 8};
    for (int64_t bi = 0; bi < b; ++bi)
      for (int64_t t = 0; t < valid[static_cast<size_t>(bi)]; ++t)
        for (int64_t c = 0; c < cfg.input_dim; ++c)
          features.at((bi * lmax + t) * cfg.input_dim + c) =
              static_cast<float>(rng.next_normal());
    Tape tape;
    int logits_id = m.tape_logits(tape, features, valid);
    const Tensor& batched = tape.value(logits_id);

    for (int64_t bi = 0; bi < b; ++bi) {
      const int64_t len = valid[static_cast<size_t>(bi)];
      Tensor single({len, cfg.input_dim});
      for (int64_t t = 0; t < len; ++t)
        for (int64_t c = 0; c < cfg.input_dim; ++c)
          single.at(t, c) = features.at((bi * lmax + t) * cfg.input_dim + c);
      Tensor dense = m.forward(single, len);
      for (int64_t j = 0; j < cfg.num_classes; ++j)
        CHECK(dense.at(j) == batched.at(bi, j));
    }
  }
}

TEST_CASE("padding never changes an utterance's logits") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 21);
  Pcg32 rng(9);
  Tensor features = Tensor::normal(rng, {12, cfg.input_dim});
  Tensor logits = m.forward(features, 12);
  for (int64_t pad : {4, 17}) {
    Tensor padded({12 + pad, cfg.input_dim});
    for (int64_t t = 0; t < 12; ++t)
      for (int64_t c = 0; c < cfg.input_dim; ++c) padded.at(t, c) = features.at(t, c);
    Tensor padded_logits = m.forward(padded, 12);
    CHECK(relative_diff(padded_logits, logits) < 1e-5);
  }
}

TEST_CASE("reparameterize fuses weights, freezes stats, guards re-entry") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 31);
  const int64_t d = cfg.d;
  const int64_t before = m.parameter_count();
  m.reparameterize();
  const int64_t after = m.parameter_count();
  // Per layer the two DxD factored matrices become H fused DxD blocks.
  const int64_t delta = cfg.num_layers * (cfg.heads * d * d - 2 * d * d);
  CHECK(after - before == delta);
  CHECK(m.fused);
  CHECK(m.blocks[0].states.v.frozen);
  CHECK_THROWS_AS(m.reparameterize(), StateError);
  CHECK_THROWS_AS(
      [&] {
        Tape t;
        m.tape_logits(t, Tensor({1, 4, cfg.input_dim}), {4});
      }(),
      StateError);
}

TEST_CASE("training-math and fused forwards agree on random inputs") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 41);
  Model fused = m;
  fused.reparameterize();
  Pcg32 rng(10);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t len = rng.next_int(4, 14);
    Tensor features = Tensor::normal(rng, {len, cfg.input_dim});
    Tensor a = m.forward(features, len);
    Tensor b = fused.forward(features, len);
    CHECK(relative_diff(b, a) < 1e-4);
  }
}

TEST_CASE("spike-driven forward matches the dense fused forward") {
  for (AttentionVariant v :
       {AttentionVariant::kHdRepssaS, AttentionVariant::kHdRepssaL,
        AttentionVariant::kSdsa3}) {
    ModelConfig cfg = small_config(v);
    Model m = Model::init(cfg, 51);
    m.reparameterize();
    Pcg32 rng(11);
    for (int trial = 0; trial < 10; ++trial) {
      const int64_t len = rng.next_int(4, 12);
      Tensor features = Tensor::normal(rng, {len, cfg.input_dim});
      Tensor dense = m.forward(features, len);
      SpikeRunStats stats;
      Tensor spike = m.spike_driven_forward(features, len, &stats);
      CHECK(relative_diff(spike, dense) < 1e-4);
      CHECK(stats.total_events > 0);
    }
  }
}

TEST_CASE("spike-driven forward demands a fused model and zero input is free") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 61);
  Tensor features({5, cfg.input_dim});
  CHECK_THROWS_AS(m.spike_driven_forward(features, 5), StateError);
  m.reparameterize();
  SpikeRunStats stats;
  m.spike_driven_forward(features, 5, &stats);
  CHECK(stats.total_events == 0);
  for (const auto& p : stats.products)
    if (p.spike_fed) CHECK(p.events == 0);
}

TEST_CASE("event counts equal spike sums times fan-out per product") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 71);
  m.reparameterize();
  Pcg32 rng(12);
  Tensor features = Tensor::normal(rng, {7, cfg.input_dim});
  SpikeRunStats stats;
  m.spike_driven_forward(features, 7, &stats);
  for (const auto& p : stats.products) {
    if (!p.spike_fed) continue;
    CHECK(p.numel > 0);
    const int64_t fan_out = p.flops / p.numel;
    CHECK(p.events == p.spike_sum * fan_out);
  }
}

TEST_CASE("timestep state count grows linearly in T; tape nodes do not") {
  ModelConfig c4 = small_config();
  c4.neuron.T = 4;
  ModelConfig c6 = small_config();
  c6.neuron.T = 6;
  Model m4 = Model::init(c4, 81);
  Model m6 = Model::init(c6, 81);

  Tensor features({2, 8, c4.input_dim});
  std::vector<int64_t> valid{8, 8};
  Tape t4(Tape::Options{true, false});
  m4.tape_forward(t4, features, valid, {0, 1});
  Tape t6(Tape::Options{true, false});
  m6.tape_forward(t6, features, valid, {0, 1});
  CHECK(t4.node_count() == t6.node_count());

  m4.reparameterize();
  m6.reparameterize();
  Pcg32 rng(13);
  Tensor one = Tensor::normal(rng, {8, c4.input_dim});
  SpikeRunStats s4, s6;
  m4.spike_driven_forward(one, 8, &s4);
  m6.spike_driven_forward(one, 8, &s6);
  CHECK(s4.timestep_states > 0);
  CHECK(s6.timestep_states * 2 == s4.timestep_states * 3);  // exact 6/4 ratio
}

TEST_CASE("checkpoint round trip is byte-identical and validates input") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 91);
  const std::string p1 = temp_path("ckpt1.bin"), p2 = temp_path("ckpt2.bin");
  save_checkpoint(m, p1);
  Model loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);
  CHECK(file_bytes(p1) == file_bytes(p2));

  // Weights and states survive exactly.
  CHECK(loaded.w_in.values() == m.w_in.values());
  CHECK(loaded.blocks[1].states.mlp_hidden.running_max ==
        m.blocks[1].states.mlp_hidden.running_max);
  CHECK_FALSE(loaded.blocks[0].states.v.frozen);

  // Fused checkpoints restore frozen statistics.
  m.reparameterize();
  save_checkpoint(m, p1);
  Model fused = load_checkpoint(p1);
  CHECK(fused.fused);
  CHECK(fused.blocks[0].states.v.frozen);
  CHECK(fused.blocks[0].fused.w_qk.values() == m.blocks[0].fused.w_qk.values());

  // Corrupted magic is rejected.
  std::string bytes = file_bytes(p1);
  bytes[0] = 'X';
  std::ofstream(p2, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_checkpoint(p2), FormatError);

  // Bad version is rejected.
  bytes = file_bytes(p1);
  bytes[4] = 9;
  std::ofstream(p2, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_checkpoint(p2), FormatError);

  // Truncation is rejected.
  bytes = file_bytes(p1);
  bytes.resize(bytes.size() / 2);
  std::ofstream(p2, std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(load_checkpoint(p2), FormatError);

  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("sdsa3 models checkpoint their extra neuron sites") {
  ModelConfig cfg = small_config(AttentionVariant::kSdsa3);
  Model m = Model::init(cfg, 95);
  m.blocks[0].states.q.running_max[3] = 7.5f;
  const std::string p = temp_path("ckpt3.bin");
  save_checkpoint(m, p);
  Model loaded = load_checkpoint(p);
  CHECK(loaded.blocks[0].states.q.running_max[3] == 7.5f);
  std::remove(p.c_str());
}

TEST_CASE("attention maps are row-stochastic for softmax variants") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 97);
  Pcg32 rng(14);
  Tensor features = Tensor::normal(rng, {9, cfg.input_dim});
  Tensor maps = m.attention_maps(features, 9, 2);
  CHECK(maps.dim(0) == cfg.heads);
  for (int64_t h = 0; h < cfg.heads; ++h)
    for (int64_t i = 0; i < 9; ++i) {
      double sum = 0.0;
      for (int64_t j = 0; j < 9; ++j) sum += maps.at((h * 9 + i) * 9 + j);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-5));
    }
  CHECK_THROWS_AS(m.attention_maps(features, 9, 3), DimensionError);
}

TEST_CASE("untrained random model yields finite logits of the right shape") {
  ModelConfig cfg = small_config();
  Model m = Model::init(cfg, 99);
  Pcg32 rng(15);
  Tensor features = Tensor::normal(rng, {13, cfg.input_dim});
  Tensor logits = m.forward(features, 13);
  CHECK(logits.numel() == cfg.num_classes);
  logits.require_finite("logits");
}
