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

#include "model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace imls {

const char* variant_name(AttentionVariant v) {
  switch (v) {
    case AttentionVariant::kHdRepssaS: return "hd_repssa_s";
    case AttentionVariant::kHdRepssaL: return "hd_repssa_l";
    case AttentionVariant::kRepssaS: return "repssa_s";
    case AttentionVariant::kRepssaL: return "repssa_l";
    case AttentionVariant::kSdsa3: return "sdsa3";
  }
  return "?";
}

AttentionVariant variant_from_name(const std::string& name) {
  if (name == "hd_repssa_s") return AttentionVariant::kHdRepssaS;
  if (name == "hd_repssa_l") return AttentionVariant::kHdRepssaL;
  if (name == "repssa_s") return AttentionVariant::kRepssaS;
  if (name == "repssa_l") return AttentionVariant::kRepssaL;
  if (name == "sdsa3") return AttentionVariant::kSdsa3;
  throw ParseError("unknown attention variant '" + name + "'");
}

bool variant_uses_mask(AttentionVariant v) {
  return v == AttentionVariant::kHdRepssaS || v == AttentionVariant::kHdRepssaL;
}

bool variant_is_softmax(AttentionVariant v) {
  return v == AttentionVariant::kHdRepssaS || v == AttentionVariant::kRepssaS;
}

void ModelConfig::validate() const {
  if (num_layers < 1) throw StateError("num_layers must be >= 1");
  if (d < 1 || heads < 1 || d % heads != 0)
    throw StateError("model width must be divisible by head count");
  if (d_ff < 1) throw StateError("d_ff must be >= 1");
  if (num_classes < 2) throw StateError("num_classes must be >= 2");
  if (input_dim < 1) throw StateError("input_dim must be >= 1");
  neuron.validate();
}

const SpikeStats* FiringRecord::find(const std::string& name) const {
  for (const auto& s : sites)
    if (s.name == name) return &s;
  return nullptr;
}

SpikeRunStats::Product& SpikeRunStats::product(const std::string& name,
                                               bool spike_fed, int T) {
  for (auto& p : products)
    if (p.name == name) return p;
  Product p;
  p.name = name;
  p.spike_fed = spike_fed;
  p.T = T;
  products.push_back(std::move(p));
  return products.back();
}

namespace {

Tensor xavier_uniform(Pcg32& rng, int64_t fan_in, int64_t fan_out,
                      double gain = 1.0) {
  const float limit = static_cast<float>(
      gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return Tensor::uniform(rng, {fan_in, fan_out}, -limit, limit);
}

// Xavier with zero-mean columns. Spiking sites only fire on positive
// pre-activations and carry no gradient below zero, so a column whose sum
// is strongly negative starts permanently dead; centering removes that
// failure mode at initialization.
Tensor xavier_uniform_centered(Pcg32& rng, int64_t fan_in, int64_t fan_out) {
  Tensor w = xavier_uniform(rng, fan_in, fan_out);
  for (int64_t c = 0; c < fan_out; ++c) {
    double mean = 0.0;
    for (int64_t r = 0; r < fan_in; ++r) mean += w.at(r, c);
    mean /= static_cast<double>(fan_in);
    for (int64_t r = 0; r < fan_in; ++r)
      w.at(r, c) = static_cast<float>(w.at(r, c) - mean);
  }
  return w;
}

Tensor add_tensors(const Tensor& a, const Tensor& b) {
  Tensor out = a;
  for (int64_t i = 0; i < out.numel(); ++i) out.at(i) += b.at(i);
  return out;
}

}  // namespace

Model Model::init(const ModelConfig& config, uint64_t seed) {
  config.validate();
  Model m;
  m.cfg = config;
  Pcg32 rng(seed);
  const int64_t d = config.d, dff = config.d_ff;
  m.w_in = xavier_uniform_centered(rng, config.input_dim, d);
  m.blocks.resize(static_cast<size_t>(config.num_layers));
  const bool sdsa = config.variant == AttentionVariant::kSdsa3;
  // Residual-branch outputs are damped by depth so the stream scale stays
  // tame without a normalization layer.
  const double branch_gain = 1.0 / std::sqrt(2.0 * config.num_layers);
  for (auto& b : m.blocks) {
    b.attn.heads = config.heads;
    b.attn.w_q = sdsa ? xavier_uniform_centered(rng, d, d) : xavier_uniform(rng, d, d);
    b.attn.w_k = sdsa ? xavier_uniform_centered(rng, d, d) : xavier_uniform(rng, d, d);
    b.attn.w_v = xavier_uniform_centered(rng, d, d);
    b.attn.w_out = xavier_uniform(rng, d, d, branch_gain);
    b.w1 = xavier_uniform_centered(rng, d, dff);
    b.w2 = xavier_uniform(rng, dff, d, branch_gain);
    b.states.attn_entry = ThresholdState::neutral(d, config.neuron);
    if (sdsa) {
      b.states.q = ThresholdState::neutral(d, config.neuron);
      b.states.k = ThresholdState::neutral(d, config.neuron);
    }
    b.states.v = ThresholdState::neutral(d, config.neuron);
    b.states.attn_out = ThresholdState::neutral(d, config.neuron);
    b.states.mlp_entry = ThresholdState::neutral(d, config.neuron);
    b.states.mlp_hidden = ThresholdState::neutral(dff, config.neuron);
  }
  m.w_head = xavier_uniform(rng, d, config.num_classes);
  m.b_head = Tensor({config.num_classes});
  return m;
}

std::vector<std::string> Model::site_names() const {
  std::vector<std::string> names;
  const bool sdsa = cfg.variant == AttentionVariant::kSdsa3;
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string p = "l" + std::to_string(i) + ".";
    names.push_back(p + "attn.entry");
    if (sdsa) {
      names.push_back(p + "attn.q");
      names.push_back(p + "attn.k");
    }
    names.push_back(p + "attn.v");
    names.push_back(p + "attn.out");
    names.push_back(p + "mlp.entry");
    names.push_back(p + "mlp.hidden");
  }
  return names;
}

FiringRecord Model::make_recorder() const {
  FiringRecord rec;
  for (const auto& name : site_names()) {
    SpikeStats s;
    s.name = name;
    s.T = cfg.neuron.T;
    rec.sites.push_back(std::move(s));
  }
  return rec;
}

namespace {

// Walks recorder slots in the fixed site order.
struct SinkCursor {
  FiringRecord* rec = nullptr;
  size_t next = 0;
  SpikeStats* take() {
    if (!rec) return nullptr;
    return &rec->sites[next++];
  }
};

Tensor mean_pool_rows(const Tensor& x, int64_t valid_len) {
  const int64_t d = x.dim(1);
  Tensor pooled({1, d});
  std::vector<double> acc(static_cast<size_t>(d), 0.0);
  for (int64_t r = 0; r < valid_len; ++r)
    for (int64_t j = 0; j < d; ++j)
      acc[static_cast<size_t>(j)] += static_cast<double>(x.at(r, j));
  for (int64_t j = 0; j < d; ++j)
    pooled.at(0, j) =
        static_cast<float>(acc[static_cast<size_t>(j)] / static_cast<double>(valid_len));
  return pooled;
}

}  // namespace

Tensor Model::forward(const Tensor& features, int64_t valid_len,
                      FiringRecord* rec) const {
  if (features.rank() != 2 || features.dim(1) != cfg.input_dim)
    throw DimensionError("forward expects [L x " + std::to_string(cfg.input_dim) +
                         "] features, got " + shape_str(features.dims()));
  const int64_t L = features.dim(0);
  if (valid_len < 1 || valid_len > L)
    throw DimensionError("valid_len out of range");
  SinkCursor sinks{rec, 0};
  const NeuronConfig* nc = &cfg.neuron;
  const bool sdsa = cfg.variant == AttentionVariant::kSdsa3;
  const LogitMode mode = fused ? LogitMode::kFused : LogitMode::kFactored;

  Tensor x = matmul(features, w_in);
  for (size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    NeuronSite entry{&b.states.attn_entry, nc, sinks.take()};
    NeuronSite q{&b.states.q, nc, sdsa ? sinks.take() : nullptr};
    NeuronSite k{&b.states.k, nc, sdsa ? sinks.take() : nullptr};
    NeuronSite v{&b.states.v, nc, sinks.take()};
    NeuronSite out{&b.states.attn_out, nc, sinks.take()};
    NeuronSite mlp_entry{&b.states.mlp_entry, nc, sinks.take()};
    NeuronSite mlp_hidden{&b.states.mlp_hidden, nc, sinks.take()};

    SpikeTensor xs = entry.fire(x);
    AttentionNeurons sn{&q, &k, &v, &out};
    Tensor attn;
    const FusedAttentionParams* fp = fused ? &b.fused : nullptr;
    DecayMask mask;
    const DecayMask* mp = nullptr;
    if (variant_uses_mask(cfg.variant)) {
      mask = build_hdm(L, static_cast<int>(i) + 1);
      mp = &mask;
    }
    switch (cfg.variant) {
      case AttentionVariant::kHdRepssaS:
      case AttentionVariant::kRepssaS:
        attn = hd_repssa_s(xs, b.attn, fp, mode, mp, sn, valid_len);
        break;
      case AttentionVariant::kHdRepssaL:
      case AttentionVariant::kRepssaL:
        attn = hd_repssa_l(xs, b.attn, fp, mode, mp, sn, valid_len);
        break;
      case AttentionVariant::kSdsa3:
        attn = sdsa3(xs, b.attn, sn, valid_len);
        break;
    }
    x = add_tensors(x, attn);
    Tensor mlp = channel_mlp(x, b.w1, b.w2, mlp_entry, mlp_hidden);
    x = add_tensors(x, mlp);
  }
  Tensor pooled = mean_pool_rows(x, valid_len);
  Tensor logits2 = matmul(pooled, w_head);
  Tensor logits({cfg.num_classes});
  for (int64_t j = 0; j < cfg.num_classes; ++j)
    logits.at(j) = logits2.at(0, j) + b_head.at(j);
  return logits;
}

namespace {

Tensor broadcast_mask(const DecayMask& mask, int64_t batch, int64_t heads) {
  const int64_t n = mask.seq_len;
  Tensor full({batch, heads, n, n});
  Tensor base = mask.to_tensor();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t h = 0; h < heads; ++h)
      std::copy(base.data(), base.data() + n * n,
                full.data() + ((b * heads + h) * n) * n);
  return full;
}

}  // namespace

int Model::tape_logits(Tape& t, const Tensor& features,
                       const std::vector<int64_t>& valid) {
  if (features.rank() != 3 || features.dim(2) != cfg.input_dim)
    throw DimensionError("tape forward expects [B x L x C_in] features");
  if (fused) throw StateError("training graph requires an unfused model");
  const int64_t L = features.dim(1);
  const int64_t B = features.dim(0);
  const int heads = cfg.heads;
  const NeuronConfig* nc = &cfg.neuron;
  const bool sdsa = cfg.variant == AttentionVariant::kSdsa3;
  const bool softmax_variant = variant_is_softmax(cfg.variant);

  int x = t.matmul(t.input(features), t.param(&w_in));
  for (size_t i = 0; i < blocks.size(); ++i) {
    Block& b = blocks[i];
    int xs = t.imls(x, &b.states.attn_entry, nc, valid);
    int attn = -1;
    if (sdsa) {
      int q = t.imls(t.matmul(xs, t.param(&b.attn.w_q)), &b.states.q, nc, valid);
      int k = t.imls(t.matmul(xs, t.param(&b.attn.w_k)), &b.states.k, nc, valid);
      int v = t.imls(t.matmul(xs, t.param(&b.attn.w_v)), &b.states.v, nc, valid);
      k = t.zero_pad_rows(k, valid);
      v = t.zero_pad_rows(v, valid);
      int kv = t.bmm_tn(t.split_heads(k, heads), t.split_heads(v, heads));
      int o = t.bmm(t.split_heads(q, heads), kv);
      int os = t.imls(t.merge_heads(o), &b.states.attn_out, nc, valid);
      attn = t.matmul(os, t.param(&b.attn.w_out));
    } else {
      int q = t.matmul(xs, t.param(&b.attn.w_q));
      int k = t.matmul(xs, t.param(&b.attn.w_k));
      int v = t.imls(t.matmul(xs, t.param(&b.attn.w_v)), &b.states.v, nc, valid);
      if (!softmax_variant) v = t.zero_pad_rows(v, valid);
      int a = t.bmm_nt(t.split_heads(q, heads), t.split_heads(k, heads));
      if (variant_uses_mask(cfg.variant))
        a = t.mul_const(a, broadcast_mask(build_hdm(L, static_cast<int>(i) + 1), B, heads));
      int o;
      int vh = t.split_heads(v, heads);
      if (softmax_variant) {
        a = t.scale(a, 1.0 / std::sqrt(static_cast<double>(cfg.d / heads)));
        a = t.pad_keys(a, valid);
        o = t.bmm(t.softmax(a), vh);
      } else {
        o = t.bmm(a, vh);
      }
      int os = t.imls(t.merge_heads(o), &b.states.attn_out, nc, valid);
      attn = t.matmul(os, t.param(&b.attn.w_out));
    }
    x = t.add(x, attn);
    int ms = t.imls(x, &b.states.mlp_entry, nc, valid);
    int h1 = t.matmul(ms, t.param(&b.w1));
    int hs = t.imls(h1, &b.states.mlp_hidden, nc, valid);
    x = t.add(x, t.matmul(hs, t.param(&b.w2)));
  }
  int pooled = t.mean_pool_valid(x, valid);
  return t.add_bias(t.matmul(pooled, t.param(&w_head)), t.param(&b_head));
}

int Model::tape_forward(Tape& t, const Tensor& features,
                        const std::vector<int64_t>& valid,
                        const std::vector<int>& labels) {
  int logits = tape_logits(t, features, valid);
  return t.cross_entropy(logits, labels);
}

void Model::reparameterize() {
  if (fused) throw StateError("model is already reparameterized");
  for (auto& b : blocks) {
    if (cfg.variant != AttentionVariant::kSdsa3) {
      b.fused = rep_fuse(b.attn);
      b.fused.w_v = Tensor();   // the live copies stay in b.attn
      b.fused.w_out = Tensor();
      b.attn.w_q = Tensor();
      b.attn.w_k = Tensor();
    }
    for (ThresholdState* s : {&b.states.attn_entry, &b.states.q, &b.states.k,
                              &b.states.v, &b.states.attn_out,
                              &b.states.mlp_entry, &b.states.mlp_hidden})
      s->frozen = true;
  }
  fused = true;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> ps;
  ps.push_back(&w_in);
  for (auto& b : blocks) {
    if (b.attn.w_q.numel() > 0) ps.push_back(&b.attn.w_q);
    if (b.attn.w_k.numel() > 0) ps.push_back(&b.attn.w_k);
    ps.push_back(&b.attn.w_v);
    ps.push_back(&b.attn.w_out);
    ps.push_back(&b.w1);
    ps.push_back(&b.w2);
  }
  ps.push_back(&w_head);
  ps.push_back(&b_head);
  return ps;
}

int64_t Model::parameter_count() const {
  int64_t n = w_in.numel() + w_head.numel() + b_head.numel();
  for (const auto& b : blocks) {
    n += b.attn.w_q.numel() + b.attn.w_k.numel() + b.attn.w_v.numel() +
         b.attn.w_out.numel() + b.w1.numel() + b.w2.numel();
    n += b.fused.w_qk.numel();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Event-driven forward.

namespace {

struct EventTally {
  SpikeRunStats* stats;
  int T;

  // One spike-weight product: runs the accumulate-only kernel and charges
  // both accounting routes (event count and rate formula) for it.
  Tensor run(const std::string& name, const SpikeTensor& s, const Tensor& w) {
    EventMatmulResult r = spike_matmul(s, w);
    if (stats) {
      auto& p = stats->product(name, true, T);
      const int64_t flops = s.numel() * w.dim(1);
      const int64_t sum = s.spike_sum();
      p.flops += flops;
      p.events += r.events;
      p.spike_sum += sum;
      p.numel += s.numel();
      const double rate = static_cast<double>(sum) /
                          (static_cast<double>(s.numel()) * static_cast<double>(T));
      p.snn_energy_nj += static_cast<double>(T) * rate *
                         static_cast<double>(flops) * 0.9;
      stats->total_events += r.events;
      stats->timestep_states += T;
    }
    return std::move(r.out);
  }

  void real_fed(const std::string& name, int64_t flops) {
    if (!stats) return;
    auto& p = stats->product(name, false, T);
    p.flops += flops;
  }
};

}  // namespace

Tensor Model::spike_driven_forward(const Tensor& features, int64_t valid_len,
                                   SpikeRunStats* stats,
                                   FiringRecord* rec) const {
  if (!fused)
    throw StateError("spike-driven forward requires a reparameterized model");
  if (features.rank() != 2 || features.dim(1) != cfg.input_dim)
    throw DimensionError("spike_driven_forward expects [L x C_in] features");
  const int64_t L = features.dim(0);
  if (valid_len < 1 || valid_len > L) throw DimensionError("valid_len out of range");
  const int64_t d = cfg.d, dk = cfg.d / cfg.heads;
  const NeuronConfig* nc = &cfg.neuron;
  const bool sdsa = cfg.variant == AttentionVariant::kSdsa3;
  const bool softmax_variant = variant_is_softmax(cfg.variant);
  SinkCursor sinks{rec, 0};
  EventTally tally{stats, cfg.neuron.T};

  Tensor x = matmul(features, w_in);
  tally.real_fed("input_proj", L * cfg.input_dim * d);

  for (size_t i = 0; i < blocks.size(); ++i) {
    const Block& b = blocks[i];
    const std::string p = "l" + std::to_string(i) + ".";
    NeuronSite entry{&b.states.attn_entry, nc, sinks.take()};
    NeuronSite qsite{&b.states.q, nc, sdsa ? sinks.take() : nullptr};
    NeuronSite ksite{&b.states.k, nc, sdsa ? sinks.take() : nullptr};
    NeuronSite vsite{&b.states.v, nc, sinks.take()};
    NeuronSite osite{&b.states.attn_out, nc, sinks.take()};
    NeuronSite msite{&b.states.mlp_entry, nc, sinks.take()};
    NeuronSite hsite{&b.states.mlp_hidden, nc, sinks.take()};

    SpikeTensor xs = entry.fire(x);
    Tensor attn({L, d});
    if (sdsa) {
      SpikeTensor q_s = qsite.fire(tally.run(p + "attn.wq", xs, b.attn.w_q));
      SpikeTensor k_s = ksite.fire(tally.run(p + "attn.wk", xs, b.attn.w_k));
      SpikeTensor v_s = vsite.fire(tally.run(p + "attn.wv", xs, b.attn.w_v));
      for (int64_t r = valid_len; r < L; ++r) {
        std::fill(k_s.levels.begin() + r * d, k_s.levels.begin() + (r + 1) * d, uint8_t{0});
        std::fill(v_s.levels.begin() + r * d, v_s.levels.begin() + (r + 1) * d, uint8_t{0});
      }
      Tensor v_t = v_s.to_tensor();
      for (int64_t h = 0; h < cfg.heads; ++h) {
        SpikeTensor k_h({L, dk}, nc->T);
        SpikeTensor q_h({L, dk}, nc->T);
        Tensor v_h({L, dk});
        for (int64_t r = 0; r < L; ++r)
          for (int64_t j = 0; j < dk; ++j) {
            k_h.levels[static_cast<size_t>(r * dk + j)] = k_s.levels[static_cast<size_t>(r * d + h * dk + j)];
            q_h.levels[static_cast<size_t>(r * dk + j)] = q_s.levels[static_cast<size_t>(r * d + h * dk + j)];
            v_h.at(r, j) = v_t.at(r, h * dk + j);
          }
        Tensor kv = tally.run(p + "attn.kv", transpose_spikes(k_h), v_h);
        Tensor o = tally.run(p + "attn.qkv", q_h, kv);
        for (int64_t r = 0; r < L; ++r)
          for (int64_t j = 0; j < dk; ++j) attn.at(r, h * dk + j) = o.at(r, j);
      }
      SpikeTensor s = osite.fire(attn);
      attn = tally.run(p + "attn.wout", s, b.attn.w_out);
    } else {
      Tensor v = tally.run(p + "attn.wv", xs, b.attn.w_v);
      SpikeTensor v_s = vsite.fire(v);
      if (!softmax_variant)
        for (int64_t r = valid_len; r < L; ++r)
          std::fill(v_s.levels.begin() + r * d, v_s.levels.begin() + (r + 1) * d, uint8_t{0});
      Tensor v_t = v_s.to_tensor();
      DecayMask mask;
      const DecayMask* mp = nullptr;
      if (variant_uses_mask(cfg.variant)) {
        mask = build_hdm(L, static_cast<int>(i) + 1);
        mp = &mask;
      }
      for (int64_t h = 0; h < cfg.heads; ++h) {
        Tensor wqk_h({d, d});
        std::copy(b.fused.w_qk.data() + h * d * d, b.fused.w_qk.data() + (h + 1) * d * d,
                  wqk_h.data());
        Tensor m = tally.run(p + "attn.wqk", xs, wqk_h);
        Tensor a = transpose2d(tally.run(p + "attn.logits", xs, transpose2d(m)));
        if (mp) attn_mask_mul(a, *mp);
        SpikeTensor v_h({L, dk}, nc->T);
        for (int64_t r = 0; r < L; ++r)
          for (int64_t j = 0; j < dk; ++j)
            v_h.levels[static_cast<size_t>(r * dk + j)] = v_s.levels[static_cast<size_t>(r * d + h * dk + j)];
        Tensor o;
        if (softmax_variant) {
          attn_scale(a, 1.0 / std::sqrt(static_cast<double>(dk)));
          attn_pad_keys(a, valid_len);
          Tensor prob = softmax_rows(a);
          o = transpose2d(tally.run(p + "attn.av", transpose_spikes(v_h), transpose2d(prob)));
        } else {
          o = transpose2d(tally.run(p + "attn.av", transpose_spikes(v_h), transpose2d(a)));
        }
        for (int64_t r = 0; r < L; ++r)
          for (int64_t j = 0; j < dk; ++j) attn.at(r, h * dk + j) = o.at(r, j);
      }
      SpikeTensor s = osite.fire(attn);
      attn = tally.run(p + "attn.wout", s, b.attn.w_out);
    }
    x = add_tensors(x, attn);

    SpikeTensor s1 = msite.fire(x);
    Tensor h1 = tally.run(p + "mlp.w1", s1, b.w1);
    SpikeTensor s2 = hsite.fire(h1);
    Tensor m2 = tally.run(p + "mlp.w2", s2, b.w2);
    x = add_tensors(x, m2);
  }

  Tensor pooled = mean_pool_rows(x, valid_len);
  Tensor logits2 = matmul(pooled, w_head);
  tally.real_fed("head", d * cfg.num_classes);
  Tensor logits({cfg.num_classes});
  for (int64_t j = 0; j < cfg.num_classes; ++j)
    logits.at(j) = logits2.at(0, j) + b_head.at(j);
  return logits;
}

Tensor Model::attention_maps(const Tensor& features, int64_t valid_len,
                             int layer_index) const {
  if (layer_index < 1 || layer_index > cfg.num_layers)
    throw DimensionError("layer index out of range (1.." +
                         std::to_string(cfg.num_layers) + ")");
  const int64_t L = features.dim(0);
  if (valid_len < 1 || valid_len > L) throw DimensionError("valid_len out of range");
  const NeuronConfig* nc = &cfg.neuron;
  const LogitMode mode = fused ? LogitMode::kFused : LogitMode::kFactored;
  const int64_t dk = cfg.d / cfg.heads;

  Tensor x = matmul(features, w_in);
  for (int i = 0; i < layer_index - 1; ++i) {
    // Full block forward up to the requested layer.
    const Block& b = blocks[static_cast<size_t>(i)];
    NeuronSite entry{&b.states.attn_entry, nc, nullptr};
    NeuronSite q{&b.states.q, nc, nullptr}, k{&b.states.k, nc, nullptr};
    NeuronSite v{&b.states.v, nc, nullptr}, out{&b.states.attn_out, nc, nullptr};
    NeuronSite me{&b.states.mlp_entry, nc, nullptr}, mh{&b.states.mlp_hidden, nc, nullptr};
    SpikeTensor xs = entry.fire(x);
    AttentionNeurons sn{&q, &k, &v, &out};
    DecayMask mask;
    const DecayMask* mp = nullptr;
    if (variant_uses_mask(cfg.variant)) {
      mask = build_hdm(L, i + 1);
      mp = &mask;
    }
    Tensor attn;
    const FusedAttentionParams* fp = fused ? &b.fused : nullptr;
    switch (cfg.variant) {
      case AttentionVariant::kHdRepssaS:
      case AttentionVariant::kRepssaS:
        attn = hd_repssa_s(xs, b.attn, fp, mode, mp, sn, valid_len);
        break;
      case AttentionVariant::kHdRepssaL:
      case AttentionVariant::kRepssaL:
        attn = hd_repssa_l(xs, b.attn, fp, mode, mp, sn, valid_len);
        break;
      case AttentionVariant::kSdsa3:
        attn = sdsa3(xs, b.attn, sn, valid_len);
        break;
    }
    x = add_tensors(x, attn);
    x = add_tensors(x, channel_mlp(x, b.w1, b.w2, me, mh));
  }

  const Block& b = blocks[static_cast<size_t>(layer_index - 1)];
  NeuronSite entry{&b.states.attn_entry, nc, nullptr};
  SpikeTensor xs = entry.fire(x);
  Tensor maps({cfg.heads, L, L});
  if (cfg.variant == AttentionVariant::kSdsa3) {
    NeuronSite q{&b.states.q, nc, nullptr}, k{&b.states.k, nc, nullptr};
    Tensor xt = xs.to_tensor();
    SpikeTensor q_s = q.fire(matmul(xt, b.attn.w_q));
    SpikeTensor k_s = k.fire(matmul(xt, b.attn.w_k));
    Tensor q_t = q_s.to_tensor(), k_t = k_s.to_tensor();
    for (int64_t h = 0; h < cfg.heads; ++h) {
      Tensor a({L, L});
      for (int64_t r = 0; r < L; ++r)
        for (int64_t c = 0; c < L; ++c) {
          double acc = 0.0;
          for (int64_t j = 0; j < dk; ++j)
            acc += static_cast<double>(q_t.at(r, h * dk + j)) * k_t.at(c, h * dk + j);
          a.at(r, c) = static_cast<float>(acc);
        }
      std::copy(a.data(), a.data() + L * L, maps.data() + h * L * L);
    }
    return maps;
  }

  Tensor logits = attn_logits(xs, b.attn, fused ? &b.fused : nullptr, mode);
  DecayMask mask;
  const DecayMask* mp = nullptr;
  if (variant_uses_mask(cfg.variant)) {
    mask = build_hdm(L, layer_index);
    mp = &mask;
  }
  for (int64_t h = 0; h < cfg.heads; ++h) {
    Tensor a({L, L});
    std::copy(logits.data() + h * L * L, logits.data() + (h + 1) * L * L, a.data());
    if (mp) attn_mask_mul(a, *mp);
    if (variant_is_softmax(cfg.variant)) {
      attn_scale(a, 1.0 / std::sqrt(static_cast<double>(dk)));
      attn_pad_keys(a, valid_len);
      a = softmax_rows(a);
    }
    std::copy(a.data(), a.data() + L * L, maps.data() + h * L * L);
  }
  return maps;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O.

namespace {

constexpr char kMagic[4] = {'I', 'M', 'L', 'S'};
constexpr uint32_t kVersion = 1;

void put_u16(std::ostream& os, uint16_t v) {
  uint8_t b[2] = {static_cast<uint8_t>(v & 0xff), static_cast<uint8_t>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  uint8_t b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<uint8_t>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint16_t get_u16(std::istream& is) {
  uint8_t b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) throw FormatError("truncated checkpoint");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
  uint8_t b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("truncated checkpoint");
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_record(std::ostream& os, const std::string& name, const Tensor& t) {
  put_u16(os, static_cast<uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(static_cast<char>(t.rank()));
  for (int i = 0; i < t.rank(); ++i) put_u32(os, static_cast<uint32_t>(t.dim(i)));
  for (int64_t i = 0; i < t.numel(); ++i) {
    uint32_t bits;
    float f = t.at(i);
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
}

void put_text_record(std::ostream& os, const std::string& name, const std::string& text) {
  put_u16(os, static_cast<uint16_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  os.put(static_cast<char>(1));
  put_u32(os, static_cast<uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

Tensor state_tensor(const ThresholdState& s) {
  Tensor t({s.channels()});
  for (int64_t c = 0; c < s.channels(); ++c) t.at(c) = s.running_max[static_cast<size_t>(c)];
  return t;
}

void load_state(ThresholdState& s, const Tensor& t, const NeuronConfig& cfg, bool frozen) {
  s.running_max.assign(t.data(), t.data() + t.numel());
  s.recompute_lambda(cfg.T);
  s.frozen = frozen;
}

// Fixed record order shared by writer and reader.
struct RecordPlan {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  std::vector<std::pair<std::string, const ThresholdState*>> states;
};

RecordPlan plan_records(const Model& m) {
  RecordPlan plan;
  const bool sdsa = m.cfg.variant == AttentionVariant::kSdsa3;
  plan.tensors.emplace_back("input_proj.weight", &m.w_in);
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    const Block& b = m.blocks[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    if (m.fused && !sdsa) {
      plan.tensors.emplace_back(p + "attn.w_qk", &b.fused.w_qk);
    } else {
      plan.tensors.emplace_back(p + "attn.w_q", &b.attn.w_q);
      plan.tensors.emplace_back(p + "attn.w_k", &b.attn.w_k);
    }
    plan.tensors.emplace_back(p + "attn.w_v", &b.attn.w_v);
    plan.tensors.emplace_back(p + "attn.w_out", &b.attn.w_out);
    plan.tensors.emplace_back(p + "mlp.w1", &b.w1);
    plan.tensors.emplace_back(p + "mlp.w2", &b.w2);
    plan.states.emplace_back(p + "sn.attn_entry", &b.states.attn_entry);
    if (sdsa) {
      plan.states.emplace_back(p + "sn.q", &b.states.q);
      plan.states.emplace_back(p + "sn.k", &b.states.k);
    }
    plan.states.emplace_back(p + "sn.v", &b.states.v);
    plan.states.emplace_back(p + "sn.attn_out", &b.states.attn_out);
    plan.states.emplace_back(p + "sn.mlp_entry", &b.states.mlp_entry);
    plan.states.emplace_back(p + "sn.mlp_hidden", &b.states.mlp_hidden);
  }
  plan.tensors.emplace_back("head.weight", &m.w_head);
  plan.tensors.emplace_back("head.bias", &m.b_head);
  return plan;
}

}  // namespace

std::string config_to_text(const ModelConfig& cfg, bool fused) {
  char buf[64];
  std::ostringstream os;
  os << "format=1\n";
  os << "fused=" << (fused ? 1 : 0) << "\n";
  os << "model.num_layers=" << cfg.num_layers << "\n";
  os << "model.d=" << cfg.d << "\n";
  os << "model.heads=" << cfg.heads << "\n";
  os << "model.d_ff=" << cfg.d_ff << "\n";
  os << "model.t=" << cfg.neuron.T << "\n";
  os << "model.variant=" << variant_name(cfg.variant) << "\n";
  os << "model.num_classes=" << cfg.num_classes << "\n";
  os << "model.input_dim=" << cfg.input_dim << "\n";
  auto put_f = [&](const char* key, float v) {
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
    os << key << "=" << buf << "\n";
  };
  put_f("neuron.theta", cfg.neuron.theta);
  put_f("neuron.beta", cfg.neuron.beta);
  put_f("neuron.alpha", cfg.neuron.alpha);
  put_f("neuron.epsilon", cfg.neuron.epsilon);
  os << "neuron.adaptive=" << (cfg.neuron.adaptive ? 1 : 0) << "\n";
  return os.str();
}

ModelConfig config_from_text(const std::string& text, bool* fused_out) {
  ModelConfig cfg;
  bool fused = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("bad config line: " + line);
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "format") {
      if (val != "1") throw FormatError("unsupported config format " + val);
    } else if (key == "fused") {
      fused = val == "1";
    } else if (key == "model.num_layers") {
      cfg.num_layers = std::stoi(val);
    } else if (key == "model.d") {
      cfg.d = std::stoi(val);
    } else if (key == "model.heads") {
      cfg.heads = std::stoi(val);
    } else if (key == "model.d_ff") {
      cfg.d_ff = std::stoi(val);
    } else if (key == "model.t") {
      cfg.neuron.T = std::stoi(val);
    } else if (key == "model.variant") {
      cfg.variant = variant_from_name(val);
    } else if (key == "model.num_classes") {
      cfg.num_classes = std::stoi(val);
    } else if (key == "model.input_dim") {
      cfg.input_dim = std::stoi(val);
    } else if (key == "neuron.theta") {
      cfg.neuron.theta = std::stof(val);
    } else if (key == "neuron.beta") {
      cfg.neuron.beta = std::stof(val);
    } else if (key == "neuron.alpha") {
      cfg.neuron.alpha = std::stof(val);
    } else if (key == "neuron.epsilon") {
      cfg.neuron.epsilon = std::stof(val);
    } else if (key == "neuron.adaptive") {
      cfg.neuron.adaptive = val == "1";
    } else {
      throw FormatError("unknown checkpoint config key: " + key);
    }
  }
  if (fused_out) *fused_out = fused;
  return cfg;
}

void save_checkpoint(const Model& m, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  RecordPlan plan = plan_records(m);
  put_u32(os, static_cast<uint32_t>(1 + plan.tensors.size() + plan.states.size()));
  put_text_record(os, "__config__", config_to_text(m.cfg, m.fused));
  for (const auto& [name, t] : plan.tensors) put_record(os, name, *t);
  for (const auto& [name, s] : plan.states) put_record(os, name, state_tensor(*s));
  if (!os) throw FormatError("write failure on '" + path + "'");
}

Model load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint '" + path + "'");
  char magic[4];
  if (!is.read(magic, 4)) throw FormatError("truncated checkpoint");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad checkpoint magic");
  const uint32_t version = get_u32(is);
  if (version != kVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const uint32_t count = get_u32(is);

  std::string config_text;
  std::map<std::string, Tensor> records;
  for (uint32_t r = 0; r < count; ++r) {
    const uint16_t name_len = get_u16(is);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw FormatError("truncated checkpoint");
    const int rank = is.get();
    if (rank == EOF) throw FormatError("truncated checkpoint");
    if (rank < 1 || rank > 4) throw FormatError("bad record rank in checkpoint");
    Shape dims(static_cast<size_t>(rank));
    for (int i = 0; i < rank; ++i) dims[static_cast<size_t>(i)] = get_u32(is);
    if (name == "__config__") {
      std::string text(static_cast<size_t>(shape_numel(dims)), '\0');
      if (!is.read(text.data(), static_cast<std::streamsize>(text.size())))
        throw FormatError("truncated checkpoint");
      config_text = std::move(text);
      continue;
    }
    Tensor t(dims);
    for (int64_t i = 0; i < t.numel(); ++i) {
      uint32_t bits = get_u32(is);
      float f;
      std::memcpy(&f, &bits, 4);
      t.at(i) = f;
    }
    records.emplace(std::move(name), std::move(t));
  }
  if (config_text.empty()) throw FormatError("checkpoint missing __config__ record");

  bool fused = false;
  ModelConfig cfg = config_from_text(config_text, &fused);
  Model m = Model::init(cfg, 0);
  m.fused = fused;
  const bool sdsa = cfg.variant == AttentionVariant::kSdsa3;
  auto take = [&records](const std::string& name) -> Tensor {
    auto it = records.find(name);
    if (it == records.end())
      throw FormatError("checkpoint missing record '" + name + "'");
    Tensor t = std::move(it->second);
    records.erase(it);
    return t;
  };
  m.w_in = take("input_proj.weight");
  for (size_t i = 0; i < m.blocks.size(); ++i) {
    Block& b = m.blocks[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    if (fused && !sdsa) {
      b.fused.w_qk = take(p + "attn.w_qk");
      b.fused.heads = cfg.heads;
      b.attn.w_q = Tensor();
      b.attn.w_k = Tensor();
    } else {
      b.attn.w_q = take(p + "attn.w_q");
      b.attn.w_k = take(p + "attn.w_k");
    }
    b.attn.w_v = take(p + "attn.w_v");
    b.attn.w_out = take(p + "attn.w_out");
    b.w1 = take(p + "mlp.w1");
    b.w2 = take(p + "mlp.w2");
    load_state(b.states.attn_entry, take(p + "sn.attn_entry"), cfg.neuron, fused);
    if (sdsa) {
      load_state(b.states.q, take(p + "sn.q"), cfg.neuron, fused);
      load_state(b.states.k, take(p + "sn.k"), cfg.neuron, fused);
    }
    load_state(b.states.v, take(p + "sn.v"), cfg.neuron, fused);
    load_state(b.states.attn_out, take(p + "sn.attn_out"), cfg.neuron, fused);
    load_state(b.states.mlp_entry, take(p + "sn.mlp_entry"), cfg.neuron, fused);
    load_state(b.states.mlp_hidden, take(p + "sn.mlp_hidden"), cfg.neuron, fused);
  }
  m.w_head = take("head.weight");
  m.b_head = take("head.bias");
  if (!records.empty())
    throw FormatError("unexpected checkpoint record '" + records.begin()->first + "'");
  return m;
}

}  // namespace imls
