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
// The sequence classifier: input projection, a stack of blocks (attention
// plus channel MLP, both behind residual connections on a real-valued
// stream), mean pooling over valid frames and a linear head. Three forward
// routes share the arithmetic: the per-utterance dense forward, the batched
// tape forward for training, and the event-driven spike forward for fused
// models.

#ifndef IMLS_MODEL_HPP
#define IMLS_MODEL_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "attention.hpp"
#include "neuron.hpp"
#include "tape.hpp"
#include "tensor.hpp"

namespace imls {

enum class AttentionVariant {
  kHdRepssaS,
  kHdRepssaL,
  kRepssaS,
  kRepssaL,
  kSdsa3,
};

const char* variant_name(AttentionVariant v);
AttentionVariant variant_from_name(const std::string& name);
bool variant_uses_mask(AttentionVariant v);
bool variant_is_softmax(AttentionVariant v);

struct ModelConfig {
  int num_layers = 2;
  int d = 32;
  int heads = 4;
  int d_ff = 128;
  AttentionVariant variant = AttentionVariant::kHdRepssaS;
  int num_classes = 4;
  int input_dim = 16;
  NeuronConfig neuron;  // carries the time window T

  void validate() const;
};

// Threshold states of every neuron site in one block. q/k exist only for
// the SDSA-3 variant.
struct BlockStates {
  ThresholdState attn_entry, q, k, v, attn_out, mlp_entry, mlp_hidden;
};

struct Block {
  AttentionParams attn;
  FusedAttentionParams fused;  // populated by reparameterize()
  Tensor w1, w2;
  BlockStates states;
};

// Firing statistics for every site of a model, filled during forwards that
// request recording. Site order is fixed: per layer attn.entry, (q, k,)
// v, attn.out, mlp.entry, mlp.hidden.
struct FiringRecord {
  std::vector<SpikeStats> sites;

  const SpikeStats* find(const std::string& name) const;
};

// Per-product tallies of an event-driven forward.
struct SpikeRunStats {
  struct Product {
    std::string name;
    int64_t flops = 0;      // dense MAC-equivalent of the product
    int64_t events = 0;     // accumulate events actually executed
    int64_t spike_sum = 0;  // spikes feeding the product
    int64_t numel = 0;      // spike-operand element count
    int T = 1;
    bool spike_fed = true;
    double snn_energy_nj = 0.0;  // rate-route energy, accumulated per forward
  };
  std::vector<Product> products;
  int64_t total_events = 0;
  // Binary timestep planes materialized by spike-train expansion; grows
  // linearly in T while the training tape does not.
  int64_t timestep_states = 0;

  Product& product(const std::string& name, bool spike_fed, int T);
};

class Model {
 public:
  ModelConfig cfg;
  Tensor w_in;  // [C_in x D], no bias: zero features stay zero
  std::vector<Block> blocks;
  Tensor w_head, b_head;
  bool fused = false;

  static Model init(const ModelConfig& cfg, uint64_t seed);

  // Dense forward for one utterance [L x C_in]; logits [num_classes].
  // Uses factored weights until reparameterize(), fused afterwards.
  Tensor forward(const Tensor& features, int64_t valid_len,
                 FiringRecord* rec = nullptr) const;

  // Records the batched training graph; returns the loss node.
  int tape_forward(Tape& tape, const Tensor& features,
                   const std::vector<int64_t>& valid,
                   const std::vector<int>& labels);
  // Same graph up to the logits node (no loss), for gradient-check probes.
  int tape_logits(Tape& tape, const Tensor& features,
                  const std::vector<int64_t>& valid);

  // Fuses W_Q W_K^T per head, freezes threshold statistics. Errors if
  // already fused.
  void reparameterize();

  // Event-driven forward on a fused model: every spike-weight product runs
  // as accumulate-only events. Errors on an unfused model.
  Tensor spike_driven_forward(const Tensor& features, int64_t valid_len,
                              SpikeRunStats* stats = nullptr,
                              FiringRecord* rec = nullptr) const;

  // Per-head attention maps [H x N x N] at a 1-based layer: post-softmax
  // probabilities for softmax variants, decay-masked logits for linear ones,
  // raw spike-attention scores for SDSA-3.
  Tensor attention_maps(const Tensor& features, int64_t valid_len,
                        int layer_index) const;

  FiringRecord make_recorder() const;
  std::vector<Tensor*> parameters();  // registration order is fixed
  int64_t parameter_count() const;
  std::vector<std::string> site_names() const;

  int time_window() const { return cfg.neuron.T; }
};

// Checkpoint format: magic "IMLS", u32 LE version, u32 LE record count,
// then records of (u16 LE name length, name bytes, u8 rank, rank x u32 LE
// dims, row-major f32 LE payload). The single record named "__config__"
// instead carries raw UTF-8 key=value text; its rank-1 extent is the byte
// length.
void save_checkpoint(const Model& model, const std::string& path);
Model load_checkpoint(const std::string& path);

std::string config_to_text(const ModelConfig& cfg, bool fused);
ModelConfig config_from_text(const std::string& text, bool* fused_out);

}  // namespace imls

#endif  // IMLS_MODEL_HPP
