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
// Spiking self-attention variants. RepSSA computes continuous-valued
// attention logits from factored weights during training and from the fused
// per-head product W_Q W_K^T at inference; the hierarchical decay mask
// biases layers from local to global interaction ranges. SDSA-3 is the
// all-spike linear-attention baseline. These are single-utterance forward
// primitives; the training path records the same math on the tape.

#ifndef IMLS_ATTENTION_HPP
#define IMLS_ATTENTION_HPP

#include <string>
#include <vector>

#include "neuron.hpp"
#include "tensor.hpp"

namespace imls {

struct AttentionParams {
  Tensor w_q, w_k, w_v, w_out;  // each [D x D]
  int heads = 1;

  // Width from w_v: w_q/w_k are dropped once the model is reparameterized.
  int64_t dim() const { return w_v.dim(0); }
  int64_t head_dim() const { return dim() / heads; }
  void validate() const;
};

struct FusedAttentionParams {
  Tensor w_qk;  // [H x D x D], per-head W_Q^h (W_K^h)^T
  Tensor w_v, w_out;
  int heads = 1;

  int64_t dim() const { return w_v.dim(0); }
};

// Per-layer decay mask H_{i,j}(l) = phi(l)^{|i-j|}, phi(l) = 1 - 2^(-5-l).
// Values kept in double so exactness checks and CSV output are not limited
// by storage precision.
struct DecayMask {
  int layer_index = 1;  // 1-based
  int64_t seq_len = 0;
  std::vector<double> values;  // row-major [seq_len x seq_len]

  double at(int64_t i, int64_t j) const { return values[static_cast<size_t>(i * seq_len + j)]; }
  Tensor to_tensor() const;
};

double hdm_phi(int layer_index);
DecayMask build_hdm(int64_t seq_len, int layer_index);

// Accumulated firing activity of one neuron site over a run.
struct SpikeStats {
  std::string name;
  int64_t spike_sum = 0;
  int64_t numel = 0;
  int T = 1;
  std::vector<int64_t> channel_sum;

  double rate() const {
    return numel > 0 ? static_cast<double>(spike_sum) /
                           (static_cast<double>(numel) * T)
                     : 0.0;
  }
};

// A view of one spiking-neuron site: threshold state plus shared config.
// Module-level forwards fire in inference mode (statistics untouched); the
// optional sink collects firing-rate statistics.
struct NeuronSite {
  const ThresholdState* state = nullptr;
  const NeuronConfig* cfg = nullptr;
  SpikeStats* sink = nullptr;

  SpikeTensor fire(const Tensor& x) const;
};

// Neuron sites used inside one attention module.
struct AttentionNeurons {
  NeuronSite* q = nullptr;  // SDSA-3 only
  NeuronSite* k = nullptr;  // SDSA-3 only
  NeuronSite* v = nullptr;
  NeuronSite* out = nullptr;
};

FusedAttentionParams rep_fuse(const AttentionParams& p);

enum class LogitMode { kFactored, kFused };

// The separate rounding stages of the attention core, shared by the dense,
// tape and event-driven paths so all three agree bitwise where they overlap.
void attn_mask_mul(Tensor& a_head, const DecayMask& mask);
void attn_scale(Tensor& a, double c);
void attn_pad_keys(Tensor& a_head, int64_t valid_len);
SpikeTensor transpose_spikes(const SpikeTensor& s);

// Per-head attention logits [H x N x N] from spike input [N x D].
Tensor attn_logits(const SpikeTensor& x_s, const AttentionParams& p,
                   const FusedAttentionParams* fused, LogitMode mode);

// Softmax RepSSA with the decay mask: A' = A .* H, then
// SN(softmax(A'/sqrt(d_k)) V_s) W_out. Padded key positions receive -inf
// logits before the softmax. Pass no mask for the plain RepSSA variant.
Tensor hd_repssa_s(const SpikeTensor& x_s, const AttentionParams& p,
                   const FusedAttentionParams* fused, LogitMode mode,
                   const DecayMask* mask, const AttentionNeurons& sn,
                   int64_t valid_len);

// Linear RepSSA: SN((A .* H) V_s) W_out, no softmax or scaling. Padded keys
// contribute zero because their V_s rows are zeroed.
Tensor hd_repssa_l(const SpikeTensor& x_s, const AttentionParams& p,
                   const FusedAttentionParams* fused, LogitMode mode,
                   const DecayMask* mask, const AttentionNeurons& sn,
                   int64_t valid_len);

// SDSA-3 baseline: SN(Q_s (K_s^T V_s)) W_out with all-spike operands, per
// head, batch norm omitted. Padded K_s/V_s rows are zeroed.
Tensor sdsa3(const SpikeTensor& x_s, const AttentionParams& p,
             const AttentionNeurons& sn, int64_t valid_len);

// Two-layer spiking MLP: SN(SN(X) W1) W2.
Tensor channel_mlp(const Tensor& x, const Tensor& w1, const Tensor& w2,
                   const NeuronSite& entry, const NeuronSite& hidden);

}  // namespace imls

#endif  // IMLS_ATTENTION_HPP
