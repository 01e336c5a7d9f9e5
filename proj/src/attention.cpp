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

#include "attention.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace imls {

namespace {

Tensor slice_cols(const Tensor& a, int64_t c0, int64_t c1) {
  const int64_t n = a.dim(0), m = a.dim(1), w = c1 - c0;
  Tensor out({n, w});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < w; ++j) out.at(i, j) = a.at(i, c0 + j);
  return out;
}

void write_cols(Tensor& dst, const Tensor& block, int64_t c0) {
  for (int64_t i = 0; i < block.dim(0); ++i)
    for (int64_t j = 0; j < block.dim(1); ++j) dst.at(i, c0 + j) = block.at(i, j);
}

Tensor head_slice(const Tensor& w_qk, int64_t h) {
  const int64_t d = w_qk.dim(1);
  Tensor out({d, d});
  const float* src = w_qk.data() + h * d * d;
  std::copy(src, src + d * d, out.data());
  return out;
}

}  // namespace

void AttentionParams::validate() const {
  const int64_t d = w_q.dim(0);
  for (const Tensor* w : {&w_q, &w_k, &w_v, &w_out})
    if (w->rank() != 2 || w->dim(0) != d || w->dim(1) != d)
      throw DimensionError("attention weights must all be [D x D]");
  if (heads < 1 || d % heads != 0)
    throw DimensionError("model width " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) + " heads");
}

double hdm_phi(int layer_index) {
  return 1.0 - std::exp2(-5.0 - static_cast<double>(layer_index));
}

DecayMask build_hdm(int64_t seq_len, int layer_index) {
  if (seq_len < 1) throw DimensionError("decay mask needs seq_len >= 1");
  if (layer_index < 1) throw DimensionError("decay mask layer index is 1-based");
  DecayMask mask;
  mask.layer_index = layer_index;
  mask.seq_len = seq_len;
  const double phi = hdm_phi(layer_index);
  std::vector<double> pow_table(static_cast<size_t>(seq_len));
  pow_table[0] = 1.0;
  for (int64_t d = 1; d < seq_len; ++d) pow_table[static_cast<size_t>(d)] = pow_table[static_cast<size_t>(d - 1)] * phi;
  mask.values.resize(static_cast<size_t>(seq_len * seq_len));
  for (int64_t i = 0; i < seq_len; ++i)
    for (int64_t j = 0; j < seq_len; ++j)
      mask.values[static_cast<size_t>(i * seq_len + j)] = pow_table[static_cast<size_t>(std::llabs(i - j))];
  return mask;
}

Tensor DecayMask::to_tensor() const {
  Tensor t({seq_len, seq_len});
  for (int64_t i = 0; i < seq_len * seq_len; ++i)
    t.at(i) = static_cast<float>(values[static_cast<size_t>(i)]);
  return t;
}

SpikeTensor NeuronSite::fire(const Tensor& x) const {
  if (x.rank() != 2) throw DimensionError("NeuronSite::fire expects [N x C]");
  Tensor wrapped({1, x.dim(0), x.dim(1)}, x.values());
  ThresholdState scratch = *state;  // inference: statistics untouched
  ImlsResult r = imls_fire(wrapped, scratch, *cfg, /*training=*/false, {});
  SpikeTensor s(x.dims(), cfg->T);
  s.levels = std::move(r.spikes.levels);
  if (sink) {
    const int64_t c = x.dim(1);
    if (sink->channel_sum.empty())
      sink->channel_sum.assign(static_cast<size_t>(c), 0);
    sink->T = cfg->T;
    sink->numel += s.numel();
    for (int64_t i = 0; i < s.numel(); ++i) {
      sink->spike_sum += s.levels[static_cast<size_t>(i)];
      sink->channel_sum[static_cast<size_t>(i % c)] += s.levels[static_cast<size_t>(i)];
    }
  }
  return s;
}

FusedAttentionParams rep_fuse(const AttentionParams& p) {
  p.validate();
  const int64_t d = p.dim(), dk = p.head_dim();
  FusedAttentionParams f;
  f.heads = p.heads;
  f.w_v = p.w_v;
  f.w_out = p.w_out;
  f.w_qk = Tensor({p.heads, d, d});
  for (int64_t h = 0; h < p.heads; ++h) {
    Tensor wq_h = slice_cols(p.w_q, h * dk, (h + 1) * dk);
    Tensor wk_h = slice_cols(p.w_k, h * dk, (h + 1) * dk);
    Tensor fused = matmul_nt(wq_h, wk_h);  // [D x D]
    std::copy(fused.data(), fused.data() + d * d, f.w_qk.data() + h * d * d);
  }
  return f;
}

Tensor attn_logits(const SpikeTensor& x_s, const AttentionParams& p,
                   const FusedAttentionParams* fused, LogitMode mode) {
  const int64_t n = x_s.dims[0];
  const int64_t d = p.dim(), dk = p.head_dim();
  const int64_t heads = p.heads;
  Tensor xs = x_s.to_tensor();
  Tensor logits({heads, n, n});
  if (mode == LogitMode::kFactored) {
    Tensor q = matmul(xs, p.w_q);
    Tensor k = matmul(xs, p.w_k);
    for (int64_t h = 0; h < heads; ++h) {
      Tensor a = matmul_nt(slice_cols(q, h * dk, (h + 1) * dk),
                           slice_cols(k, h * dk, (h + 1) * dk));
      std::copy(a.data(), a.data() + n * n, logits.data() + h * n * n);
    }
  } else {
    if (!fused) throw StateError("fused logits requested without fused weights");
    for (int64_t h = 0; h < heads; ++h) {
      Tensor m = matmul(xs, head_slice(fused->w_qk, h));
      Tensor a = matmul_nt(m, xs);
      std::copy(a.data(), a.data() + n * n, logits.data() + h * n * n);
    }
  }
  (void)d;
  return logits;
}

void attn_mask_mul(Tensor& a_head, const DecayMask& mask) {
  const int64_t n = a_head.dim(0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < n; ++j)
      a_head.at(i, j) = static_cast<float>(
          static_cast<double>(a_head.at(i, j)) *
          static_cast<double>(static_cast<float>(mask.at(i, j))));
}

void attn_scale(Tensor& a, double c) {
  for (int64_t i = 0; i < a.numel(); ++i)
    a.at(i) = static_cast<float>(static_cast<double>(a.at(i)) * c);
}

void attn_pad_keys(Tensor& a_head, int64_t valid_len) {
  const int64_t n = a_head.dim(1);
  if (valid_len >= n) return;
  for (int64_t i = 0; i < a_head.dim(0); ++i)
    for (int64_t j = valid_len; j < n; ++j)
      a_head.at(i, j) = -std::numeric_limits<float>::infinity();
}

SpikeTensor transpose_spikes(const SpikeTensor& s) {
  if (s.dims.size() != 2) throw DimensionError("transpose_spikes expects rank 2");
  const int64_t n = s.dims[0], m = s.dims[1];
  SpikeTensor t({m, n}, s.T);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j)
      t.levels[static_cast<size_t>(j * n + i)] = s.levels[static_cast<size_t>(i * m + j)];
  return t;
}

namespace {

Tensor head_of(const Tensor& logits, int64_t h) {
  const int64_t n = logits.dim(1);
  Tensor a({n, n});
  std::copy(logits.data() + h * n * n, logits.data() + (h + 1) * n * n, a.data());
  return a;
}

void zero_padded_rows(SpikeTensor& s, int64_t valid_len) {
  const int64_t n = s.dims[0], c = s.dims[1];
  for (int64_t i = valid_len; i < n; ++i)
    std::fill(s.levels.begin() + i * c, s.levels.begin() + (i + 1) * c, uint8_t{0});
}

}  // namespace

Tensor hd_repssa_s(const SpikeTensor& x_s, const AttentionParams& p,
                   const FusedAttentionParams* fused, LogitMode mode,
                   const DecayMask* mask, const AttentionNeurons& sn,
                   int64_t valid_len) {
  const int64_t n = x_s.dims[0], d = p.dim(), dk = p.head_dim();
  if (valid_len <= 0 || valid_len > n)
    throw DimensionError("softmax attention with no unmasked keys");
  if (mask && mask->seq_len != n)
    throw DimensionError("decay mask built for different sequence length");
  Tensor xs = x_s.to_tensor();
  Tensor v = matmul(xs, p.w_v);
  SpikeTensor v_s = sn.v->fire(v);
  Tensor v_t = v_s.to_tensor();

  Tensor logits = attn_logits(x_s, p, fused, mode);
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Tensor out({n, d});
  for (int64_t h = 0; h < p.heads; ++h) {
    Tensor a = head_of(logits, h);
    if (mask) attn_mask_mul(a, *mask);
    attn_scale(a, inv_sqrt_dk);
    attn_pad_keys(a, valid_len);
    Tensor prob = softmax_rows(a);
    Tensor o = matmul(prob, slice_cols(v_t, h * dk, (h + 1) * dk));
    write_cols(out, o, h * dk);
  }
  SpikeTensor s = sn.out->fire(out);
  return matmul(s.to_tensor(), p.w_out);
}

Tensor hd_repssa_l(const SpikeTensor& x_s, const AttentionParams& p,
                   const FusedAttentionParams* fused, LogitMode mode,
                   const DecayMask* mask, const AttentionNeurons& sn,
                   int64_t valid_len) {
  const int64_t n = x_s.dims[0], d = p.dim(), dk = p.head_dim();
  if (mask && mask->seq_len != n)
    throw DimensionError("decay mask built for different sequence length");
  Tensor xs = x_s.to_tensor();
  Tensor v = matmul(xs, p.w_v);
  SpikeTensor v_s = sn.v->fire(v);
  zero_padded_rows(v_s, valid_len);
  Tensor v_t = v_s.to_tensor();

  Tensor logits = attn_logits(x_s, p, fused, mode);
  Tensor out({n, d});
  for (int64_t h = 0; h < p.heads; ++h) {
    Tensor a = head_of(logits, h);
    if (mask) attn_mask_mul(a, *mask);
    Tensor o = matmul(a, slice_cols(v_t, h * dk, (h + 1) * dk));
    write_cols(out, o, h * dk);
  }
  SpikeTensor s = sn.out->fire(out);
  return matmul(s.to_tensor(), p.w_out);
}

Tensor sdsa3(const SpikeTensor& x_s, const AttentionParams& p,
             const AttentionNeurons& sn, int64_t valid_len) {
  const int64_t n = x_s.dims[0], d = p.dim(), dk = p.head_dim();
  Tensor xs = x_s.to_tensor();
  SpikeTensor q_s = sn.q->fire(matmul(xs, p.w_q));
  SpikeTensor k_s = sn.k->fire(matmul(xs, p.w_k));
  SpikeTensor v_s = sn.v->fire(matmul(xs, p.w_v));
  zero_padded_rows(k_s, valid_len);
  zero_padded_rows(v_s, valid_len);
  Tensor q_t = q_s.to_tensor(), k_t = k_s.to_tensor(), v_t = v_s.to_tensor();

  Tensor out({n, d});
  for (int64_t h = 0; h < p.heads; ++h) {
    Tensor kv = matmul_tn(slice_cols(k_t, h * dk, (h + 1) * dk),
                          slice_cols(v_t, h * dk, (h + 1) * dk));
    Tensor o = matmul(slice_cols(q_t, h * dk, (h + 1) * dk), kv);
    write_cols(out, o, h * dk);
  }
  SpikeTensor s = sn.out->fire(out);
  return matmul(s.to_tensor(), p.w_out);
}

Tensor channel_mlp(const Tensor& x, const Tensor& w1, const Tensor& w2,
                   const NeuronSite& entry, const NeuronSite& hidden) {
  SpikeTensor s1 = entry.fire(x);
  Tensor h = matmul(s1.to_tensor(), w1);
  SpikeTensor s2 = hidden.fire(h);
  return matmul(s2.to_tensor(), w2);
}

}  // namespace imls
