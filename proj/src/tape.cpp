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

#include "tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace imls {

namespace {

// Leading extents ahead of the trailing two dims, e.g. B*H for [B,H,N,M].
int64_t leading(const Tensor& t) {
  int64_t n = 1;
  for (int64_t i = 0; i + 2 < t.rank(); ++i) n *= t.dim(static_cast<int>(i));
  return n;
}

Tensor block_of(const Tensor& t, int64_t idx, int64_t rows, int64_t cols) {
  Tensor out({rows, cols});
  const float* src = t.data() + idx * rows * cols;
  std::copy(src, src + rows * cols, out.data());
  return out;
}

void write_block(Tensor& t, const Tensor& block, int64_t idx) {
  std::copy(block.data(), block.data() + block.numel(),
            t.data() + idx * block.numel());
}

void add_block(Tensor& t, const Tensor& block, int64_t idx) {
  float* dst = t.data() + idx * block.numel();
  for (int64_t i = 0; i < block.numel(); ++i) dst[i] += block.at(i);
}

void add_into(Tensor& dst, const Tensor& src) {
  for (int64_t i = 0; i < dst.numel(); ++i) dst.at(i) += src.at(i);
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::input(Tensor v) {
  Node n;
  n.op = Op::kInput;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::param(Tensor* p) {
  for (const auto& [ptr, id] : params_)
    if (ptr == p) return id;
  Node n;
  n.op = Op::kParam;
  n.value = *p;
  n.param = p;
  int id = push(std::move(n));
  params_.emplace_back(p, id);
  return id;
}

int Tape::matmul(int a, int w) {
  const Tensor& av = at(a).value;
  const Tensor& wv = at(w).value;
  if (wv.rank() != 2) throw DimensionError("tape matmul weight must be rank 2");
  const int64_t cols = av.dim(static_cast<int>(av.rank()) - 1);
  if (cols != wv.dim(0)) throw DimensionError("tape matmul inner extents differ");
  const int64_t rows = av.dim(static_cast<int>(av.rank()) - 2);
  const int64_t lead = leading(av);
  Shape out_dims = av.dims();
  out_dims.back() = wv.dim(1);
  Node n;
  n.op = Op::kMatmul;
  n.a = a;
  n.b = w;
  n.value = Tensor(out_dims);
  for (int64_t l = 0; l < lead; ++l)
    write_block(n.value, imls::matmul(block_of(av, l, rows, cols), wv), l);
  return push(std::move(n));
}

int Tape::bmm(int a, int b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  const int64_t lead = leading(av);
  const int64_t nr = av.dim(static_cast<int>(av.rank()) - 2);
  const int64_t nk = av.dim(static_cast<int>(av.rank()) - 1);
  const int64_t mc = bv.dim(static_cast<int>(bv.rank()) - 1);
  if (leading(bv) != lead || bv.dim(static_cast<int>(bv.rank()) - 2) != nk)
    throw DimensionError("tape bmm shape mismatch");
  Shape out_dims = av.dims();
  out_dims.back() = mc;
  Node n;
  n.op = Op::kBmm;
  n.a = a;
  n.b = b;
  n.value = Tensor(out_dims);
  for (int64_t l = 0; l < lead; ++l)
    write_block(n.value,
                imls::matmul(block_of(av, l, nr, nk), block_of(bv, l, nk, mc)), l);
  return push(std::move(n));
}

int Tape::bmm_nt(int a, int b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  const int64_t lead = leading(av);
  const int64_t nr = av.dim(static_cast<int>(av.rank()) - 2);
  const int64_t nk = av.dim(static_cast<int>(av.rank()) - 1);
  const int64_t mr = bv.dim(static_cast<int>(bv.rank()) - 2);
  if (leading(bv) != lead || bv.dim(static_cast<int>(bv.rank()) - 1) != nk)
    throw DimensionError("tape bmm_nt shape mismatch");
  Shape out_dims = av.dims();
  out_dims[out_dims.size() - 1] = mr;
  Node n;
  n.op = Op::kBmmNT;
  n.a = a;
  n.b = b;
  n.value = Tensor(out_dims);
  for (int64_t l = 0; l < lead; ++l)
    write_block(n.value,
                imls::matmul_nt(block_of(av, l, nr, nk), block_of(bv, l, mr, nk)), l);
  return push(std::move(n));
}

int Tape::bmm_tn(int a, int b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  const int64_t lead = leading(av);
  const int64_t nr = av.dim(static_cast<int>(av.rank()) - 2);
  const int64_t nk = av.dim(static_cast<int>(av.rank()) - 1);
  const int64_t mc = bv.dim(static_cast<int>(bv.rank()) - 1);
  if (leading(bv) != lead || bv.dim(static_cast<int>(bv.rank()) - 2) != nr)
    throw DimensionError("tape bmm_tn shape mismatch");
  Shape out_dims = av.dims();
  out_dims[out_dims.size() - 2] = nk;
  out_dims[out_dims.size() - 1] = mc;
  Node n;
  n.op = Op::kBmmTN;
  n.a = a;
  n.b = b;
  n.value = Tensor(out_dims);
  for (int64_t l = 0; l < lead; ++l)
    write_block(n.value,
                imls::matmul_tn(block_of(av, l, nr, nk), block_of(bv, l, nr, mc)), l);
  return push(std::move(n));
}

int Tape::add(int a, int b) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(b).value;
  if (!av.same_shape(bv)) throw DimensionError("tape add shape mismatch");
  Node n;
  n.op = Op::kAdd;
  n.a = a;
  n.b = b;
  n.value = av;
  add_into(n.value, bv);
  return push(std::move(n));
}

int Tape::scale(int a, double c) {
  Node n;
  n.op = Op::kScale;
  n.a = a;
  n.scalar = c;
  n.value = at(a).value;
  for (int64_t i = 0; i < n.value.numel(); ++i)
    n.value.at(i) = static_cast<float>(static_cast<double>(n.value.at(i)) * c);
  return push(std::move(n));
}

int Tape::mul_const(int a, Tensor c) {
  const Tensor& av = at(a).value;
  if (!av.same_shape(c)) throw DimensionError("tape mul_const shape mismatch");
  Node n;
  n.op = Op::kMulConst;
  n.a = a;
  n.value = Tensor(av.dims());
  for (int64_t i = 0; i < av.numel(); ++i)
    n.value.at(i) = static_cast<float>(static_cast<double>(av.at(i)) *
                                       static_cast<double>(c.at(i)));
  n.constant = std::move(c);
  return push(std::move(n));
}

int Tape::pad_keys(int a, std::vector<int64_t> valid) {
  const Tensor& av = at(a).value;
  if (av.rank() != 4) throw DimensionError("pad_keys expects [B,H,N,N]");
  const int64_t b = av.dim(0), h = av.dim(1), nr = av.dim(2), nc = av.dim(3);
  if (static_cast<int64_t>(valid.size()) != b)
    throw DimensionError("pad_keys valid length count mismatch");
  Node n;
  n.op = Op::kPadKeys;
  n.a = a;
  n.value = av;
  const float ninf = -std::numeric_limits<float>::infinity();
  for (int64_t bi = 0; bi < b; ++bi) {
    const int64_t len = valid[static_cast<size_t>(bi)];
    if (len <= 0) throw DimensionError("pad_keys: item with no valid keys");
    if (len >= nc) continue;
    for (int64_t hi = 0; hi < h; ++hi)
      for (int64_t r = 0; r < nr; ++r) {
        float* row = n.value.data() + ((bi * h + hi) * nr + r) * nc;
        for (int64_t c = len; c < nc; ++c) row[c] = ninf;
      }
  }
  n.valid = std::move(valid);
  return push(std::move(n));
}

int Tape::zero_pad_rows(int a, std::vector<int64_t> valid) {
  const Tensor& av = at(a).value;
  if (av.rank() != 3) throw DimensionError("zero_pad_rows expects [B,L,C]");
  const int64_t b = av.dim(0), rows = av.dim(1), c = av.dim(2);
  if (static_cast<int64_t>(valid.size()) != b)
    throw DimensionError("zero_pad_rows valid length count mismatch");
  Node n;
  n.op = Op::kZeroPadRows;
  n.a = a;
  n.value = av;
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t r = valid[static_cast<size_t>(bi)]; r < rows; ++r)
      std::fill(n.value.data() + (bi * rows + r) * c,
                n.value.data() + (bi * rows + r + 1) * c, 0.0f);
  n.valid = std::move(valid);
  return push(std::move(n));
}

int Tape::softmax(int a) {
  Node n;
  n.op = Op::kSoftmax;
  n.a = a;
  n.value = softmax_rows(at(a).value);
  return push(std::move(n));
}

int Tape::imls(int a, ThresholdState* site, const NeuronConfig* cfg,
               std::vector<int64_t> valid) {
  Node n;
  n.op = Op::kImls;
  n.a = a;
  if (opt_.relaxed) {
    RelaxedImlsResult r = imls_fire_relaxed(at(a).value, *site, *cfg);
    n.value = std::move(r.value);
    n.aux = std::move(r.surrogate);
    n.active = std::move(r.active);
  } else {
    ImlsResult r = imls_fire(at(a).value, *site, *cfg, opt_.training, valid);
    n.value = r.spikes.to_tensor();
    n.aux = std::move(r.surrogate);
  }
  n.valid = std::move(valid);
  return push(std::move(n));
}

int Tape::split_heads(int a, int heads) {
  const Tensor& av = at(a).value;
  if (av.rank() != 3) throw DimensionError("split_heads expects [B,N,D]");
  const int64_t b = av.dim(0), nr = av.dim(1), d = av.dim(2);
  if (d % heads != 0) throw DimensionError("split_heads: D not divisible by H");
  const int64_t dk = d / heads;
  Node n;
  n.op = Op::kSplitHeads;
  n.a = a;
  n.heads = heads;
  n.value = Tensor({b, heads, nr, dk});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t r = 0; r < nr; ++r) {
        const float* src = av.data() + (bi * nr + r) * d + h * dk;
        float* dst = n.value.data() + (((bi * heads + h) * nr) + r) * dk;
        std::copy(src, src + dk, dst);
      }
  return push(std::move(n));
}

int Tape::merge_heads(int a) {
  const Tensor& av = at(a).value;
  if (av.rank() != 4) throw DimensionError("merge_heads expects [B,H,N,Dk]");
  const int64_t b = av.dim(0), h = av.dim(1), nr = av.dim(2), dk = av.dim(3);
  Node n;
  n.op = Op::kMergeHeads;
  n.a = a;
  n.heads = static_cast<int>(h);
  n.value = Tensor({b, nr, h * dk});
  for (int64_t bi = 0; bi < b; ++bi)
    for (int64_t hi = 0; hi < h; ++hi)
      for (int64_t r = 0; r < nr; ++r) {
        const float* src = av.data() + (((bi * h + hi) * nr) + r) * dk;
        float* dst = n.value.data() + (bi * nr + r) * (h * dk) + hi * dk;
        std::copy(src, src + dk, dst);
      }
  return push(std::move(n));
}

int Tape::mean_pool_valid(int a, std::vector<int64_t> valid) {
  const Tensor& av = at(a).value;
  if (av.rank() != 3) throw DimensionError("mean_pool_valid expects [B,L,D]");
  const int64_t b = av.dim(0), rows = av.dim(1), d = av.dim(2);
  if (static_cast<int64_t>(valid.size()) != b)
    throw DimensionError("mean_pool_valid valid length count mismatch");
  Node n;
  n.op = Op::kMeanPool;
  n.a = a;
  n.value = Tensor({b, d});
  std::vector<double> acc(static_cast<size_t>(d));
  for (int64_t bi = 0; bi < b; ++bi) {
    const int64_t len = valid[static_cast<size_t>(bi)];
    if (len < 1 || len > rows) throw DimensionError("mean_pool_valid bad length");
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t r = 0; r < len; ++r) {
      const float* row = av.data() + (bi * rows + r) * d;
      for (int64_t j = 0; j < d; ++j) acc[static_cast<size_t>(j)] += row[j];
    }
    for (int64_t j = 0; j < d; ++j)
      n.value.at(bi, j) = static_cast<float>(acc[static_cast<size_t>(j)] / static_cast<double>(len));
  }
  n.valid = std::move(valid);
  return push(std::move(n));
}

int Tape::add_bias(int a, int bias) {
  const Tensor& av = at(a).value;
  const Tensor& bv = at(bias).value;
  if (bv.rank() != 1 || bv.dim(0) != av.dim(static_cast<int>(av.rank()) - 1))
    throw DimensionError("add_bias shape mismatch");
  Node n;
  n.op = Op::kAddBias;
  n.a = a;
  n.b = bias;
  n.value = av;
  const int64_t k = bv.dim(0);
  const int64_t rows = av.numel() / k;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < k; ++j) n.value.at(r * k + j) += bv.at(j);
  return push(std::move(n));
}

int Tape::cross_entropy(int logits, std::vector<int> labels) {
  const Tensor& lv = at(logits).value;
  if (lv.rank() != 2) throw DimensionError("cross_entropy expects [B,K]");
  const int64_t b = lv.dim(0), k = lv.dim(1);
  if (static_cast<int64_t>(labels.size()) != b)
    throw DimensionError("cross_entropy label count mismatch");
  Node n;
  n.op = Op::kCrossEntropy;
  n.a = logits;
  n.aux = Tensor({b, k});
  double total = 0.0;
  for (int64_t bi = 0; bi < b; ++bi) {
    const int y = labels[static_cast<size_t>(bi)];
    if (y < 0 || y >= k) throw DimensionError("cross_entropy label out of range");
    const float* row = lv.data() + bi * k;
    double mx = row[0];
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
    for (int64_t j = 0; j < k; ++j)
      n.aux.at(bi, j) = static_cast<float>(std::exp(static_cast<double>(row[j]) - mx) / sum);
    total += (mx + std::log(sum)) - static_cast<double>(row[y]);
  }
  loss_double_ = total / static_cast<double>(b);
  ran_forward_scalar_ = true;
  n.labels = std::move(labels);
  n.value = Tensor({1});
  n.value.at(0) = static_cast<float>(loss_double_);
  return push(std::move(n));
}

int Tape::half_sum_squares(int a) {
  const Tensor& av = at(a).value;
  Node n;
  n.op = Op::kHalfSumSquares;
  n.a = a;
  double total = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i)
    total += 0.5 * static_cast<double>(av.at(i)) * static_cast<double>(av.at(i));
  loss_double_ = total;
  ran_forward_scalar_ = true;
  n.value = Tensor({1});
  n.value.at(0) = static_cast<float>(total);
  return push(std::move(n));
}

int Tape::sum_all(int a) {
  const Tensor& av = at(a).value;
  Node n;
  n.op = Op::kSumAll;
  n.a = a;
  double total = 0.0;
  for (int64_t i = 0; i < av.numel(); ++i) total += static_cast<double>(av.at(i));
  loss_double_ = total;
  ran_forward_scalar_ = true;
  n.value = Tensor({1});
  n.value.at(0) = static_cast<float>(total);
  return push(std::move(n));
}

std::vector<std::vector<uint8_t>> Tape::imls_active_masks() const {
  std::vector<std::vector<uint8_t>> masks;
  for (const Node& n : nodes_)
    if (n.op == Op::kImls) masks.push_back(n.active);
  return masks;
}

std::vector<std::pair<Tensor*, Tensor>> Tape::backward(int loss_id) {
  if (!ran_forward_scalar_ || at(loss_id).value.numel() != 1)
    throw StateError("backward requires a recorded scalar forward");
  std::vector<Tensor> bar(nodes_.size());
  std::vector<uint8_t> touched(nodes_.size(), 0);
  auto grad_of = [&](int id) -> Tensor& {
    if (!touched[static_cast<size_t>(id)]) {
      bar[static_cast<size_t>(id)] = Tensor(at(id).value.dims());
      touched[static_cast<size_t>(id)] = 1;
    }
    return bar[static_cast<size_t>(id)];
  };
  grad_of(loss_id).at(0) = 1.0f;

  for (int id = loss_id; id >= 0; --id) {
    if (!touched[static_cast<size_t>(id)]) continue;
    const Node& n = at(id);
    const Tensor& g = bar[static_cast<size_t>(id)];
    switch (n.op) {
      case Op::kInput:
      case Op::kParam:
        break;
      case Op::kMatmul: {
        const Tensor& av = at(n.a).value;
        const Tensor& wv = at(n.b).value;
        const int64_t rows = av.dim(static_cast<int>(av.rank()) - 2);
        const int64_t cols = av.dim(static_cast<int>(av.rank()) - 1);
        const int64_t out_cols = wv.dim(1);
        const int64_t lead = leading(av);
        Tensor& ga = grad_of(n.a);
        Tensor& gw = grad_of(n.b);
        for (int64_t l = 0; l < lead; ++l) {
          Tensor gblock = block_of(g, l, rows, out_cols);
          Tensor ablock = block_of(av, l, rows, cols);
          add_block(ga, matmul_nt(gblock, wv), l);
          add_into(gw, matmul_tn(ablock, gblock));
        }
        break;
      }
      case Op::kBmm: {
        const Tensor& av = at(n.a).value;
        const Tensor& bv = at(n.b).value;
        const int64_t nr = av.dim(static_cast<int>(av.rank()) - 2);
        const int64_t nk = av.dim(static_cast<int>(av.rank()) - 1);
        const int64_t mc = bv.dim(static_cast<int>(bv.rank()) - 1);
        const int64_t lead = leading(av);
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (int64_t l = 0; l < lead; ++l) {
          Tensor gblock = block_of(g, l, nr, mc);
          add_block(ga, matmul_nt(gblock, block_of(bv, l, nk, mc)), l);
          add_block(gb, matmul_tn(block_of(av, l, nr, nk), gblock), l);
        }
        break;
      }
      case Op::kBmmNT: {
        const Tensor& av = at(n.a).value;
        const Tensor& bv = at(n.b).value;
        const int64_t nr = av.dim(static_cast<int>(av.rank()) - 2);
        const int64_t nk = av.dim(static_cast<int>(av.rank()) - 1);
        const int64_t mr = bv.dim(static_cast<int>(bv.rank()) - 2);
        const int64_t lead = leading(av);
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (int64_t l = 0; l < lead; ++l) {
          Tensor gblock = block_of(g, l, nr, mr);
          add_block(ga, imls::matmul(gblock, block_of(bv, l, mr, nk)), l);
          add_block(gb, matmul_tn(gblock, block_of(av, l, nr, nk)), l);
        }
        break;
      }
      case Op::kBmmTN: {
        const Tensor& av = at(n.a).value;
        const Tensor& bv = at(n.b).value;
        const int64_t nr = av.dim(static_cast<int>(av.rank()) - 2);
        const int64_t nk = av.dim(static_cast<int>(av.rank()) - 1);
        const int64_t mc = bv.dim(static_cast<int>(bv.rank()) - 1);
        const int64_t lead = leading(av);
        Tensor& ga = grad_of(n.a);
        Tensor& gb = grad_of(n.b);
        for (int64_t l = 0; l < lead; ++l) {
          Tensor gblock = block_of(g, l, nk, mc);
          add_block(ga, matmul_nt(block_of(bv, l, nr, mc), gblock), l);
          add_block(gb, imls::matmul(block_of(av, l, nr, nk), gblock), l);
        }
        break;
      }
      case Op::kAdd:
        add_into(grad_of(n.a), g);
        add_into(grad_of(n.b), g);
        break;
      case Op::kScale: {
        Tensor& ga = grad_of(n.a);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga.at(i) += static_cast<float>(static_cast<double>(g.at(i)) * n.scalar);
        break;
      }
      case Op::kMulConst: {
        Tensor& ga = grad_of(n.a);
        for (int64_t i = 0; i < g.numel(); ++i)
          ga.at(i) += g.at(i) * n.constant.at(i);
        break;
      }
      case Op::kPadKeys: {
        Tensor& ga = grad_of(n.a);
        const int64_t b = n.value.dim(0), h = n.value.dim(1);
        const int64_t nr = n.value.dim(2), nc = n.value.dim(3);
        for (int64_t bi = 0; bi < b; ++bi) {
          const int64_t len = std::min<int64_t>(n.valid[static_cast<size_t>(bi)], nc);
          for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t r = 0; r < nr; ++r) {
              const int64_t base = ((bi * h + hi) * nr + r) * nc;
              for (int64_t c = 0; c < len; ++c) ga.at(base + c) += g.at(base + c);
            }
        }
        break;
      }
      case Op::kZeroPadRows: {
        Tensor& ga = grad_of(n.a);
        const int64_t b = n.value.dim(0), rows = n.value.dim(1), c = n.value.dim(2);
        for (int64_t bi = 0; bi < b; ++bi) {
          const int64_t len = std::min<int64_t>(n.valid[static_cast<size_t>(bi)], rows);
          for (int64_t r = 0; r < len; ++r)
            for (int64_t j = 0; j < c; ++j)
              ga.at((bi * rows + r) * c + j) += g.at((bi * rows + r) * c + j);
        }
        break;
      }
      case Op::kSoftmax: {
        // dy/dx: (g - sum(g*y)) * y per row
        Tensor& ga = grad_of(n.a);
        const int64_t m = n.value.dim(static_cast<int>(n.value.rank()) - 1);
        const int64_t rows = n.value.numel() / m;
        for (int64_t r = 0; r < rows; ++r) {
          const float* y = n.value.data() + r * m;
          const float* gr = g.data() + r * m;
          double dot = 0.0;
          for (int64_t j = 0; j < m; ++j) dot += static_cast<double>(gr[j]) * y[j];
          for (int64_t j = 0; j < m; ++j)
            ga.at(r * m + j) += static_cast<float>((static_cast<double>(gr[j]) - dot) * y[j]);
        }
        break;
      }
      case Op::kImls: {
        Tensor& ga = grad_of(n.a);
        for (int64_t i = 0; i < g.numel(); ++i) ga.at(i) += g.at(i) * n.aux.at(i);
        break;
      }
      case Op::kSplitHeads: {
        Tensor& ga = grad_of(n.a);
        const int64_t b = n.value.dim(0), h = n.value.dim(1);
        const int64_t nr = n.value.dim(2), dk = n.value.dim(3);
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t r = 0; r < nr; ++r)
              for (int64_t j = 0; j < dk; ++j)
                ga.at((bi * nr + r) * (h * dk) + hi * dk + j) +=
                    g.at((((bi * h + hi) * nr) + r) * dk + j);
        break;
      }
      case Op::kMergeHeads: {
        Tensor& ga = grad_of(n.a);
        const int64_t b = n.value.dim(0), nr = n.value.dim(1), d = n.value.dim(2);
        const int64_t h = n.heads, dk = d / n.heads;
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t hi = 0; hi < h; ++hi)
            for (int64_t r = 0; r < nr; ++r)
              for (int64_t j = 0; j < dk; ++j)
                ga.at((((bi * h + hi) * nr) + r) * dk + j) +=
                    g.at((bi * nr + r) * d + hi * dk + j);
        break;
      }
      case Op::kMeanPool: {
        Tensor& ga = grad_of(n.a);
        const int64_t b = n.value.dim(0), d = n.value.dim(1);
        const int64_t rows = at(n.a).value.dim(1);
        for (int64_t bi = 0; bi < b; ++bi) {
          const int64_t len = n.valid[static_cast<size_t>(bi)];
          const float inv = static_cast<float>(1.0 / static_cast<double>(len));
          for (int64_t r = 0; r < len; ++r)
            for (int64_t j = 0; j < d; ++j)
              ga.at((bi * rows + r) * d + j) += g.at(bi * d + j) * inv;
        }
        break;
      }
      case Op::kAddBias: {
        add_into(grad_of(n.a), g);
        Tensor& gb = grad_of(n.b);
        const int64_t k = at(n.b).value.dim(0);
        const int64_t rows = g.numel() / k;
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < k; ++j) gb.at(j) += g.at(r * k + j);
        break;
      }
      case Op::kCrossEntropy: {
        Tensor& ga = grad_of(n.a);
        const int64_t b = n.aux.dim(0), k = n.aux.dim(1);
        const float gscale = g.at(0) / static_cast<float>(b);
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t j = 0; j < k; ++j) {
            float p = n.aux.at(bi, j);
            float onehot = (n.labels[static_cast<size_t>(bi)] == j) ? 1.0f : 0.0f;
            ga.at(bi * k + j) += (p - onehot) * gscale;
          }
        break;
      }
      case Op::kHalfSumSquares: {
        Tensor& ga = grad_of(n.a);
        const Tensor& av = at(n.a).value;
        for (int64_t i = 0; i < av.numel(); ++i) ga.at(i) += g.at(0) * av.at(i);
        break;
      }
      case Op::kSumAll: {
        Tensor& ga = grad_of(n.a);
        for (int64_t i = 0; i < ga.numel(); ++i) ga.at(i) += g.at(0);
        break;
      }
    }
  }

  std::vector<std::pair<Tensor*, Tensor>> grads;
  grads.reserve(params_.size());
  for (const auto& [ptr, id] : params_) {
    if (touched[static_cast<size_t>(id)])
      grads.emplace_back(ptr, std::move(bar[static_cast<size_t>(id)]));
    else
      grads.emplace_back(ptr, Tensor(ptr->dims()));
  }
  return grads;
}

}  // namespace imls
