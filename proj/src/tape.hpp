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
// Reverse-mode tape over the primitives a spiking-Transformer step needs.
// Spike firing records the discrete multi-level forward and backpropagates
// through the straight-through surrogate; running-max statistics never carry
// gradient. The node count of a recorded step does not depend on the time
// window T, which is the whole point of single-timestep training.

#ifndef IMLS_TAPE_HPP
#define IMLS_TAPE_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "neuron.hpp"
#include "tensor.hpp"

namespace imls {

class Tape {
 public:
  struct Options {
    bool training = false;  // update threshold statistics at record time
    bool relaxed = false;   // clip without floor; used by gradient checks
  };

  Tape() = default;
  explicit Tape(Options opt) : opt_(opt) {}

  // Leaves.
  int input(Tensor v);
  int param(Tensor* p);

  // a [B x N x K] (or [N x K]) times a rank-2 parameter/value [K x M].
  int matmul(int a, int w);
  // Batched products over the two trailing dims of rank-4 operands.
  int bmm(int a, int b);     // [..,N,K] x [..,K,M]
  int bmm_nt(int a, int b);  // [..,N,K] x [..,M,K]^T
  int bmm_tn(int a, int b);  // [..,N,K]^T x [..,N,M]

  int add(int a, int b);
  int scale(int a, double c);
  int mul_const(int a, Tensor c);  // elementwise by a constant tensor
  // Sets entries [.., i, j] with j >= valid[b] to -inf (softmax key masking).
  int pad_keys(int a, std::vector<int64_t> valid);
  // Zeroes rows [b, t, :] with t >= valid[b].
  int zero_pad_rows(int a, std::vector<int64_t> valid);
  int softmax(int a);
  // Spike firing at a neuron site. In training mode the site statistics are
  // updated from this batch before firing.
  int imls(int a, ThresholdState* site, const NeuronConfig* cfg,
           std::vector<int64_t> valid);
  int split_heads(int a, int heads);  // [B,N,D] -> [B,H,N,D/H]
  int merge_heads(int a);             // inverse
  int mean_pool_valid(int a, std::vector<int64_t> valid);  // [B,L,D] -> [B,D]
  int add_bias(int a, int bias);      // [B,K] + [K]
  int cross_entropy(int logits, std::vector<int> labels);  // mean NLL
  int half_sum_squares(int a);        // 0.5 * sum(a^2), for gradient checks
  int sum_all(int a);                 // plain sum reduction

  const Tensor& value(int id) const { return nodes_[static_cast<size_t>(id)].value; }
  double loss_double() const { return loss_double_; }
  size_t node_count() const { return nodes_.size(); }

  // Active-range indicators of every imls node, in record order; gradient
  // checks diff these across probe evaluations to spot clip-kink crossings.
  std::vector<std::vector<uint8_t>> imls_active_masks() const;

  // Reverse sweep from a scalar node. Returns one gradient per registered
  // parameter, in registration order.
  std::vector<std::pair<Tensor*, Tensor>> backward(int loss_id);

 private:
  enum class Op {
    kInput, kParam, kMatmul, kBmm, kBmmNT, kBmmTN, kAdd, kScale, kMulConst,
    kPadKeys, kZeroPadRows, kSoftmax, kImls, kSplitHeads, kMergeHeads,
    kMeanPool, kAddBias, kCrossEntropy, kHalfSumSquares, kSumAll,
  };

  struct Node {
    Op op;
    int a = -1, b = -1;
    Tensor value;
    Tensor aux;       // imls surrogate, softmax/CE probabilities
    Tensor constant;  // mul_const operand
    double scalar = 0.0;
    int heads = 0;
    std::vector<int64_t> valid;
    std::vector<int> labels;
    Tensor* param = nullptr;
    std::vector<uint8_t> active;
  };

  int push(Node n);
  const Node& at(int id) const { return nodes_[static_cast<size_t>(id)]; }

  Options opt_{};
  std::vector<Node> nodes_;
  std::vector<std::pair<Tensor*, int>> params_;
  double loss_double_ = 0.0;
  bool ran_forward_scalar_ = false;
};

}  // namespace imls

#endif  // IMLS_TAPE_HPP
