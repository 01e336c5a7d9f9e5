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

#ifndef IMLS_TENSOR_HPP
#define IMLS_TENSOR_HPP

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"

namespace imls {

// Errors carry a category so the C API can map them onto stable codes.
struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct StateError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<int64_t>;

// Dense row-major real array, rank <= 4. Values are stored in 32-bit
// precision; reductions accumulate in 64-bit (see matmul / loss paths).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims, float fill = 0.0f);
  Tensor(Shape dims, std::vector<float> values);

  static Tensor uniform(Pcg32& rng, Shape dims, float lo = 0.0f,
                        float hi = 1.0f);
  static Tensor normal(Pcg32& rng, Shape dims, float mean = 0.0f,
                       float stddev = 1.0f);
  static Tensor identity(int64_t n);

  const Shape& dims() const { return dims_; }
  int64_t rank() const { return static_cast<int64_t>(dims_.size()); }
  int64_t dim(int i) const { return dims_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }

  float* data() { return v_.data(); }
  const float* data() const { return v_.data(); }
  std::vector<float>& values() { return v_; }
  const std::vector<float>& values() const { return v_; }

  float& at(int64_t i) { return v_[static_cast<size_t>(i)]; }
  float at(int64_t i) const { return v_[static_cast<size_t>(i)]; }
  float& at(int64_t i, int64_t j) { return v_[static_cast<size_t>(i * dims_[1] + j)]; }
  float at(int64_t i, int64_t j) const { return v_[static_cast<size_t>(i * dims_[1] + j)]; }

  bool same_shape(const Tensor& o) const { return dims_ == o.dims_; }

  // Rejects NaN/Inf; used when values come from external input.
  void require_finite(const std::string& what) const;

 private:
  Shape dims_;
  std::vector<float> v_;
};

int64_t shape_numel(const Shape& dims);
std::string shape_str(const Shape& dims);

// c = a * b for a [N x K] and b [K x M]. The inner loop runs over K in
// ascending order with a per-cell 64-bit accumulator, so results do not
// depend on the blocking of the outer loops.
Tensor matmul(const Tensor& a, const Tensor& b);

// a [N x K] * b^T for b [M x K].
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// a^T [K x N] * b [K x M] -> [N x M].
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// Row-wise softmax over the last dimension, with row-max subtraction.
// -inf entries are permitted (masked positions); a row of all -inf throws.
Tensor softmax_rows(const Tensor& a);

Tensor transpose2d(const Tensor& a);

// max_i |a_i - b_i| / max(scale of b, floor). "Relative" here is relative to
// the magnitude of the reference tensor, not elementwise, so near-zero
// entries do not blow up the metric.
double relative_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

}  // namespace imls

#endif  // IMLS_TENSOR_HPP
