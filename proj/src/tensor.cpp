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

#include "tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace imls {

int64_t shape_numel(const Shape& dims) {
  int64_t n = 1;
  for (int64_t d : dims) n *= d;
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < dims.size(); ++i) {
    if (i) os << "x";
    os << dims[i];
  }
  os << "]";
  return os.str();
}

Tensor::Tensor(Shape dims, float fill) : dims_(std::move(dims)) {
  if (dims_.empty() || dims_.size() > 4)
    throw DimensionError("tensor rank must be 1..4, got " + shape_str(dims_));
  for (int64_t d : dims_)
    if (d <= 0) throw DimensionError("non-positive extent in " + shape_str(dims_));
  v_.assign(static_cast<size_t>(shape_numel(dims_)), fill);
}

Tensor::Tensor(Shape dims, std::vector<float> values)
    : dims_(std::move(dims)), v_(std::move(values)) {
  if (dims_.empty() || dims_.size() > 4)
    throw DimensionError("tensor rank must be 1..4, got " + shape_str(dims_));
  if (shape_numel(dims_) != static_cast<int64_t>(v_.size()))
    throw DimensionError("value count " + std::to_string(v_.size()) +
                         " does not match shape " + shape_str(dims_));
}

Tensor Tensor::uniform(Pcg32& rng, Shape dims, float lo, float hi) {
  Tensor t(std::move(dims));
  for (auto& x : t.v_)
    x = static_cast<float>(lo + (hi - lo) * rng.next_uniform());
  return t;
}

Tensor Tensor::normal(Pcg32& rng, Shape dims, float mean, float stddev) {
  Tensor t(std::move(dims));
  for (auto& x : t.v_)
    x = static_cast<float>(mean + stddev * rng.next_normal());
  return t;
}

Tensor Tensor::identity(int64_t n) {
  Tensor t({n, n});
  for (int64_t i = 0; i < n; ++i) t.at(i, i) = 1.0f;
  return t;
}

void Tensor::require_finite(const std::string& what) const {
  for (float x : v_)
    if (!std::isfinite(x))
      throw ParseError("non-finite value in " + what);
}

double Pcg32::next_normal() {
  // u1 in (0,1]: shift the half-open uniform so log() never sees zero.
  double u1 = 1.0 - next_uniform();
  double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

int64_t Pcg32::next_int(int64_t lo, int64_t hi) {
  uint64_t span = static_cast<uint64_t>(hi - lo + 1);
  uint64_t r = (static_cast<uint64_t>(next_u32()) * span) >> 32;
  return lo + static_cast<int64_t>(r);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul expects rank-2 operands");
  if (a.dim(1) != b.dim(0))
    throw DimensionError("matmul inner extents differ: " + shape_str(a.dims()) +
                         " vs " + shape_str(b.dims()));
  const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  Tensor c({n, m});
  std::vector<double> acc(static_cast<size_t>(m));
  for (int64_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* arow = a.data() + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const float* brow = b.data() + p * m;
      for (int64_t j = 0; j < m; ++j) acc[static_cast<size_t>(j)] += av * brow[j];
    }
    float* crow = c.data() + i * m;
    for (int64_t j = 0; j < m; ++j) crow[j] = static_cast<float>(acc[static_cast<size_t>(j)]);
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul_nt expects rank-2 operands");
  if (a.dim(1) != b.dim(1))
    throw DimensionError("matmul_nt inner extents differ: " +
                         shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  const int64_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  Tensor c({n, m});
  for (int64_t i = 0; i < n; ++i) {
    const float* arow = a.data() + i * k;
    for (int64_t j = 0; j < m; ++j) {
      const float* brow = b.data() + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p)
        acc += static_cast<double>(arow[p]) * static_cast<double>(brow[p]);
      c.at(i, j) = static_cast<float>(acc);
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul_tn expects rank-2 operands");
  if (a.dim(0) != b.dim(0))
    throw DimensionError("matmul_tn inner extents differ: " +
                         shape_str(a.dims()) + " vs " + shape_str(b.dims()));
  const int64_t k = a.dim(0), n = a.dim(1), m = b.dim(1);
  Tensor c({n, m});
  std::vector<double> acc(static_cast<size_t>(n * m), 0.0);
  for (int64_t p = 0; p < k; ++p) {
    const float* arow = a.data() + p * n;
    const float* brow = b.data() + p * m;
    for (int64_t i = 0; i < n; ++i) {
      const double av = arow[i];
      double* accrow = acc.data() + i * m;
      for (int64_t j = 0; j < m; ++j) accrow[j] += av * brow[j];
    }
  }
  for (int64_t i = 0; i < n * m; ++i) c.at(i) = static_cast<float>(acc[static_cast<size_t>(i)]);
  return c;
}

Tensor softmax_rows(const Tensor& a) {
  const int64_t m = a.dim(static_cast<int>(a.rank()) - 1);
  const int64_t rows = a.numel() / m;
  Tensor out(a.dims());
  for (int64_t r = 0; r < rows; ++r) {
    const float* in = a.data() + r * m;
    float* o = out.data() + r * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < m; ++j) mx = std::max(mx, static_cast<double>(in[j]));
    if (!(mx > -std::numeric_limits<double>::infinity()))
      throw DimensionError("softmax row " + std::to_string(r) + " is fully masked");
    double sum = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      double e = std::exp(static_cast<double>(in[j]) - mx);
      o[j] = static_cast<float>(e);
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int64_t j = 0; j < m; ++j) o[j] = static_cast<float>(o[j] * inv);
  }
  return out;
}

Tensor transpose2d(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose2d expects rank 2");
  Tensor t({a.dim(1), a.dim(0)});
  for (int64_t i = 0; i < a.dim(0); ++i)
    for (int64_t j = 0; j < a.dim(1); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (float x : a.values()) m = std::max(m, std::abs(static_cast<double>(x)));
  return m;
}

double relative_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw DimensionError("relative_diff shape mismatch: " + shape_str(a.dims()) +
                         " vs " + shape_str(b.dims()));
  double scale = std::max(max_abs(b), 1e-12);
  double worst = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(a.at(i)) - b.at(i)));
  return worst / scale;
}

}  // namespace imls
