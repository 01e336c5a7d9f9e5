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

#include "neuron.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace imls {

void NeuronConfig::validate() const {
  if (!(theta > 0.0f)) throw StateError("neuron theta must be > 0");
  if (beta < 0.0f || beta > 1.0f) throw StateError("neuron beta must be in [0,1]");
  if (T < 1) throw StateError("time window T must be >= 1");
  if (!(alpha > 0.0f) || alpha > 1.0f) throw StateError("alpha must be in (0,1]");
  if (!(epsilon > 0.0f)) throw StateError("epsilon must be > 0");
}

ThresholdState ThresholdState::neutral(int64_t channels, const NeuronConfig& cfg) {
  // running_max = T gives theta_eff = theta at step 0.
  ThresholdState s;
  s.running_max.assign(static_cast<size_t>(channels), static_cast<float>(cfg.T));
  s.recompute_lambda(cfg.T);
  return s;
}

void ThresholdState::recompute_lambda(int T) {
  lambda.resize(running_max.size());
  for (size_t c = 0; c < running_max.size(); ++c)
    lambda[c] = static_cast<float>(static_cast<double>(T) / running_max[c]);
}

double ThresholdState::theta_eff(int64_t c, const NeuronConfig& cfg) const {
  return static_cast<double>(cfg.theta) * running_max[static_cast<size_t>(c)] /
         static_cast<double>(cfg.T);
}

SpikeTensor::SpikeTensor(Shape d, int time_window) : dims(std::move(d)), T(time_window) {
  levels.assign(static_cast<size_t>(shape_numel(dims)), 0);
}

int64_t SpikeTensor::spike_sum() const {
  int64_t s = 0;
  for (uint8_t l : levels) s += l;
  return s;
}

Tensor SpikeTensor::to_tensor() const {
  Tensor t(dims);
  for (int64_t i = 0; i < numel(); ++i)
    t.at(i) = static_cast<float>(levels[static_cast<size_t>(i)]);
  return t;
}

void SpikeTensor::validate() const {
  for (uint8_t l : levels)
    if (static_cast<int>(l) > T)
      throw FormatError("spike level " + std::to_string(int(l)) +
                        " exceeds time window " + std::to_string(T));
}

Tensor lif_step(MembraneState& state, const Tensor& x, const NeuronConfig& cfg) {
  if (!state.v.same_shape(x))
    throw DimensionError("lif_step shape mismatch: " + shape_str(state.v.dims()) +
                         " vs " + shape_str(x.dims()));
  Tensor spikes(x.dims());
  const double theta = cfg.theta;
  const double beta = cfg.beta;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double v = beta * static_cast<double>(state.v.at(i)) + static_cast<double>(x.at(i));
    const bool fire = v >= theta;
    if (fire) v -= theta;
    spikes.at(i) = fire ? 1.0f : 0.0f;
    state.v.at(i) = static_cast<float>(v);
  }
  return spikes;
}

std::vector<int> if_multistep_fire(double x1, double theta, int T) {
  std::vector<int> train(static_cast<size_t>(T), 0);
  double v = x1;  // input arrives only at t = 1; beta = 1 afterwards
  for (int t = 0; t < T; ++t) {
    if (v >= theta) {
      train[static_cast<size_t>(t)] = 1;
      v -= theta;  // soft reset
    }
  }
  return train;
}

namespace {
inline int mls_level(double v, double theta, int T) {
  double r = v / theta;
  if (!(r > 0.0)) return 0;
  if (r >= static_cast<double>(T)) return T;
  return static_cast<int>(std::floor(r));
}
}  // namespace

SpikeTensor mls_fire(const Tensor& v1, double theta, int T) {
  SpikeTensor s(v1.dims(), T);
  for (int64_t i = 0; i < v1.numel(); ++i)
    s.levels[static_cast<size_t>(i)] =
        static_cast<uint8_t>(mls_level(v1.at(i), theta, T));
  return s;
}

Tensor mls_surrogate_grad(const Tensor& v1, double theta, int T) {
  Tensor g(v1.dims());
  const double hi = theta * static_cast<double>(T);
  const float inv = static_cast<float>(1.0 / theta);
  for (int64_t i = 0; i < v1.numel(); ++i) {
    const double v = v1.at(i);
    g.at(i) = (v >= 0.0 && v <= hi) ? inv : 0.0f;
  }
  return g;
}

Tensor compute_batch_max(const Tensor& x, const std::vector<int64_t>& valid_lengths,
                         float epsilon) {
  if (x.rank() != 3)
    throw DimensionError("compute_batch_max expects [B x L x C], got " +
                         shape_str(x.dims()));
  const int64_t B = x.dim(0), L = x.dim(1), C = x.dim(2);
  if (static_cast<int64_t>(valid_lengths.size()) != B)
    throw DimensionError("valid_lengths size must equal batch size");
  int64_t total_valid = 0;
  for (int64_t b = 0; b < B; ++b) {
    if (valid_lengths[static_cast<size_t>(b)] < 0 ||
        valid_lengths[static_cast<size_t>(b)] > L)
      throw DimensionError("valid length out of range for item " + std::to_string(b));
    total_valid += valid_lengths[static_cast<size_t>(b)];
  }
  if (total_valid == 0) throw DimensionError("empty valid region in batch max");

  std::vector<float> mx(static_cast<size_t>(C),
                        -std::numeric_limits<float>::infinity());
  for (int64_t b = 0; b < B; ++b) {
    const int64_t len = valid_lengths[static_cast<size_t>(b)];
    for (int64_t l = 0; l < len; ++l) {
      const float* row = x.data() + (b * L + l) * C;
      for (int64_t c = 0; c < C; ++c)
        mx[static_cast<size_t>(c)] = std::max(mx[static_cast<size_t>(c)], row[c]);
    }
  }
  Tensor out({C});
  for (int64_t c = 0; c < C; ++c)
    out.at(c) = std::max(mx[static_cast<size_t>(c)], epsilon);
  return out;
}

void update_running_max(ThresholdState& state, const Tensor& batch_max,
                        float alpha, int T) {
  if (state.frozen) throw StateError("threshold statistics are frozen");
  if (batch_max.numel() != state.channels())
    throw DimensionError("batch max channel count mismatch");
  const double a = alpha;
  for (int64_t c = 0; c < state.channels(); ++c) {
    double cur = state.running_max[static_cast<size_t>(c)];
    state.running_max[static_cast<size_t>(c)] =
        static_cast<float>((1.0 - a) * cur + a * static_cast<double>(batch_max.at(c)));
  }
  state.recompute_lambda(T);
}

ImlsResult imls_fire(const Tensor& x, ThresholdState& state,
                     const NeuronConfig& cfg, bool training,
                     const std::vector<int64_t>& valid_lengths) {
  if (x.rank() != 3)
    throw DimensionError("imls_fire expects [B x L x C], got " + shape_str(x.dims()));
  const int64_t C = x.dim(2);
  if (cfg.adaptive && C != state.channels())
    throw DimensionError("imls_fire channel mismatch: input has " +
                         std::to_string(C) + ", state has " +
                         std::to_string(state.channels()));
  if (training && cfg.adaptive) {
    Tensor bmax = compute_batch_max(x, valid_lengths, cfg.epsilon);
    update_running_max(state, bmax, cfg.alpha, cfg.T);
  }

  ImlsResult r{SpikeTensor(x.dims(), cfg.T), Tensor(x.dims())};
  const int64_t rows = x.numel() / C;
  for (int64_t row = 0; row < rows; ++row) {
    const float* in = x.data() + row * C;
    uint8_t* lev = r.spikes.levels.data() + row * C;
    float* sg = r.surrogate.data() + row * C;
    for (int64_t c = 0; c < C; ++c) {
      const double theta_eff =
          cfg.adaptive ? state.theta_eff(c, cfg) : static_cast<double>(cfg.theta);
      const double v = in[c];
      lev[c] = static_cast<uint8_t>(mls_level(v, theta_eff, cfg.T));
      sg[c] = (v >= 0.0 && v <= theta_eff * cfg.T)
                  ? static_cast<float>(1.0 / theta_eff)
                  : 0.0f;
    }
  }
  return r;
}

RelaxedImlsResult imls_fire_relaxed(const Tensor& x, const ThresholdState& state,
                                    const NeuronConfig& cfg) {
  if (x.rank() != 3)
    throw DimensionError("imls_fire_relaxed expects [B x L x C]");
  const int64_t C = x.dim(2);
  if (cfg.adaptive && C != state.channels())
    throw DimensionError("imls_fire_relaxed channel mismatch");
  RelaxedImlsResult r{Tensor(x.dims()), Tensor(x.dims()), {}};
  r.active.assign(static_cast<size_t>(x.numel()), 0);
  const int64_t rows = x.numel() / C;
  for (int64_t row = 0; row < rows; ++row) {
    const float* in = x.data() + row * C;
    float* val = r.value.data() + row * C;
    float* sg = r.surrogate.data() + row * C;
    uint8_t* act = r.active.data() + row * C;
    for (int64_t c = 0; c < C; ++c) {
      const double theta_eff =
          cfg.adaptive ? state.theta_eff(c, cfg) : static_cast<double>(cfg.theta);
      const double ratio = static_cast<double>(in[c]) / theta_eff;
      val[c] = static_cast<float>(std::clamp(ratio, 0.0, static_cast<double>(cfg.T)));
      const bool inside = in[c] >= 0.0 && in[c] <= theta_eff * cfg.T;
      sg[c] = inside ? static_cast<float>(1.0 / theta_eff) : 0.0f;
      act[c] = inside ? 1 : 0;
    }
  }
  return r;
}

SpikeTrain expand_spike_train(const SpikeTensor& s) {
  s.validate();
  SpikeTrain train;
  train.dims = s.dims;
  train.T = s.T;
  train.planes.assign(static_cast<size_t>(s.T),
                      std::vector<uint8_t>(static_cast<size_t>(s.numel()), 0));
  for (int64_t i = 0; i < s.numel(); ++i) {
    const int k = s.levels[static_cast<size_t>(i)];
    for (int t = 0; t < k; ++t) train.planes[static_cast<size_t>(t)][static_cast<size_t>(i)] = 1;
  }
  return train;
}

EventMatmulResult spike_matmul_event(const SpikeTrain& train, const Tensor& w) {
  if (train.dims.size() != 2)
    throw DimensionError("spike_matmul_event expects a [N x D] spike matrix");
  const int64_t n = train.dims[0], d = train.dims[1];
  if (w.rank() != 2 || w.dim(0) != d)
    throw DimensionError("spike_matmul_event weight shape mismatch");
  const int64_t m = w.dim(1);
  EventMatmulResult r{Tensor({n, m}), 0};
  std::vector<double> acc(static_cast<size_t>(n * m), 0.0);
  for (const auto& plane : train.planes) {
    for (int64_t i = 0; i < n; ++i) {
      const uint8_t* srow = plane.data() + i * d;
      double* arow = acc.data() + i * m;
      for (int64_t p = 0; p < d; ++p) {
        if (!srow[p]) continue;
        const float* wrow = w.data() + p * m;
        for (int64_t j = 0; j < m; ++j) arow[j] += wrow[j];
        r.events += m;
      }
    }
  }
  for (int64_t i = 0; i < n * m; ++i)
    r.out.at(i) = static_cast<float>(acc[static_cast<size_t>(i)]);
  return r;
}

EventMatmulResult spike_matmul(const SpikeTensor& s, const Tensor& w) {
  return spike_matmul_event(expand_spike_train(s), w);
}

}  // namespace imls
