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
// Spiking-neuron mechanics: iterative LIF/IF dynamics, multi-level spike
// (MLS) firing that condenses a T-step spike train into one integer level,
// its straight-through surrogate gradient, input-aware threshold adaptation
// driven by per-channel running maxima, and the expansion back to binary
// spike trains for event-driven execution.

#ifndef IMLS_NEURON_HPP
#define IMLS_NEURON_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace imls {

struct NeuronConfig {
  float theta = 1.0f;    // base firing threshold, > 0
  float beta = 1.0f;     // leak factor in [0,1]; 1 = integrate-and-fire
  int T = 4;             // time window, >= 1
  float alpha = 0.1f;    // running-average momentum in (0,1]
  float epsilon = 1e-5f; // lower clamp for the running max
  bool adaptive = true;  // false = fixed-threshold MLS firing

  void validate() const;
};

// Per-channel input statistics backing the adaptive threshold. lambda is the
// derived scaling factor T / running_max, kept in sync by every update.
struct ThresholdState {
  std::vector<float> running_max;
  std::vector<float> lambda;
  bool frozen = false;

  static ThresholdState neutral(int64_t channels, const NeuronConfig& cfg);
  int64_t channels() const { return static_cast<int64_t>(running_max.size()); }
  void recompute_lambda(int T);
  // Effective firing threshold for channel c: theta * running_max[c] / T.
  double theta_eff(int64_t c, const NeuronConfig& cfg) const;
};

struct MembraneState {
  Tensor v;
};

// Integer spike levels in {0..T} with the time window attached. Levels are
// stored as uint8 (T never exceeds a small constant here).
struct SpikeTensor {
  Shape dims;
  std::vector<uint8_t> levels;
  int T = 1;

  SpikeTensor() = default;
  SpikeTensor(Shape d, int time_window);
  int64_t numel() const { return static_cast<int64_t>(levels.size()); }
  int64_t spike_sum() const;
  Tensor to_tensor() const;
  void validate() const;
};

// One LIF step: v <- beta*v + x, fire where v >= theta, soft reset.
// Returns the binary spike map.
Tensor lif_step(MembraneState& state, const Tensor& x, const NeuronConfig& cfg);

// The iterative oracle: IF neuron driven by a single input at t=1, run for
// T steps. Returns the binary spike train.
std::vector<int> if_multistep_fire(double x1, double theta, int T);

// Multi-level spike firing: floor(clip(v/theta, 0, T)) elementwise. Equals
// the sum of the iterative train above for every element.
SpikeTensor mls_fire(const Tensor& v1, double theta, int T);

// Surrogate gradient of the firing map: 1/theta where 0 <= v <= theta*T
// (inclusive at both ends), else 0.
Tensor mls_surrogate_grad(const Tensor& v1, double theta, int T);

// Per-channel maximum of x [B x L x C] over the batch and the first
// valid_lengths[b] positions of each item, clamped below at epsilon.
Tensor compute_batch_max(const Tensor& x, const std::vector<int64_t>& valid_lengths,
                         float epsilon);

// Exponential moving average of the running max; recomputes lambda.
void update_running_max(ThresholdState& state, const Tensor& batch_max,
                        float alpha, int T);

struct ImlsResult {
  SpikeTensor spikes;
  // 1/theta_eff on the active range, 0 elsewhere; the STE backward factor.
  Tensor surrogate;
};

// Input-aware MLS firing over x [B x L x C]. In training mode the state is
// first updated from the current batch (so the first batch is already well
// scaled), then every element fires against theta_eff[c]. In inference mode
// statistics are left untouched.
ImlsResult imls_fire(const Tensor& x, ThresholdState& state,
                     const NeuronConfig& cfg, bool training,
                     const std::vector<int64_t>& valid_lengths);

// Relaxed forward used by gradient checking: clip(x/theta_eff, 0, T) without
// the floor. Same surrogate factor as the discrete path.
struct RelaxedImlsResult {
  Tensor value;
  Tensor surrogate;
  // Active-range indicator per element; gradient checks compare these
  // between probe evaluations to detect clip-kink crossings.
  std::vector<uint8_t> active;
};
RelaxedImlsResult imls_fire_relaxed(const Tensor& x, const ThresholdState& state,
                                    const NeuronConfig& cfg);

// Expands levels into binary trains: level k -> k ones then T-k zeros along
// a new leading time axis. Output is bit-packed per timestep plane.
struct SpikeTrain {
  Shape dims;               // dims of one timestep plane
  int T = 1;
  std::vector<std::vector<uint8_t>> planes;  // planes[t][i] in {0,1}
};
SpikeTrain expand_spike_train(const SpikeTensor& s);

// Accumulate-only product: for every timestep and every set bit, add the
// matching row of w. Returns the result and the accumulate-event count
// (spikes times fan-out), the quantity the energy model charges at E_AC.
struct EventMatmulResult {
  Tensor out;
  int64_t events = 0;
};
EventMatmulResult spike_matmul_event(const SpikeTrain& train, const Tensor& w);

// Convenience: expand + event matmul for a [N x D] spike matrix.
EventMatmulResult spike_matmul(const SpikeTensor& s, const Tensor& w);

}  // namespace imls

#endif  // IMLS_NEURON_HPP
