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

#ifndef IMLS_TRAIN_HPP
#define IMLS_TRAIN_HPP

#include <functional>
#include <string>
#include <vector>

#include "data.hpp"
#include "model.hpp"
#include "tape.hpp"

namespace imls {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip; 0 disables
};

struct AdamState {
  std::vector<Tensor> m, v;
  int64_t step = 0;

  static AdamState init(const std::vector<Tensor*>& params);
};

// Standard Adam update with bias correction. grads must align with params.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamConfig& cfg);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  std::vector<double> firing_rates;        // per site, over the test set
  std::vector<int64_t> silent_channels;    // per site, channels with zero spikes
};

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  uint64_t seed = 1;
  AdamConfig adam;
  // Stop once test accuracy reaches this, but never before min_epochs.
  double target_acc = -1.0;
  int min_epochs = 1;
};

struct TrainResult {
  std::vector<EpochMetrics> history;
  std::vector<std::string> site_names;
  // Per-site, per-channel spike totals summed over every per-epoch test
  // evaluation; a zero here is a channel that never fired all training.
  std::vector<std::vector<int64_t>> cumulative_channel_sum;

  int64_t permanently_silent_channels() const {
    int64_t n = 0;
    for (const auto& site : cumulative_channel_sum)
      for (int64_t c : site) n += c == 0;
    return n;
  }
};

// Cross-entropy training with per-epoch accuracy and firing-rate tracking.
// Aborts with a diagnostic if the loss goes non-finite.
TrainResult train(Model& model, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& test_set, const TrainConfig& cfg);

double evaluate_accuracy(const Model& model, const std::vector<Utterance>& set,
                         FiringRecord* rec = nullptr, int threads = 1);
double evaluate_accuracy_spike(const Model& model,
                               const std::vector<Utterance>& set,
                               int threads = 1);

void write_metrics_csv(const std::string& path, const TrainResult& result);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking against the relaxed forward.

struct GradCheckConfig {
  double eps = 1e-3;
  int probes = 300;
  uint64_t seed = 7;
  double tol = 1e-2;
  int kink_retries = 8;
};

struct GradCheckReport {
  int probes = 0;
  int passed = 0;
  int kink_resamples = 0;
  double max_rel_err = 0.0;
  double p95_rel_err = 0.0;
  std::vector<double> rel_errors;

  double pass_fraction() const {
    return probes ? static_cast<double>(passed) / probes : 1.0;
  }
};

// builder records a scalar forward on the given (relaxed) tape and returns
// the loss node. Central differences probe random elements of params; a
// probe whose +/- evaluations disagree on any clip active-range indicator
// crossed a kink and is resampled.
GradCheckReport grad_check(const std::function<int(Tape&)>& builder,
                           const std::vector<Tensor*>& params,
                           const GradCheckConfig& cfg);

}  // namespace imls

#endif  // IMLS_TRAIN_HPP
