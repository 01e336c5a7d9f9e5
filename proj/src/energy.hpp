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
// Theoretical energy estimation. Every counted product is charged per MAC
// (4.6 nJ) for the ANN reference and, when spike-fed, per accumulate
// (0.9 nJ) scaled by timesteps and firing rate for the SNN. Softmax,
// masking, residual adds and pooling are excluded from both tallies, so the
// comparison covers the same op set on both sides. The event-count route
// and the rate-formula route measure the same quantity two ways.

#ifndef IMLS_ENERGY_HPP
#define IMLS_ENERGY_HPP

#include <string>
#include <vector>

#include "model.hpp"

namespace imls {

inline constexpr double kEnergyMacNj = 4.6;
inline constexpr double kEnergyAcNj = 0.9;

struct LayerProfile {
  std::string name;
  int64_t flops = 0;   // MAC count (one multiply-add = one FLOP here)
  double rate = -1.0;  // mean firing rate of the spike operand; < 0 = unset
  int T = 1;
  bool spike_fed = true;
  double energy_nj = 0.0;
};

// Analytic MAC counts for one forward pass at the given sequence length.
// fused_execution selects the reparameterized product set (the W_QK path is
// counted with fused dims). Accepts num_layers == 0 configs so an empty
// stack can be profiled.
std::vector<LayerProfile> count_flops(const ModelConfig& cfg, int64_t seq_len,
                                      bool fused_execution);

// Profiles measured from an event-driven run: rates filled per product.
std::vector<LayerProfile> record_firing_rates(const SpikeRunStats& stats);

// E_ANN = sum(flops) * E_MAC, in nanojoules.
double estimate_ann_energy_nj(const std::vector<LayerProfile>& profiles);

// E_SNN = sum over spike-fed of T*R*flops*E_AC plus real-fed MACs. Throws
// if a spike-fed profile has no recorded rate.
double estimate_snn_energy_nj(const std::vector<LayerProfile>& profiles);

struct EnergyReport {
  std::vector<LayerProfile> layers;
  double e_ann_mj = 0.0;
  double e_snn_mj = 0.0;
  double saving_ratio = 0.0;
  double spike_portion_nj = 0.0;  // rate-route energy of spike-fed products
  double event_route_nj = 0.0;    // total accumulate events * E_AC
  int64_t total_events = 0;

  // Relative disagreement of the two accounting routes; anything beyond
  // ~1e-6 signals an accounting bug.
  double dual_route_rel_diff() const;
};

// Merges event-driven run statistics utterance by utterance. The rate-route
// energy is accumulated per forward, which keeps it exactly equal to the
// event-count route even when sequence lengths vary.
class EnergyAccumulator {
 public:
  void add(const SpikeRunStats& stats);
  EnergyReport finalize() const;

 private:
  SpikeRunStats merged_;
  double snn_real_fed_nj_ = 0.0;
};

void write_energy_csv(const std::string& path, const EnergyReport& report);
std::string energy_summary_line(const EnergyReport& report);

}  // namespace imls

#endif  // IMLS_ENERGY_HPP
