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

#include "energy.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace imls {

std::vector<LayerProfile> count_flops(const ModelConfig& cfg, int64_t seq_len,
                                      bool fused_execution) {
  const int64_t n = seq_len, d = cfg.d, dff = cfg.d_ff;
  const int64_t h = cfg.heads, dk = d / cfg.heads;
  const int T = cfg.neuron.T;
  std::vector<LayerProfile> out;
  auto row = [&](const std::string& name, int64_t flops, bool spike_fed) {
    out.push_back(LayerProfile{name, flops, -1.0, T, spike_fed, 0.0});
  };
  row("input_proj", n * cfg.input_dim * d, false);
  const bool sdsa = cfg.variant == AttentionVariant::kSdsa3;
  for (int i = 0; i < cfg.num_layers; ++i) {
    const std::string p = "l" + std::to_string(i) + ".";
    if (sdsa) {
      row(p + "attn.wq", n * d * d, true);
      row(p + "attn.wk", n * d * d, true);
      row(p + "attn.wv", n * d * d, true);
      row(p + "attn.kv", h * n * dk * dk, true);
      row(p + "attn.qkv", h * n * dk * dk, true);
    } else if (fused_execution) {
      row(p + "attn.wqk", h * n * d * d, true);
      row(p + "attn.logits", h * n * n * d, true);
      row(p + "attn.wv", n * d * d, true);
      row(p + "attn.av", n * n * d, true);
    } else {
      row(p + "attn.wq", n * d * d, true);
      row(p + "attn.wk", n * d * d, true);
      row(p + "attn.wv", n * d * d, true);
      row(p + "attn.logits", n * n * d, true);  // head-summed H*N*N*dk
      row(p + "attn.av", n * n * d, true);
    }
    row(p + "attn.wout", n * d * d, true);
    row(p + "mlp.w1", n * d * dff, true);
    row(p + "mlp.w2", n * dff * d, true);
  }
  row("head", d * cfg.num_classes, false);
  return out;
}

std::vector<LayerProfile> record_firing_rates(const SpikeRunStats& stats) {
  std::vector<LayerProfile> out;
  for (const auto& p : stats.products) {
    LayerProfile lp;
    lp.name = p.name;
    lp.flops = p.flops;
    lp.T = p.T;
    lp.spike_fed = p.spike_fed;
    if (p.spike_fed && p.numel > 0)
      lp.rate = static_cast<double>(p.spike_sum) /
                (static_cast<double>(p.numel) * static_cast<double>(p.T));
    out.push_back(std::move(lp));
  }
  return out;
}

double estimate_ann_energy_nj(const std::vector<LayerProfile>& profiles) {
  double nj = 0.0;
  for (const auto& p : profiles) nj += static_cast<double>(p.flops) * kEnergyMacNj;
  return nj;
}

double estimate_snn_energy_nj(const std::vector<LayerProfile>& profiles) {
  double nj = 0.0;
  for (const auto& p : profiles) {
    if (p.spike_fed) {
      if (p.rate < 0.0)
        throw StateError("profile '" + p.name + "' has no recorded firing rate");
      nj += static_cast<double>(p.T) * p.rate * static_cast<double>(p.flops) *
            kEnergyAcNj;
    } else {
      nj += static_cast<double>(p.flops) * kEnergyMacNj;
    }
  }
  return nj;
}

double EnergyReport::dual_route_rel_diff() const {
  const double scale = std::max(std::abs(spike_portion_nj), 1e-12);
  return std::abs(spike_portion_nj - event_route_nj) / scale;
}

void EnergyAccumulator::add(const SpikeRunStats& stats) {
  for (const auto& p : stats.products) {
    auto& dst = merged_.product(p.name, p.spike_fed, p.T);
    dst.flops += p.flops;
    dst.events += p.events;
    dst.spike_sum += p.spike_sum;
    dst.numel += p.numel;
    dst.snn_energy_nj += p.snn_energy_nj;
    if (!p.spike_fed)
      snn_real_fed_nj_ += static_cast<double>(p.flops) * kEnergyMacNj;
  }
  merged_.total_events += stats.total_events;
  merged_.timestep_states += stats.timestep_states;
}

EnergyReport EnergyAccumulator::finalize() const {
  EnergyReport report;
  double ann_nj = 0.0, snn_nj = 0.0, spike_nj = 0.0;
  for (const auto& p : merged_.products) {
    LayerProfile lp;
    lp.name = p.name;
    lp.flops = p.flops;
    lp.T = p.T;
    lp.spike_fed = p.spike_fed;
    ann_nj += static_cast<double>(p.flops) * kEnergyMacNj;
    if (p.spike_fed) {
      lp.rate = p.numel > 0 ? static_cast<double>(p.spike_sum) /
                                  (static_cast<double>(p.numel) * p.T)
                            : 0.0;
      lp.energy_nj = p.snn_energy_nj;
      spike_nj += p.snn_energy_nj;
    } else {
      lp.energy_nj = static_cast<double>(p.flops) * kEnergyMacNj;
    }
    snn_nj += lp.energy_nj;
    report.layers.push_back(std::move(lp));
  }
  report.e_ann_mj = ann_nj * 1e-6;
  report.e_snn_mj = snn_nj * 1e-6;
  report.saving_ratio = snn_nj > 0.0 ? ann_nj / snn_nj : 0.0;
  report.spike_portion_nj = spike_nj;
  report.event_route_nj = static_cast<double>(merged_.total_events) * kEnergyAcNj;
  report.total_events = merged_.total_events;
  return report;
}

void write_energy_csv(const std::string& path, const EnergyReport& report) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open energy CSV '" + path + "'");
  os << "layer,flops,R,T,kind,energy_nJ\n";
  char buf[64];
  for (const auto& p : report.layers) {
    os << p.name << "," << p.flops << ",";
    if (p.spike_fed) {
      std::snprintf(buf, sizeof buf, "%.9g", p.rate);
      os << buf;
    }
    os << "," << p.T << "," << (p.spike_fed ? "spike-fed" : "real-fed") << ",";
    std::snprintf(buf, sizeof buf, "%.9g", p.energy_nj);
    os << buf << "\n";
  }
}

std::string energy_summary_line(const EnergyReport& report) {
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "E_ANN_mJ=%.6f E_SNN_mJ=%.6f saving_ratio=%.2f events=%lld",
                report.e_ann_mj, report.e_snn_mj, report.saving_ratio,
                static_cast<long long>(report.total_events));
  return buf;
}

}  // namespace imls
