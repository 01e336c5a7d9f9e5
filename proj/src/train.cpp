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

#include "train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>
#include <unordered_map>

#include "rng.hpp"

namespace imls {

AdamState AdamState::init(const std::vector<Tensor*>& params) {
  AdamState s;
  for (Tensor* p : params) {
    s.m.emplace_back(p->dims());
    s.v.emplace_back(p->dims());
  }
  return s;
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state,
               const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw DimensionError("adam_step parameter/gradient count mismatch");
  double clip_scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const Tensor* g : grads)
      for (int64_t i = 0; i < g->numel(); ++i)
        sq += static_cast<double>(g->at(i)) * g->at(i);
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) clip_scale = cfg.grad_clip / norm;
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor& w = *params[p];
    const Tensor& g = *grads[p];
    if (!w.same_shape(g)) throw DimensionError("adam_step gradient shape mismatch");
    Tensor& m = state.m[p];
    Tensor& v = state.v[p];
    for (int64_t i = 0; i < w.numel(); ++i) {
      const double gi = static_cast<double>(g.at(i)) * clip_scale;
      const double mi = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * gi * gi;
      m.at(i) = static_cast<float>(mi);
      v.at(i) = static_cast<float>(vi);
      const double update =
          cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
      w.at(i) = static_cast<float>(static_cast<double>(w.at(i)) - update);
    }
  }
}

namespace {

int argmax(const Tensor& logits) {
  int best = 0;
  for (int64_t i = 1; i < logits.numel(); ++i)
    if (logits.at(i) > logits.at(best)) best = static_cast<int>(i);
  return best;
}

// Index-partitioned parallel map with an ordered merge; results do not
// depend on the thread count.
template <typename Fn>
void parallel_over(int64_t count, int threads, Fn&& fn) {
  if (threads <= 1 || count < 2) {
    for (int64_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const int workers = static_cast<int>(std::min<int64_t>(threads, count));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (int64_t i = w; i < count; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

double evaluate_accuracy(const Model& model, const std::vector<Utterance>& set,
                         FiringRecord* rec, int threads) {
  if (set.empty()) return 0.0;
  std::vector<uint8_t> hit(set.size(), 0);
  if (rec) {
    // Recording accumulates into shared sinks; keep it single-threaded.
    for (size_t i = 0; i < set.size(); ++i) {
      Tensor logits = model.forward(set[i].features, set[i].length(), rec);
      hit[i] = argmax(logits) == set[i].label;
    }
  } else {
    parallel_over(static_cast<int64_t>(set.size()), threads, [&](int64_t i) {
      Tensor logits = model.forward(set[static_cast<size_t>(i)].features,
                                    set[static_cast<size_t>(i)].length());
      hit[static_cast<size_t>(i)] = argmax(logits) == set[static_cast<size_t>(i)].label;
    });
  }
  int64_t correct = 0;
  for (uint8_t h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

double evaluate_accuracy_spike(const Model& model,
                               const std::vector<Utterance>& set, int threads) {
  if (set.empty()) return 0.0;
  std::vector<uint8_t> hit(set.size(), 0);
  parallel_over(static_cast<int64_t>(set.size()), threads, [&](int64_t i) {
    Tensor logits = model.spike_driven_forward(set[static_cast<size_t>(i)].features,
                                               set[static_cast<size_t>(i)].length());
    hit[static_cast<size_t>(i)] = argmax(logits) == set[static_cast<size_t>(i)].label;
  });
  int64_t correct = 0;
  for (uint8_t h : hit) correct += h;
  return static_cast<double>(correct) / static_cast<double>(set.size());
}

TrainResult train(Model& model, const std::vector<Utterance>& train_set,
                  const std::vector<Utterance>& test_set, const TrainConfig& cfg) {
  if (train_set.empty()) throw DimensionError("training set is empty");
  if (model.fused) throw StateError("cannot train a reparameterized model");
  TrainResult result;
  result.site_names = model.site_names();
  std::vector<Tensor*> params = model.parameters();
  AdamState adam = AdamState::init(params);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<Batch> batches =
        make_batches(train_set, cfg.batch_size, cfg.seed + static_cast<uint64_t>(epoch));
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (const Batch& batch : batches) {
      Tape tape(Tape::Options{/*training=*/true, /*relaxed=*/false});
      model.tape_forward(tape, batch.features, batch.valid_lengths, batch.labels);
      const double loss = tape.loss_double();
      if (!std::isfinite(loss))
        throw StateError("training diverged: non-finite loss at epoch " +
                         std::to_string(epoch));
      const int64_t bsz = batch.features.dim(0);
      loss_sum += loss * static_cast<double>(bsz);
      seen += bsz;
      auto grads = tape.backward(static_cast<int>(tape.node_count()) - 1);
      std::unordered_map<Tensor*, const Tensor*> by_ptr;
      for (const auto& [ptr, g] : grads) by_ptr[ptr] = &g;
      std::vector<const Tensor*> aligned;
      aligned.reserve(params.size());
      std::vector<Tensor> zeros;
      zeros.reserve(params.size());
      for (Tensor* p : params) {
        auto it = by_ptr.find(p);
        if (it != by_ptr.end()) {
          aligned.push_back(it->second);
        } else {
          zeros.emplace_back(p->dims());
          aligned.push_back(&zeros.back());
        }
      }
      adam_step(params, aligned, adam, cfg.adam);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.loss = loss_sum / static_cast<double>(seen);
    m.train_acc = evaluate_accuracy(model, train_set);
    FiringRecord rec = model.make_recorder();
    m.test_acc = evaluate_accuracy(model, test_set, &rec);
    if (result.cumulative_channel_sum.empty())
      result.cumulative_channel_sum.resize(rec.sites.size());
    for (size_t i = 0; i < rec.sites.size(); ++i) {
      const SpikeStats& s = rec.sites[i];
      m.firing_rates.push_back(s.rate());
      int64_t silent = 0;
      for (int64_t cs : s.channel_sum)
        if (cs == 0) ++silent;
      m.silent_channels.push_back(silent);
      auto& cum = result.cumulative_channel_sum[i];
      if (cum.empty()) cum.assign(s.channel_sum.size(), 0);
      for (size_t c = 0; c < s.channel_sum.size(); ++c) cum[c] += s.channel_sum[c];
    }
    result.history.push_back(std::move(m));
    if (cfg.target_acc > 0.0 && epoch >= cfg.min_epochs &&
        result.history.back().test_acc >= cfg.target_acc)
      break;
  }
  return result;
}

void write_metrics_csv(const std::string& path, const TrainResult& result) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open metrics file '" + path + "'");
  os << "epoch,loss,train_acc,test_acc";
  for (const auto& name : result.site_names) os << ",fr_" << name;
  os << "\n";
  char buf[32];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.9g", v);
    os << buf;
  };
  for (const auto& m : result.history) {
    os << m.epoch << ",";
    put(m.loss);
    os << ",";
    put(m.train_acc);
    os << ",";
    put(m.test_acc);
    for (double r : m.firing_rates) {
      os << ",";
      put(r);
    }
    os << "\n";
  }
}

// ---------------------------------------------------------------------------

namespace {

bool masks_differ(const std::vector<std::vector<uint8_t>>& a,
                  const std::vector<std::vector<uint8_t>>& b) {
  if (a.size() != b.size()) return true;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return true;
  return false;
}

}  // namespace

GradCheckReport grad_check(const std::function<int(Tape&)>& builder,
                           const std::vector<Tensor*>& params,
                           const GradCheckConfig& cfg) {
  GradCheckReport report;
  Tape base(Tape::Options{/*training=*/false, /*relaxed=*/true});
  int loss_id = builder(base);
  auto grads = base.backward(loss_id);
  std::unordered_map<Tensor*, const Tensor*> grad_of;
  for (const auto& [ptr, g] : grads) grad_of[ptr] = &g;

  int64_t total_elems = 0;
  for (Tensor* p : params) total_elems += p->numel();
  if (total_elems == 0) return report;

  Pcg32 rng(cfg.seed);
  auto pick = [&](Tensor** t_out, int64_t* i_out) {
    int64_t flat = rng.next_int(0, total_elems - 1);
    for (Tensor* p : params) {
      if (flat < p->numel()) {
        *t_out = p;
        *i_out = flat;
        return;
      }
      flat -= p->numel();
    }
    *t_out = params.back();
    *i_out = params.back()->numel() - 1;
  };

  auto eval_at = [&](Tensor* t, int64_t i, float value, double* loss,
                     std::vector<std::vector<uint8_t>>* masks) {
    const float saved = t->at(i);
    t->at(i) = value;
    Tape tape(Tape::Options{/*training=*/false, /*relaxed=*/true});
    builder(tape);
    *loss = tape.loss_double();
    *masks = tape.imls_active_masks();
    t->at(i) = saved;
  };

  for (int probe = 0; probe < cfg.probes; ++probe) {
    Tensor* t = nullptr;
    int64_t idx = 0;
    double rel = 0.0;
    bool measured = false;
    for (int attempt = 0; attempt <= cfg.kink_retries; ++attempt) {
      pick(&t, &idx);
      const float w0 = t->at(idx);
      double f_plus = 0.0, f_minus = 0.0;
      std::vector<std::vector<uint8_t>> m_plus, m_minus;
      eval_at(t, idx, static_cast<float>(w0 + cfg.eps), &f_plus, &m_plus);
      eval_at(t, idx, static_cast<float>(w0 - cfg.eps), &f_minus, &m_minus);
      if (masks_differ(m_plus, m_minus)) {
        ++report.kink_resamples;
        continue;  // perturbation crossed a clip kink; try another element
      }
      const double fd = (f_plus - f_minus) / (2.0 * cfg.eps);
      auto it = grad_of.find(t);
      const double g = it == grad_of.end() ? 0.0 : it->second->at(idx);
      const double denom = std::max(std::max(std::abs(fd), std::abs(g)), 1e-8);
      rel = std::abs(fd - g) / denom;
      if (std::abs(fd - g) <= 1e-7) rel = 0.0;  // both effectively zero
      measured = true;
      break;
    }
    if (!measured) continue;  // every retry landed on a kink; report shrinks
    ++report.probes;
    report.rel_errors.push_back(rel);
    report.max_rel_err = std::max(report.max_rel_err, rel);
    if (rel <= cfg.tol) ++report.passed;
  }
  if (!report.rel_errors.empty()) {
    std::vector<double> sorted = report.rel_errors;
    std::sort(sorted.begin(), sorted.end());
    const size_t k = static_cast<size_t>(
        std::min<double>(static_cast<double>(sorted.size()) - 1.0,
                         std::ceil(0.95 * static_cast<double>(sorted.size())) - 1.0));
    report.p95_rel_err = sorted[k];
  }
  return report;
}

}  // namespace imls
