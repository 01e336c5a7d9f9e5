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

#include "imls/imls.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "checks.hpp"
#include "config.hpp"
#include "data.hpp"
#include "energy.hpp"
#include "model.hpp"
#include "train.hpp"

struct imls_model {
  imls::Model m;
};

struct imls_dataset {
  std::vector<imls::Utterance> utts;
  int32_t num_classes = 0;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& msg) { g_last_error = msg; }

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Runs fn, translating exceptions onto status codes.
template <typename Fn>
imls_status guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const imls::DimensionError& e) {
    set_error(e.what());
    return IMLS_ERR_DIMENSION;
  } catch (const imls::StateError& e) {
    set_error(e.what());
    return IMLS_ERR_STATE;
  } catch (const imls::ParseError& e) {
    set_error(e.what());
    return IMLS_ERR_PARSE;
  } catch (const imls::FormatError& e) {
    set_error(e.what());
    return IMLS_ERR_FORMAT;
  } catch (const std::exception& e) {
    set_error(e.what());
    return IMLS_ERR_INTERNAL;
  } catch (...) {
    set_error("unknown failure");
    return IMLS_ERR_INTERNAL;
  }
}

imls_status require(bool ok, const char* what) {
  if (ok) return IMLS_OK;
  set_error(std::string("invalid argument: ") + what);
  return IMLS_ERR_INVALID_ARGUMENT;
}

imls::RunConfig resolve(const char* config_text) {
  imls::RunConfig cfg;
  if (config_text && *config_text) cfg.apply_text(config_text);
  return cfg;
}

}  // namespace

extern "C" {

const char* imls_status_string(imls_status status) {
  switch (status) {
    case IMLS_OK: return "ok";
    case IMLS_ERR_INVALID_ARGUMENT: return "invalid argument";
    case IMLS_ERR_DIMENSION: return "dimension error";
    case IMLS_ERR_STATE: return "state error";
    case IMLS_ERR_PARSE: return "parse error";
    case IMLS_ERR_FORMAT: return "format error";
    case IMLS_ERR_IO: return "io error";
    case IMLS_ERR_CHECK_FAILED: return "check failed";
    case IMLS_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* imls_last_error(void) { return g_last_error.c_str(); }

void imls_free_string(char* s) { std::free(s); }

imls_status imls_resolve_config(const char* config_text, char** out) {
  if (imls_status s = require(out != nullptr, "out"); s != IMLS_OK) return s;
  return guarded([&] {
    *out = dup_string(resolve(config_text).resolved_text());
    return IMLS_OK;
  });
}

imls_status imls_model_create(const char* config_text, uint64_t seed,
                              imls_model** out) {
  if (imls_status s = require(out != nullptr, "out"); s != IMLS_OK) return s;
  return guarded([&] {
    imls::ModelConfig cfg = resolve(config_text).model_config();
    *out = new imls_model{imls::Model::init(cfg, seed)};
    return IMLS_OK;
  });
}

void imls_model_free(imls_model* model) { delete model; }

imls_status imls_model_save(const imls_model* model, const char* path) {
  if (imls_status s = require(model && path, "model/path"); s != IMLS_OK) return s;
  return guarded([&] {
    imls::save_checkpoint(model->m, path);
    return IMLS_OK;
  });
}

imls_status imls_model_load(const char* path, imls_model** out) {
  if (imls_status s = require(path && out, "path/out"); s != IMLS_OK) return s;
  return guarded([&] {
    *out = new imls_model{imls::load_checkpoint(path)};
    return IMLS_OK;
  });
}

imls_status imls_model_reparameterize(imls_model* model) {
  if (imls_status s = require(model != nullptr, "model"); s != IMLS_OK) return s;
  return guarded([&] {
    model->m.reparameterize();
    return IMLS_OK;
  });
}

int imls_model_is_fused(const imls_model* model) {
  return model ? (model->m.fused ? 1 : 0) : -1;
}

imls_status imls_model_config_text(const imls_model* model, char** out) {
  if (imls_status s = require(model && out, "model/out"); s != IMLS_OK) return s;
  return guarded([&] {
    *out = dup_string(imls::config_to_text(model->m.cfg, model->m.fused));
    return IMLS_OK;
  });
}

imls_status imls_model_num_classes(const imls_model* model, int32_t* out) {
  if (imls_status s = require(model && out, "model/out"); s != IMLS_OK) return s;
  *out = model->m.cfg.num_classes;
  return IMLS_OK;
}

imls_status imls_model_input_dim(const imls_model* model, int32_t* out) {
  if (imls_status s = require(model && out, "model/out"); s != IMLS_OK) return s;
  *out = model->m.cfg.input_dim;
  return IMLS_OK;
}

imls_status imls_dataset_synthetic(const char* config_text, int test_split,
                                   imls_dataset** out) {
  if (imls_status s = require(out != nullptr, "out"); s != IMLS_OK) return s;
  return guarded([&] {
    imls::RunConfig cfg = resolve(config_text);
    imls::SyntheticSpec spec =
        test_split ? cfg.synthetic_test_spec() : cfg.synthetic_spec();
    auto* d = new imls_dataset;
    d->utts = imls::gen_synthetic(spec);
    d->num_classes = spec.num_classes;
    *out = d;
    return IMLS_OK;
  });
}

imls_status imls_dataset_load_manifest(const char* manifest_path,
                                       int32_t num_classes, imls_dataset** out) {
  if (imls_status s = require(manifest_path && out, "path/out"); s != IMLS_OK)
    return s;
  return guarded([&] {
    auto* d = new imls_dataset;
    d->utts = imls::load_manifest(manifest_path, num_classes);
    d->num_classes = num_classes;
    *out = d;
    return IMLS_OK;
  });
}

imls_status imls_dataset_write(const imls_dataset* data, const char* dir,
                               char** manifest_out) {
  if (imls_status s = require(data && dir, "data/dir"); s != IMLS_OK) return s;
  return guarded([&] {
    std::string manifest = imls::write_dataset(data->utts, dir);
    if (manifest_out) *manifest_out = dup_string(manifest);
    return IMLS_OK;
  });
}

int64_t imls_dataset_size(const imls_dataset* data) {
  return data ? static_cast<int64_t>(data->utts.size()) : -1;
}

int32_t imls_dataset_label(const imls_dataset* data, int64_t index) {
  if (!data || index < 0 || index >= imls_dataset_size(data)) return -1;
  return data->utts[static_cast<size_t>(index)].label;
}

int64_t imls_dataset_length(const imls_dataset* data, int64_t index) {
  if (!data || index < 0 || index >= imls_dataset_size(data)) return -1;
  return data->utts[static_cast<size_t>(index)].length();
}

void imls_dataset_free(imls_dataset* data) { delete data; }

imls_status imls_train(imls_model* model, const imls_dataset* train_set,
                       const imls_dataset* test_set, const char* config_text,
                       const char* metrics_csv_path, double* final_test_acc) {
  if (imls_status s = require(model && train_set, "model/train_set"); s != IMLS_OK)
    return s;
  return guarded([&] {
    imls::TrainConfig tc = resolve(config_text).train_config();
    static const std::vector<imls::Utterance> kEmpty;
    const auto& test = test_set ? test_set->utts : kEmpty;
    imls::TrainResult result = imls::train(model->m, train_set->utts, test, tc);
    if (metrics_csv_path) imls::write_metrics_csv(metrics_csv_path, result);
    if (final_test_acc)
      *final_test_acc =
          result.history.empty() ? 0.0 : result.history.back().test_acc;
    return IMLS_OK;
  });
}

imls_status imls_evaluate(const imls_model* model, const imls_dataset* data,
                          int spike_driven, int threads, double* accuracy_out) {
  if (imls_status s = require(model && data && accuracy_out, "model/data/out");
      s != IMLS_OK)
    return s;
  return guarded([&] {
    *accuracy_out =
        spike_driven
            ? imls::evaluate_accuracy_spike(model->m, data->utts, threads)
            : imls::evaluate_accuracy(model->m, data->utts, nullptr, threads);
    return IMLS_OK;
  });
}

imls_status imls_infer(const imls_model* model, const float* features,
                       int64_t length, int64_t c_in, int spike_driven,
                       float* logits_out) {
  if (imls_status s = require(model && features && logits_out, "model/features/out");
      s != IMLS_OK)
    return s;
  return guarded([&] {
    imls::Tensor f({length, c_in},
                   std::vector<float>(features, features + length * c_in));
    f.require_finite("features");
    imls::Tensor logits = spike_driven
                              ? model->m.spike_driven_forward(f, length)
                              : model->m.forward(f, length);
    for (int64_t i = 0; i < logits.numel(); ++i) logits_out[i] = logits.at(i);
    return IMLS_OK;
  });
}

imls_status imls_infer_csv(const imls_model* model, const char* feature_csv,
                           int spike_driven, float* logits_out) {
  if (imls_status s = require(model && feature_csv && logits_out, "model/path/out");
      s != IMLS_OK)
    return s;
  return guarded([&] {
    imls::Tensor f = imls::load_feature_csv(feature_csv);
    imls::Tensor logits = spike_driven
                              ? model->m.spike_driven_forward(f, f.dim(0))
                              : model->m.forward(f, f.dim(0));
    for (int64_t i = 0; i < logits.numel(); ++i) logits_out[i] = logits.at(i);
    return IMLS_OK;
  });
}

imls_status imls_energy_report(const imls_model* model, const imls_dataset* data,
                               const char* csv_path, double* e_ann_mj,
                               double* e_snn_mj, double* saving_ratio,
                               double* dual_route_rel_diff) {
  if (imls_status s = require(model && data, "model/data"); s != IMLS_OK) return s;
  return guarded([&] {
    if (data->utts.empty())
      throw imls::DimensionError("energy report over an empty dataset");
    imls::EnergyAccumulator acc;
    for (const auto& u : data->utts) {
      imls::SpikeRunStats stats;
      model->m.spike_driven_forward(u.features, u.length(), &stats);
      acc.add(stats);
    }
    imls::EnergyReport report = acc.finalize();
    if (csv_path) imls::write_energy_csv(csv_path, report);
    if (e_ann_mj) *e_ann_mj = report.e_ann_mj;
    if (e_snn_mj) *e_snn_mj = report.e_snn_mj;
    if (saving_ratio) *saving_ratio = report.saving_ratio;
    if (dual_route_rel_diff) *dual_route_rel_diff = report.dual_route_rel_diff();
    return IMLS_OK;
  });
}

imls_status imls_check_equivalence(char** report_out) {
  return guarded([&] {
    imls::CheckResult r = imls::check_equivalence();
    if (report_out) *report_out = dup_string(r.report);
    if (!r.ok) {
      set_error("equivalence sweep failed: " + r.report);
      return IMLS_ERR_CHECK_FAILED;
    }
    return IMLS_OK;
  });
}

imls_status imls_check_reparam(uint64_t seed, int32_t trials, char** report_out) {
  if (imls_status s = require(trials >= 0, "trials >= 0"); s != IMLS_OK) return s;
  return guarded([&] {
    imls::CheckResult r = imls::check_reparam(seed, trials);
    if (report_out) *report_out = dup_string(r.report);
    if (!r.ok) {
      set_error("reparameterization sweep failed: " + r.report);
      return IMLS_ERR_CHECK_FAILED;
    }
    return IMLS_OK;
  });
}

imls_status imls_decay_mask_csv(int32_t layer_index, int64_t seq_len,
                                const char* out_csv) {
  if (imls_status s = require(out_csv != nullptr, "out_csv"); s != IMLS_OK)
    return s;
  return guarded([&] {
    imls::DecayMask mask = imls::build_hdm(seq_len, layer_index);
    std::ofstream os(out_csv);
    if (!os) throw imls::ParseError(std::string("cannot open '") + out_csv + "'");
    char buf[40];
    for (int64_t i = 0; i < seq_len; ++i) {
      for (int64_t j = 0; j < seq_len; ++j) {
        std::snprintf(buf, sizeof buf, "%.17g", mask.at(i, j));
        os << (j ? "," : "") << buf;
      }
      os << "\n";
    }
    return IMLS_OK;
  });
}

imls_status imls_decay_mask_value(int32_t layer_index, int64_t distance,
                                  double* out) {
  if (imls_status s = require(out && distance >= 0, "out/distance"); s != IMLS_OK)
    return s;
  return guarded([&] {
    imls::DecayMask mask = imls::build_hdm(distance + 1, layer_index);
    *out = mask.at(0, distance);
    return IMLS_OK;
  });
}

imls_status imls_attention_dump(const imls_model* model, const char* feature_csv,
                                int32_t layer_index, const char* out_csv) {
  if (imls_status s = require(model && feature_csv && out_csv, "model/paths");
      s != IMLS_OK)
    return s;
  return guarded([&] {
    imls::Tensor f = imls::load_feature_csv(feature_csv);
    imls::Tensor maps = model->m.attention_maps(f, f.dim(0), layer_index);
    std::ofstream os(out_csv);
    if (!os) throw imls::ParseError(std::string("cannot open '") + out_csv + "'");
    os << "head,row,col,value\n";
    char buf[32];
    const int64_t n = maps.dim(1);
    for (int64_t h = 0; h < maps.dim(0); ++h)
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
          std::snprintf(buf, sizeof buf, "%.9g",
                        static_cast<double>(maps.at((h * n + i) * n + j)));
          os << h << "," << i << "," << j << "," << buf << "\n";
        }
    return IMLS_OK;
  });
}

}  // extern "C"
