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
// Command-line front end. Everything goes through the C API in
// include/imls/imls.h; exit codes are 0 on success, 1 when a check or
// run fails, 2 on usage errors.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "imls/imls.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct StringOut {
  char* s = nullptr;
  ~StringOut() { imls_free_string(s); }
  std::string str() const { return s ? s : ""; }
};

struct ModelHandle {
  imls_model* m = nullptr;
  ~ModelHandle() { imls_model_free(m); }
};

struct DatasetHandle {
  imls_dataset* d = nullptr;
  ~DatasetHandle() { imls_dataset_free(d); }
};

int fail(imls_status status, const char* what) {
  std::cerr << "error: " << what << ": " << imls_status_string(status) << " ("
            << imls_last_error() << ")\n";
  switch (status) {
    case IMLS_ERR_INVALID_ARGUMENT:
    case IMLS_ERR_PARSE:
      return kExitUsage;
    default:
      return kExitCheckFailed;
  }
}

// Collected config layering: file first, then explicit overrides.
struct ConfigArgs {
  std::string config_path;
  std::vector<std::string> overrides;  // "key=value"
  std::string variant;
  int T = -1;
  int64_t seed = -1;
  int threads = -1;

  std::string compose() const {
    std::ostringstream os;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) throw CLI::ValidationError("--config", "cannot open " + config_path);
      os << is.rdbuf() << "\n";
    }
    for (const auto& kv : overrides) os << kv << "\n";
    if (!variant.empty()) os << "model.variant = " << variant << "\n";
    if (T > 0) os << "model.t = " << T << "\n";
    if (seed >= 0) {
      os << "train.seed = " << seed << "\n";
      os << "data.seed = " << seed << "\n";
    }
    if (threads > 0) os << "run.threads = " << threads << "\n";
    return os.str();
  }

  void add_common(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key = value config file");
    cmd->add_option("--set", overrides, "override a config key (key=value)")
        ->take_all();
    cmd->add_option("--threads", threads, "evaluation threads (default 1)");
  }
};

int print_resolved(const std::string& config_text) {
  StringOut resolved;
  if (imls_status s = imls_resolve_config(config_text.c_str(), &resolved.s);
      s != IMLS_OK)
    return fail(s, "config");
  std::cout << "# resolved config\n" << resolved.str() << "\n";
  return kExitOk;
}

int threads_of(const std::string& config_text) {
  StringOut resolved;
  if (imls_resolve_config(config_text.c_str(), &resolved.s) != IMLS_OK) return 1;
  std::istringstream is(resolved.str());
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("run.threads", 0) == 0)
      return std::stoi(line.substr(line.find('=') + 1));
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"IMLS spiking-Transformer toolkit"};
  app.require_subcommand(1);

  // --- equiv ---------------------------------------------------------------
  auto* equiv = app.add_subcommand(
      "equiv", "multi-level vs iterative firing sweep and event-matmul oracle");

  // --- reparam-check ---------------------------------------------------------
  auto* reparam = app.add_subcommand(
      "reparam-check", "factored vs fused attention equivalence sweep");
  uint64_t rp_seed = 1;
  int rp_trials = 100;
  reparam->add_option("--seed", rp_seed, "sweep seed");
  reparam->add_option("--trials", rp_trials, "number of random instances");

  // --- train -----------------------------------------------------------------
  auto* train = app.add_subcommand("train", "train on the synthetic task");
  ConfigArgs train_cfg;
  train_cfg.add_common(train);
  std::string out_checkpoint, metrics_csv;
  train->add_option("--out-checkpoint", out_checkpoint, "checkpoint to write");
  train->add_option("--metrics-csv", metrics_csv, "per-epoch metrics CSV");
  train->add_option("--variant", train_cfg.variant,
                    "attention variant (hd_repssa_s, hd_repssa_l, repssa_s, "
                    "repssa_l, sdsa3)");
  train->add_option("--T", train_cfg.T, "time window");
  train->add_option("--seed", train_cfg.seed, "training and data seed");

  // --- infer -----------------------------------------------------------------
  auto* infer = app.add_subcommand("infer", "run inference over a manifest");
  std::string in_checkpoint, manifest, energy_csv;
  bool spike_driven = false;
  int infer_threads = 1;
  infer->add_option("--checkpoint", in_checkpoint, "model checkpoint")->required();
  infer->add_option("--manifest", manifest, "manifest of feature CSVs")->required();
  infer->add_flag("--spike-driven", spike_driven,
                  "event-driven inference (fuses the model if needed)");
  infer->add_option("--energy-csv", energy_csv,
                    "write the per-layer energy report here");
  infer->add_option("--threads", infer_threads, "evaluation threads");

  // --- energy ------------------------------------------------------------------
  auto* energy = app.add_subcommand("energy", "energy estimate over a manifest");
  std::string en_checkpoint, en_manifest, en_csv;
  energy->add_option("--checkpoint", en_checkpoint, "model checkpoint")->required();
  energy->add_option("--manifest", en_manifest, "manifest of feature CSVs")
      ->required();
  energy->add_option("--out-csv", en_csv, "per-layer energy CSV");

  // --- mask -------------------------------------------------------------------
  auto* mask = app.add_subcommand("mask", "emit a hierarchical decay mask");
  int mask_layer = 1;
  int64_t mask_len = 8;
  std::string mask_csv;
  mask->add_option("--layer", mask_layer, "1-based layer index")->required();
  mask->add_option("--len", mask_len, "sequence length")->required();
  mask->add_option("--out-csv", mask_csv, "output CSV path")->required();

  // --- attn-dump -----------------------------------------------------------------
  auto* attn = app.add_subcommand("attn-dump", "dump per-head attention maps");
  std::string ad_checkpoint, ad_utterance, ad_csv;
  int ad_layer = 1;
  attn->add_option("--checkpoint", ad_checkpoint, "model checkpoint")->required();
  attn->add_option("--utterance", ad_utterance, "feature CSV of one utterance")
      ->required();
  attn->add_option("--layer", ad_layer, "1-based layer index")->required();
  attn->add_option("--out-csv", ad_csv, "output CSV path")->required();

  // --- gen-data -----------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "write the synthetic task to disk");
  ConfigArgs gen_cfg;
  gen_cfg.add_common(gen);
  std::string gen_dir;
  bool gen_test = false;
  gen->add_option("--out-dir", gen_dir, "output directory")->required();
  gen->add_flag("--test-split", gen_test, "draw the held-out split");
  gen->add_option("--seed", gen_cfg.seed, "data seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*equiv) {
      std::cout << "# resolved config\n(no options)\n\n";
      StringOut report;
      imls_status s = imls_check_equivalence(&report.s);
      std::cout << report.str();
      if (s == IMLS_OK) {
        std::cout << "equivalence checks passed\n";
        return kExitOk;
      }
      return fail(s, "equiv");
    }

    if (*reparam) {
      std::cout << "# resolved config\nseed = " << rp_seed
                << "\ntrials = " << rp_trials << "\n\n";
      StringOut report;
      imls_status s = imls_check_reparam(rp_seed, rp_trials, &report.s);
      std::cout << report.str();
      if (s == IMLS_OK) {
        std::cout << "reparameterization checks passed\n";
        return kExitOk;
      }
      return fail(s, "reparam-check");
    }

    if (*train) {
      const std::string text = train_cfg.compose();
      if (int rc = print_resolved(text); rc != kExitOk) return rc;
      ModelHandle model;
      uint64_t seed = train_cfg.seed >= 0 ? static_cast<uint64_t>(train_cfg.seed) : 1;
      if (imls_status s = imls_model_create(text.c_str(), seed, &model.m);
          s != IMLS_OK)
        return fail(s, "model");
      DatasetHandle train_set, test_set;
      if (imls_status s = imls_dataset_synthetic(text.c_str(), 0, &train_set.d);
          s != IMLS_OK)
        return fail(s, "train data");
      if (imls_status s = imls_dataset_synthetic(text.c_str(), 1, &test_set.d);
          s != IMLS_OK)
        return fail(s, "test data");
      std::cout << "training on " << imls_dataset_size(train_set.d)
                << " utterances, testing on " << imls_dataset_size(test_set.d)
                << "\n";
      double final_acc = 0.0;
      if (imls_status s = imls_train(model.m, train_set.d, test_set.d, text.c_str(),
                                     metrics_csv.empty() ? nullptr : metrics_csv.c_str(),
                                     &final_acc);
          s != IMLS_OK)
        return fail(s, "train");
      std::printf("final test accuracy: %.4f\n", final_acc);
      if (!out_checkpoint.empty()) {
        if (imls_status s = imls_model_save(model.m, out_checkpoint.c_str());
            s != IMLS_OK)
          return fail(s, "save");
        std::cout << "checkpoint written to " << out_checkpoint << "\n";
      }
      return kExitOk;
    }

    if (*infer) {
      std::cout << "# resolved config\ncheckpoint = " << in_checkpoint
                << "\nmanifest = " << manifest
                << "\nspike_driven = " << (spike_driven ? 1 : 0)
                << "\nthreads = " << infer_threads << "\n\n";
      ModelHandle model;
      if (imls_status s = imls_model_load(in_checkpoint.c_str(), &model.m);
          s != IMLS_OK)
        return fail(s, "load");
      if (spike_driven && imls_model_is_fused(model.m) == 0) {
        std::cout << "notice: checkpoint is unfused; reparameterizing for "
                     "spike-driven inference\n";
        if (imls_status s = imls_model_reparameterize(model.m); s != IMLS_OK)
          return fail(s, "reparameterize");
      }
      int32_t classes = 0;
      imls_model_num_classes(model.m, &classes);
      DatasetHandle data;
      if (imls_status s =
              imls_dataset_load_manifest(manifest.c_str(), classes, &data.d);
          s != IMLS_OK)
        return fail(s, "manifest");
      double acc = 0.0;
      if (imls_status s = imls_evaluate(model.m, data.d, spike_driven ? 1 : 0,
                                        infer_threads, &acc);
          s != IMLS_OK)
        return fail(s, "evaluate");
      std::printf("utterances: %lld  accuracy: %.4f\n",
                  static_cast<long long>(imls_dataset_size(data.d)), acc);
      if (!energy_csv.empty()) {
        if (imls_model_is_fused(model.m) == 0) {
          std::cout << "notice: fusing model for the energy report\n";
          if (imls_status s = imls_model_reparameterize(model.m); s != IMLS_OK)
            return fail(s, "reparameterize");
        }
        double ann = 0, snn = 0, ratio = 0, rel = 0;
        if (imls_status s = imls_energy_report(model.m, data.d, energy_csv.c_str(),
                                               &ann, &snn, &ratio, &rel);
            s != IMLS_OK)
          return fail(s, "energy");
        std::printf("E_ANN_mJ=%.6f E_SNN_mJ=%.6f saving_ratio=%.2f\n", ann, snn,
                    ratio);
      }
      return kExitOk;
    }

    if (*energy) {
      std::cout << "# resolved config\ncheckpoint = " << en_checkpoint
                << "\nmanifest = " << en_manifest << "\n\n";
      ModelHandle model;
      if (imls_status s = imls_model_load(en_checkpoint.c_str(), &model.m);
          s != IMLS_OK)
        return fail(s, "load");
      if (imls_model_is_fused(model.m) == 0) {
        std::cout << "notice: checkpoint is unfused; reparameterizing\n";
        if (imls_status s = imls_model_reparameterize(model.m); s != IMLS_OK)
          return fail(s, "reparameterize");
      }
      int32_t classes = 0;
      imls_model_num_classes(model.m, &classes);
      DatasetHandle data;
      if (imls_status s =
              imls_dataset_load_manifest(en_manifest.c_str(), classes, &data.d);
          s != IMLS_OK)
        return fail(s, "manifest");
      if (imls_dataset_size(data.d) == 0) {
        std::cerr << "error: empty manifest\n";
        return kExitUsage;
      }
      double ann = 0, snn = 0, ratio = 0, rel = 0;
      if (imls_status s = imls_energy_report(
              model.m, data.d, en_csv.empty() ? nullptr : en_csv.c_str(), &ann,
              &snn, &ratio, &rel);
          s != IMLS_OK)
        return fail(s, "energy");
      std::printf("E_ANN_mJ=%.6f E_SNN_mJ=%.6f saving_ratio=%.2f\n", ann, snn, ratio);
      std::printf("dual-route agreement: %.3g relative\n", rel);
      if (rel > 1e-6) {
        std::cerr << "error: event-count and rate-based energy disagree\n";
        return kExitCheckFailed;
      }
      return kExitOk;
    }

    if (*mask) {
      std::cout << "# resolved config\nlayer = " << mask_layer
                << "\nlen = " << mask_len << "\nout_csv = " << mask_csv << "\n\n";
      if (imls_status s =
              imls_decay_mask_csv(mask_layer, mask_len, mask_csv.c_str());
          s != IMLS_OK)
        return fail(s, "mask");
      std::cout << "decay mask written to " << mask_csv << "\n";
      return kExitOk;
    }

    if (*attn) {
      std::cout << "# resolved config\ncheckpoint = " << ad_checkpoint
                << "\nutterance = " << ad_utterance << "\nlayer = " << ad_layer
                << "\nout_csv = " << ad_csv << "\n\n";
      ModelHandle model;
      if (imls_status s = imls_model_load(ad_checkpoint.c_str(), &model.m);
          s != IMLS_OK)
        return fail(s, "load");
      if (imls_status s = imls_attention_dump(model.m, ad_utterance.c_str(),
                                              ad_layer, ad_csv.c_str());
          s != IMLS_OK)
        return fail(s, "attn-dump");
      std::cout << "attention maps written to " << ad_csv << "\n";
      return kExitOk;
    }

    if (*gen) {
      const std::string text = gen_cfg.compose();
      if (int rc = print_resolved(text); rc != kExitOk) return rc;
      DatasetHandle data;
      if (imls_status s =
              imls_dataset_synthetic(text.c_str(), gen_test ? 1 : 0, &data.d);
          s != IMLS_OK)
        return fail(s, "gen-data");
      StringOut manifest_path;
      if (imls_status s =
              imls_dataset_write(data.d, gen_dir.c_str(), &manifest_path.s);
          s != IMLS_OK)
        return fail(s, "write");
      std::cout << imls_dataset_size(data.d) << " utterances written; manifest at "
                << manifest_path.str() << "\n";
      return kExitOk;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}
