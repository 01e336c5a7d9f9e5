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
// The shared-library surface, exercised exactly the way an external client
// would use it.

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "doctest.h"
#include "imls/imls.h"

namespace {

struct Str {
  char* s = nullptr;
  ~Str() { imls_free_string(s); }
};

const char* kTinyConfig =
    "model.num_layers = 1\n"
    "model.d = 16\n"
    "model.heads = 4\n"
    "model.d_ff = 32\n"
    "model.input_dim = 8\n"
    "data.num_per_class = 6\n"
    "data.test_per_class = 3\n"
    "data.len_min = 8\n"
    "data.len_max = 12\n"
    "train.epochs = 2\n";

}  // namespace

TEST_CASE("config resolution fills defaults and rejects unknown keys") {
  Str out;
  REQUIRE(imls_resolve_config("model.d = 24\n", &out.s) == IMLS_OK);
  CHECK(std::string(out.s).find("model.d = 24") != std::string::npos);
  CHECK(std::string(out.s).find("neuron.alpha = 0.1") != std::string::npos);

  Str bad;
  CHECK(imls_resolve_config("bogus.key = 1\n", &bad.s) == IMLS_ERR_PARSE);
  CHECK(std::strlen(imls_last_error()) > 0);
}

TEST_CASE("null arguments are rejected uniformly") {
  CHECK(imls_model_create("", 1, nullptr) == IMLS_ERR_INVALID_ARGUMENT);
  CHECK(imls_model_save(nullptr, "x") == IMLS_ERR_INVALID_ARGUMENT);
  CHECK(imls_model_is_fused(nullptr) == -1);
  CHECK(imls_dataset_size(nullptr) == -1);
}

TEST_CASE("model lifecycle over the C surface") {
  imls_model* model = nullptr;
  REQUIRE(imls_model_create(kTinyConfig, 7, &model) == IMLS_OK);
  CHECK(imls_model_is_fused(model) == 0);

  int32_t classes = 0, input_dim = 0;
  CHECK(imls_model_num_classes(model, &classes) == IMLS_OK);
  CHECK(imls_model_input_dim(model, &input_dim) == IMLS_OK);
  CHECK(classes == 4);
  CHECK(input_dim == 8);

  imls_dataset* train_set = nullptr;
  imls_dataset* test_set = nullptr;
  REQUIRE(imls_dataset_synthetic(kTinyConfig, 0, &train_set) == IMLS_OK);
  REQUIRE(imls_dataset_synthetic(kTinyConfig, 1, &test_set) == IMLS_OK);
  CHECK(imls_dataset_size(train_set) == 24);
  CHECK(imls_dataset_size(test_set) == 12);
  CHECK(imls_dataset_label(train_set, 0) == 0);
  CHECK(imls_dataset_length(train_set, 0) >= 8);

  double acc = -1.0;
  REQUIRE(imls_train(model, train_set, test_set, kTinyConfig,
                     "imls_capi_metrics.csv", &acc) == IMLS_OK);
  CHECK(acc >= 0.0);
  CHECK(std::filesystem::exists("imls_capi_metrics.csv"));

  // Dense inference on one utterance pulled back out through a CSV.
  Str manifest;
  REQUIRE(imls_dataset_write(test_set, "imls_capi_data", &manifest.s) == IMLS_OK);
  std::vector<float> logits(static_cast<size_t>(classes));
  std::string first_csv = std::string("imls_capi_data/class0_0000.csv");
  REQUIRE(imls_infer_csv(model, first_csv.c_str(), 0, logits.data()) == IMLS_OK);

  // Spike-driven inference requires fusion.
  CHECK(imls_infer_csv(model, first_csv.c_str(), 1, logits.data()) ==
        IMLS_ERR_STATE);
  REQUIRE(imls_model_reparameterize(model) == IMLS_OK);
  CHECK(imls_model_is_fused(model) == 1);
  CHECK(imls_model_reparameterize(model) == IMLS_ERR_STATE);
  std::vector<float> spike_logits(static_cast<size_t>(classes));
  REQUIRE(imls_infer_csv(model, first_csv.c_str(), 1, spike_logits.data()) == IMLS_OK);
  for (int i = 0; i < classes; ++i)
    CHECK(spike_logits[static_cast<size_t>(i)] ==
          doctest::Approx(logits[static_cast<size_t>(i)]).epsilon(1e-3));

  // Training a fused model must fail.
  CHECK(imls_train(model, train_set, test_set, kTinyConfig, nullptr, nullptr) ==
        IMLS_ERR_STATE);

  // Save, load, bitwise-stable re-save.
  REQUIRE(imls_model_save(model, "imls_capi_model.ckpt") == IMLS_OK);
  imls_model* loaded = nullptr;
  REQUIRE(imls_model_load("imls_capi_model.ckpt", &loaded) == IMLS_OK);
  CHECK(imls_model_is_fused(loaded) == 1);
  Str cfg_text;
  CHECK(imls_model_config_text(loaded, &cfg_text.s) == IMLS_OK);
  CHECK(std::string(cfg_text.s).find("fused=1") != std::string::npos);

  double e_ann = 0, e_snn = 0, ratio = 0, rel = 0;
  REQUIRE(imls_energy_report(loaded, test_set, "imls_capi_energy.csv", &e_ann,
                             &e_snn, &ratio, &rel) == IMLS_OK);
  CHECK(e_ann > e_snn);
  CHECK(rel < 1e-6);

  double spike_acc = -1.0;
  CHECK(imls_evaluate(loaded, test_set, 1, 2, &spike_acc) == IMLS_OK);
  CHECK(spike_acc >= 0.0);

  imls_model_free(loaded);
  imls_model_free(model);
  imls_dataset_free(train_set);
  imls_dataset_free(test_set);
  std::filesystem::remove("imls_capi_metrics.csv");
  std::filesystem::remove("imls_capi_model.ckpt");
  std::filesystem::remove("imls_capi_energy.csv");
  std::filesystem::remove_all("imls_capi_data");
}

TEST_CASE("decay mask values through the C surface") {
  double v = 0.0;
  REQUIRE(imls_decay_mask_value(1, 1, &v) == IMLS_OK);
  CHECK(v == 0.984375);
  REQUIRE(imls_decay_mask_value(12, 1, &v) == IMLS_OK);
  CHECK(v == 0.99999237060546875);
  CHECK(imls_decay_mask_value(0, 1, &v) == IMLS_ERR_DIMENSION);
}

TEST_CASE("self checks succeed through the C surface") {
  Str report;
  CHECK(imls_check_equivalence(&report.s) == IMLS_OK);
  CHECK(std::string(report.s).find("0 failures") != std::string::npos);
  Str rep2;
  CHECK(imls_check_reparam(5, 10, &rep2.s) == IMLS_OK);
  Str rep3;
  CHECK(imls_check_reparam(5, 0, &rep3.s) == IMLS_OK);  // no-op success
}

TEST_CASE("load failures map onto format or parse errors") {
  imls_model* m = nullptr;
  CHECK(imls_model_load("does_not_exist.ckpt", &m) == IMLS_ERR_FORMAT);
  imls_dataset* d = nullptr;
  CHECK(imls_dataset_load_manifest("does_not_exist.csv", 4, &d) == IMLS_ERR_PARSE);
}
