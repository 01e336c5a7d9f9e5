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
// Synthetic sequence-classification data and CSV feature ingestion with
// variable-length batching.

#ifndef IMLS_DATA_HPP
#define IMLS_DATA_HPP

#include <string>
#include <vector>

#include "tensor.hpp"

namespace imls {

struct Utterance {
  Tensor features;  // [L x C_in]
  int label = 0;
  std::string id;

  int64_t length() const { return features.dim(0); }
};

struct Batch {
  Tensor features;  // [B x L_max x C_in], padded region exactly zero
  std::vector<int64_t> valid_lengths;
  std::vector<int> labels;
};

struct SyntheticSpec {
  int num_per_class = 200;
  int num_classes = 4;
  int c_in = 16;
  int len_min = 24;
  int len_max = 40;
  float noise = 0.1f;
  float scale = 1.0f;  // multiplies every feature; exercises input ranges
  uint64_t seed = 1;
};

// Class k utterance: feature[t][c] = sin(2*pi*(1+k)*t/L + c*pi/C_in) plus
// noise, with L drawn uniformly from [len_min, len_max]. Deterministic for
// a given seed.
std::vector<Utterance> gen_synthetic(const SyntheticSpec& spec);

// Manifest: one "feature_csv_path,label" per line, '#' comments. Relative
// feature paths resolve against the manifest directory.
std::vector<Utterance> load_manifest(const std::string& path, int num_classes);

// Loads one feature CSV of L rows x C_in decimal columns.
Tensor load_feature_csv(const std::string& path);
void write_feature_csv(const std::string& path, const Tensor& features);

// Writes every utterance as a CSV under dir and a manifest referencing them.
std::string write_dataset(const std::vector<Utterance>& utts,
                          const std::string& dir);

std::vector<Batch> make_batches(const std::vector<Utterance>& utts,
                                int batch_size, uint64_t shuffle_seed);

}  // namespace imls

#endif  // IMLS_DATA_HPP
