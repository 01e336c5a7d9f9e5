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
// Run configuration: `key = value` text with '#' comments, a fixed key
// table with defaults, and override layering (file first, then flags).
// Unknown keys are rejected.

#ifndef IMLS_CONFIG_HPP
#define IMLS_CONFIG_HPP

#include <map>
#include <string>

#include "data.hpp"
#include "model.hpp"
#include "train.hpp"

namespace imls {

class RunConfig {
 public:
  RunConfig();  // defaults

  void apply_file(const std::string& path);
  void apply_text(const std::string& text);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::string resolved_text() const;

  ModelConfig model_config() const;
  SyntheticSpec synthetic_spec() const;       // data.seed
  SyntheticSpec synthetic_test_spec() const;  // data.seed + 1, test size
  TrainConfig train_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace imls

#endif  // IMLS_CONFIG_HPP
