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

#include "config.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace imls {

namespace {

const std::map<std::string, std::string>& default_values() {
  static const std::map<std::string, std::string> defaults = {
      {"model.num_layers", "2"},
      {"model.d", "32"},
      {"model.heads", "4"},
      {"model.d_ff", "128"},
      {"model.t", "4"},
      {"model.variant", "hd_repssa_s"},
      {"model.num_classes", "4"},
      {"model.input_dim", "16"},
      {"neuron.theta", "0.5"},
      {"neuron.beta", "1.0"},
      {"neuron.alpha", "0.1"},
      {"neuron.epsilon", "1e-5"},
      {"neuron.adaptive", "true"},
      {"train.epochs", "30"},
      {"train.batch_size", "8"},
      {"train.lr", "0.0015"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.eps", "1e-8"},
      {"train.grad_clip", "0"},
      {"train.seed", "1"},
      {"train.target_acc", "-1"},
      {"data.num_per_class", "200"},
      {"data.test_per_class", "50"},
      {"data.len_min", "24"},
      {"data.len_max", "40"},
      {"data.noise", "0.1"},
      {"data.scale", "1.0"},
      {"data.seed", "1"},
      {"run.threads", "1"},
  };
  return defaults;
}

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParseError("unknown config key '" + key + "'");
  it->second = value;
}

void RunConfig::apply_text(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(line_no) +
                       ": expected 'key = value'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::apply_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  apply_text(ss.str());
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ParseError("unknown config key '" + key + "'");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoi(get(key));
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "' is not an integer: " + get(key));
  }
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get(key));
  } catch (const std::exception&) {
    throw ParseError("config key '" + key + "' is not a number: " + get(key));
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError("config key '" + key + "' is not a boolean: " + v);
}

std::string RunConfig::resolved_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
  return os.str();
}

ModelConfig RunConfig::model_config() const {
  ModelConfig cfg;
  cfg.num_layers = get_int("model.num_layers");
  cfg.d = get_int("model.d");
  cfg.heads = get_int("model.heads");
  cfg.d_ff = get_int("model.d_ff");
  cfg.variant = variant_from_name(get("model.variant"));
  cfg.num_classes = get_int("model.num_classes");
  cfg.input_dim = get_int("model.input_dim");
  cfg.neuron.T = get_int("model.t");
  cfg.neuron.theta = static_cast<float>(get_double("neuron.theta"));
  cfg.neuron.beta = static_cast<float>(get_double("neuron.beta"));
  cfg.neuron.alpha = static_cast<float>(get_double("neuron.alpha"));
  cfg.neuron.epsilon = static_cast<float>(get_double("neuron.epsilon"));
  cfg.neuron.adaptive = get_bool("neuron.adaptive");
  cfg.validate();
  return cfg;
}

SyntheticSpec RunConfig::synthetic_spec() const {
  SyntheticSpec s;
  s.num_per_class = get_int("data.num_per_class");
  s.num_classes = get_int("model.num_classes");
  s.c_in = get_int("model.input_dim");
  s.len_min = get_int("data.len_min");
  s.len_max = get_int("data.len_max");
  s.noise = static_cast<float>(get_double("data.noise"));
  s.scale = static_cast<float>(get_double("data.scale"));
  s.seed = static_cast<uint64_t>(get_int("data.seed"));
  return s;
}

SyntheticSpec RunConfig::synthetic_test_spec() const {
  SyntheticSpec s = synthetic_spec();
  s.num_per_class = get_int("data.test_per_class");
  s.seed += 1;  // disjoint draw from the training split
  return s;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.epochs = get_int("train.epochs");
  t.batch_size = get_int("train.batch_size");
  t.seed = static_cast<uint64_t>(get_int("train.seed"));
  t.adam.lr = get_double("train.lr");
  t.adam.beta1 = get_double("train.beta1");
  t.adam.beta2 = get_double("train.beta2");
  t.adam.eps = get_double("train.eps");
  t.adam.grad_clip = get_double("train.grad_clip");
  t.target_acc = get_double("train.target_acc");
  return t;
}

}  // namespace imls
