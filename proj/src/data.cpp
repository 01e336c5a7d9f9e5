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

#include "data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rng.hpp"

namespace imls {

std::vector<Utterance> gen_synthetic(const SyntheticSpec& spec) {
  Pcg32 rng(spec.seed);
  std::vector<Utterance> utts;
  utts.reserve(static_cast<size_t>(spec.num_per_class * spec.num_classes));
  const double two_pi = 2.0 * 3.14159265358979323846;
  for (int k = 0; k < spec.num_classes; ++k) {
    const double freq = 1.0 + k;
    for (int i = 0; i < spec.num_per_class; ++i) {
      const int64_t len = rng.next_int(spec.len_min, spec.len_max);
      Tensor f({len, spec.c_in});
      for (int64_t t = 0; t < len; ++t)
        for (int64_t c = 0; c < spec.c_in; ++c) {
          const double phase = two_pi * freq * static_cast<double>(t) /
                                   static_cast<double>(len) +
                               static_cast<double>(c) * 3.14159265358979323846 /
                                   static_cast<double>(spec.c_in);
          const double value =
              std::sin(phase) + static_cast<double>(spec.noise) * rng.next_normal();
          f.at(t, c) = static_cast<float>(value * static_cast<double>(spec.scale));
        }
      char id[32];
      std::snprintf(id, sizeof id, "class%d_%04d", k, i);
      utts.push_back(Utterance{std::move(f), k, id});
    }
  }
  return utts;
}

namespace {

bool blank_or_comment(const std::string& line) {
  for (char ch : line) {
    if (ch == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(ch))) return false;
  }
  return true;
}

std::string trimmed(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

}  // namespace

Tensor load_feature_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open feature file '" + path + "'");
  std::vector<float> values;
  int64_t cols = -1, rows = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank_or_comment(line)) continue;
    std::stringstream ss(line);
    std::string cell;
    int64_t row_cols = 0;
    while (std::getline(ss, cell, ',')) {
      cell = trimmed(cell);
      try {
        size_t used = 0;
        float v = std::stof(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        values.push_back(v);
      } catch (const std::exception&) {
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": non-numeric cell '" + cell + "'");
      }
      ++row_cols;
    }
    if (cols < 0) cols = row_cols;
    if (row_cols != cols)
      throw ParseError(path + ":" + std::to_string(line_no) + ": ragged row (" +
                       std::to_string(row_cols) + " columns, expected " +
                       std::to_string(cols) + ")");
    ++rows;
  }
  if (rows == 0) throw ParseError(path + ": empty feature file");
  Tensor t({rows, cols}, std::move(values));
  t.require_finite(path);
  return t;
}

void write_feature_csv(const std::string& path, const Tensor& features) {
  std::ofstream os(path);
  if (!os) throw ParseError("cannot open '" + path + "' for writing");
  char buf[32];
  for (int64_t r = 0; r < features.dim(0); ++r) {
    for (int64_t c = 0; c < features.dim(1); ++c) {
      // 9 significant digits round-trips 32-bit floats through decimal text.
      std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(features.at(r, c)));
      os << (c ? "," : "") << buf;
    }
    os << "\n";
  }
}

std::vector<Utterance> load_manifest(const std::string& path, int num_classes) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open manifest '" + path + "'");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::vector<Utterance> utts;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank_or_comment(line)) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected 'feature_csv_path,label'");
    const std::string file = trimmed(line.substr(0, comma));
    const std::string label_text = trimmed(line.substr(comma + 1));
    int label = 0;
    try {
      size_t used = 0;
      label = std::stoi(label_text, &used);
      if (used != label_text.size()) throw std::invalid_argument(label_text);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": non-numeric label '" + label_text + "'");
    }
    if (label < 0 || (num_classes > 0 && label >= num_classes))
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": label " + std::to_string(label) + " out of range");
    std::filesystem::path fpath(file);
    if (fpath.is_relative()) fpath = base / fpath;
    Utterance u;
    u.features = load_feature_csv(fpath.string());
    u.label = label;
    u.id = file;
    utts.push_back(std::move(u));
  }
  return utts;
}

std::string write_dataset(const std::vector<Utterance>& utts, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  std::ofstream manifest(base / "manifest.csv");
  if (!manifest) throw ParseError("cannot write manifest under '" + dir + "'");
  manifest << "# feature_csv_path,label\n";
  for (size_t i = 0; i < utts.size(); ++i) {
    const std::string name = utts[i].id.empty()
                                 ? "utt" + std::to_string(i) + ".csv"
                                 : utts[i].id + ".csv";
    write_feature_csv((base / name).string(), utts[i].features);
    manifest << name << "," << utts[i].label << "\n";
  }
  return (base / "manifest.csv").string();
}

std::vector<Batch> make_batches(const std::vector<Utterance>& utts,
                                int batch_size, uint64_t shuffle_seed) {
  if (utts.empty()) throw DimensionError("cannot batch an empty utterance list");
  if (batch_size < 1) throw DimensionError("batch size must be >= 1");
  std::vector<size_t> order(utts.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Pcg32 rng(shuffle_seed);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[static_cast<size_t>(rng.next_int(0, static_cast<int64_t>(i) - 1))]);

  std::vector<Batch> batches;
  const int64_t c_in = utts.front().features.dim(1);
  for (size_t start = 0; start < order.size(); start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(order.size(), start + static_cast<size_t>(batch_size));
    int64_t l_max = 0;
    for (size_t i = start; i < end; ++i)
      l_max = std::max(l_max, utts[order[i]].length());
    Batch b;
    b.features = Tensor({static_cast<int64_t>(end - start), l_max, c_in});
    for (size_t i = start; i < end; ++i) {
      const Utterance& u = utts[order[i]];
      const int64_t bi = static_cast<int64_t>(i - start);
      for (int64_t t = 0; t < u.length(); ++t)
        for (int64_t c = 0; c < c_in; ++c)
          b.features.at((bi * l_max + t) * c_in + c) = u.features.at(t, c);
      b.valid_lengths.push_back(u.length());
      b.labels.push_back(u.label);
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

}  // namespace imls
