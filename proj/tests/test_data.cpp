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

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "config.hpp"
#include "data.hpp"
#include "doctest.h"

using namespace imls;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_per_class = 20;
  s.seed = 5;
  return s;
}

// Nearest-centroid classifier on time-averaged magnitude spectra, the
// separability oracle for the synthetic task.
double centroid_oracle_accuracy(const std::vector<Utterance>& train,
                                const std::vector<Utterance>& test,
                                int num_classes) {
  const int kMaxFreq = 8;
  auto descriptor = [&](const Utterance& u) {
    std::vector<double> mag(kMaxFreq + 1, 0.0);
    const int64_t L = u.length(), C = u.features.dim(1);
    for (int k = 0; k <= kMaxFreq; ++k) {
      double total = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        double re = 0.0, im = 0.0;
        for (int64_t t = 0; t < L; ++t) {
          const double phase = 2.0 * 3.14159265358979323846 * k *
                               static_cast<double>(t) / static_cast<double>(L);
          re += u.features.at(t, c) * std::cos(phase);
          im -= u.features.at(t, c) * std::sin(phase);
        }
        total += std::sqrt(re * re + im * im) / static_cast<double>(L);
      }
      mag[static_cast<size_t>(k)] = total / static_cast<double>(C);
    }
    return mag;
  };

  std::vector<std::vector<double>> centroids(
      static_cast<size_t>(num_classes), std::vector<double>(kMaxFreq + 1, 0.0));
  std::vector<int> counts(static_cast<size_t>(num_classes), 0);
  for (const auto& u : train) {
    auto d = descriptor(u);
    for (size_t k = 0; k < d.size(); ++k) centroids[static_cast<size_t>(u.label)][k] += d[k];
    counts[static_cast<size_t>(u.label)] += 1;
  }
  for (int c = 0; c < num_classes; ++c)
    for (auto& v : centroids[static_cast<size_t>(c)]) v /= counts[static_cast<size_t>(c)];

  int correct = 0;
  for (const auto& u : test) {
    auto d = descriptor(u);
    int best = 0;
    double best_dist = 1e300;
    for (int c = 0; c < num_classes; ++c) {
      double dist = 0.0;
      for (size_t k = 0; k < d.size(); ++k) {
        const double diff = d[k] - centroids[static_cast<size_t>(c)][k];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    correct += best == u.label;
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

}  // namespace

TEST_CASE("synthetic generation is deterministic with bounded lengths") {
  auto a = gen_synthetic(small_spec());
  auto b = gen_synthetic(small_spec());
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == 80);
  for (size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].features.values() == b[i].features.values());
    CHECK(a[i].length() >= 24);
    CHECK(a[i].length() <= 40);
  }
  SyntheticSpec other = small_spec();
  other.seed = 6;
  auto c = gen_synthetic(other);
  CHECK(c[0].features.values() != a[0].features.values());
}

TEST_CASE("classes are separable by the spectral centroid oracle") {
  SyntheticSpec train_spec;
  train_spec.num_per_class = 40;
  train_spec.seed = 11;
  SyntheticSpec test_spec = train_spec;
  test_spec.num_per_class = 20;
  test_spec.seed = 12;
  auto train = gen_synthetic(train_spec);
  auto test = gen_synthetic(test_spec);
  CHECK(centroid_oracle_accuracy(train, test, 4) > 0.9);
}

TEST_CASE("feature CSV round trip preserves values to decimal precision") {
  auto utts = gen_synthetic(small_spec());
  const std::string dir = "imls_test_data_dir";
  const std::string manifest = write_dataset(utts, dir);
  auto loaded = load_manifest(manifest, 4);
  REQUIRE(loaded.size() == utts.size());
  for (size_t i = 0; i < utts.size(); ++i) {
    CHECK(loaded[i].label == utts[i].label);
    REQUIRE(loaded[i].features.same_shape(utts[i].features));
    CHECK(relative_diff(loaded[i].features, utts[i].features) < 1e-5);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest and feature parsing report precise errors") {
  const std::string dir = "imls_test_bad_dir";
  std::filesystem::create_directories(dir);

  {
    std::ofstream os(dir + "/ragged.csv");
    os << "1.0,2.0\n3.0\n";
  }
  try {
    load_feature_csv(dir + "/ragged.csv");
    FAIL("ragged row accepted");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  {
    std::ofstream os(dir + "/nan.csv");
    os << "1.0,abc\n";
  }
  CHECK_THROWS_AS(load_feature_csv(dir + "/nan.csv"), ParseError);

  {
    std::ofstream os(dir + "/feat.csv");
    os << "1.0,2.0\n";
    std::ofstream ms(dir + "/manifest.csv");
    ms << "# comment line\n";
    ms << "feat.csv,9\n";
  }
  CHECK_THROWS_AS(load_manifest(dir + "/manifest.csv", 4), ParseError);

  CHECK_THROWS_AS(load_manifest(dir + "/missing.csv", 4), ParseError);

  {
    std::ofstream ms(dir + "/manifest2.csv");
    ms << "feat.csv,1\n";
    ms << "gone.csv,1\n";
  }
  CHECK_THROWS_AS(load_manifest(dir + "/manifest2.csv", 4), ParseError);

  std::filesystem::remove_all(dir);
}

TEST_CASE("two-line manifest loads two utterances") {
  const std::string dir = "imls_test_two";
  std::filesystem::create_directories(dir);
  {
    std::ofstream a(dir + "/a.csv");
    a << "0.5,1.5\n-0.25,0.75\n";
    std::ofstream b(dir + "/b.csv");
    b << "1,2\n";
    std::ofstream ms(dir + "/manifest.csv");
    ms << "a.csv,0\nb.csv,3\n";
  }
  auto utts = load_manifest(dir + "/manifest.csv", 4);
  REQUIRE(utts.size() == 2);
  CHECK(utts[0].length() == 2);
  CHECK(utts[0].features.at(1, 0) == -0.25f);
  CHECK(utts[1].label == 3);
  std::filesystem::remove_all(dir);
}

TEST_CASE("batching pads with exact zeros and keeps lengths") {
  auto utts = gen_synthetic(small_spec());
  auto batches = make_batches(utts, 16, 3);
  int64_t seen = 0;
  for (const auto& b : batches) {
    const int64_t bs = b.features.dim(0), lmax = b.features.dim(1);
    const int64_t c = b.features.dim(2);
    seen += bs;
    for (int64_t i = 0; i < bs; ++i) {
      CHECK(b.valid_lengths[static_cast<size_t>(i)] <= lmax);
      for (int64_t t = b.valid_lengths[static_cast<size_t>(i)]; t < lmax; ++t)
        for (int64_t j = 0; j < c; ++j)
          CHECK(b.features.at((i * lmax + t) * c + j) == 0.0f);
    }
  }
  CHECK(seen == static_cast<int64_t>(utts.size()));

  auto single = make_batches({utts[0]}, 4, 1);
  REQUIRE(single.size() == 1);
  CHECK(single[0].features.dim(1) == utts[0].length());  // no padding

  auto b1 = make_batches(utts, 16, 3);
  auto b2 = make_batches(utts, 16, 3);
  CHECK(b1[0].labels == b2[0].labels);
  CHECK(b1[0].features.values() == b2[0].features.values());
  auto b3 = make_batches(utts, 16, 4);
  CHECK(b3[0].labels != b1[0].labels);

  CHECK_THROWS_AS(make_batches({}, 4, 1), DimensionError);
}

TEST_CASE("run config layering, resolution and rejection") {
  RunConfig cfg;
  cfg.apply_text("model.d = 24 # inline comment\n\n# full comment\nmodel.heads = 3\n");
  CHECK(cfg.get_int("model.d") == 24);
  CHECK(cfg.get_int("model.heads") == 3);
  CHECK_THROWS_AS(cfg.apply_text("no_such.key = 5\n"), ParseError);
  CHECK_THROWS_AS(cfg.apply_text("model.d\n"), ParseError);

  const std::string resolved = cfg.resolved_text();
  CHECK(resolved.find("model.d = 24") != std::string::npos);
  CHECK(resolved.find("train.lr") != std::string::npos);

  ModelConfig mc = cfg.model_config();
  CHECK(mc.d == 24);
  CHECK(mc.heads == 3);

  // Train/test splits draw from disjoint seeds.
  CHECK(cfg.synthetic_test_spec().seed == cfg.synthetic_spec().seed + 1);
  CHECK(cfg.synthetic_test_spec().num_per_class == cfg.get_int("data.test_per_class"));
}
