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
// End-to-end runs of the installed CLI binary: exit-code contract, file
// outputs, and the workflows a user actually types.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace {

#ifndef IMLS_CLI_PATH
#error "IMLS_CLI_PATH must point at the CLI binary"
#endif

struct RunResult {
  int exit_code = -1;
  std::string output;
};

RunResult run_cli(const std::string& args) {
  const std::string out_file = "imls_cli_test_out.txt";
  const std::string cmd =
      std::string(IMLS_CLI_PATH) + " " + args + " > " + out_file + " 2>&1";
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  std::ifstream is(out_file);
  std::stringstream ss;
  ss << is.rdbuf();
  r.output = ss.str();
  std::remove(out_file.c_str());
  return r;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

const char* kTinyFlags =
    "--set model.num_layers=1 --set model.d=16 --set model.d_ff=32 "
    "--set model.input_dim=8 --set data.num_per_class=6 "
    "--set data.test_per_class=3 --set data.len_min=8 --set data.len_max=12 "
    "--set train.epochs=2";

}  // namespace

TEST_CASE("equiv passes and reports the sweep") {
  RunResult r = run_cli("equiv");
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("4545 cases, 0 failures") != std::string::npos);
  CHECK(r.output.find("# resolved config") != std::string::npos);
}

TEST_CASE("reparam-check is deterministic per seed and honors --trials 0") {
  RunResult a = run_cli("reparam-check --seed 9 --trials 12");
  RunResult b = run_cli("reparam-check --seed 9 --trials 12");
  CHECK(a.exit_code == 0);
  CHECK(a.output == b.output);
  RunResult zero = run_cli("reparam-check --trials 0");
  CHECK(zero.exit_code == 0);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run_cli("no-such-command").exit_code == 2);
  CHECK(run_cli("train --variant bogus").exit_code == 2);
  CHECK(run_cli("mask --layer 1").exit_code == 2);  // missing required flags
  CHECK(run_cli("train --set nonsense.key=1").exit_code == 2);
}

TEST_CASE("mask writes the exact decay values symmetrically") {
  RunResult r = run_cli("mask --layer 1 --len 4 --out-csv imls_cli_mask.csv");
  CHECK(r.exit_code == 0);
  std::string csv = read_file("imls_cli_mask.csv");
  CHECK(csv.find("0.984375") != std::string::npos);
  // Parse and verify symmetry plus unit diagonal.
  std::vector<std::vector<double>> m;
  std::istringstream is(csv);
  std::string line;
  while (std::getline(is, line)) {
    std::vector<double> row;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
    m.push_back(row);
  }
  REQUIRE(m.size() == 4);
  for (size_t i = 0; i < 4; ++i) {
    CHECK(m[i][i] == 1.0);
    for (size_t j = 0; j < 4; ++j) CHECK(m[i][j] == m[j][i]);
  }
  std::remove("imls_cli_mask.csv");
}

TEST_CASE("train, infer, energy and attn-dump chain works end to end") {
  const std::string dir = "imls_cli_work";
  std::filesystem::create_directories(dir);
  RunResult train = run_cli(std::string("train ") + kTinyFlags + " --seed 3 " +
                            "--out-checkpoint " + dir + "/m.ckpt --metrics-csv " +
                            dir + "/metrics.csv");
  CHECK(train.exit_code == 0);
  CHECK(train.output.find("# resolved config") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/m.ckpt"));
  std::string metrics = read_file(dir + "/metrics.csv");
  CHECK(metrics.find("epoch,loss,train_acc,test_acc,fr_l0.attn.entry") == 0);

  // Identical seeds reproduce identical metrics byte for byte.
  RunResult again = run_cli(std::string("train ") + kTinyFlags + " --seed 3 " +
                            "--metrics-csv " + dir + "/metrics2.csv");
  CHECK(again.exit_code == 0);
  CHECK(read_file(dir + "/metrics2.csv") == metrics);

  RunResult gen = run_cli(std::string("gen-data ") + kTinyFlags +
                          " --test-split --seed 3 --out-dir " + dir + "/data");
  CHECK(gen.exit_code == 0);
  const std::string manifest = dir + "/data/manifest.csv";
  REQUIRE(std::filesystem::exists(manifest));

  RunResult infer = run_cli("infer --checkpoint " + dir + "/m.ckpt --manifest " +
                            manifest);
  CHECK(infer.exit_code == 0);
  CHECK(infer.output.find("accuracy:") != std::string::npos);

  RunResult spike = run_cli("infer --checkpoint " + dir + "/m.ckpt --manifest " +
                            manifest + " --spike-driven --energy-csv " + dir +
                            "/energy.csv");
  CHECK(spike.exit_code == 0);
  CHECK(spike.output.find("notice: checkpoint is unfused") != std::string::npos);
  std::string energy_csv = read_file(dir + "/energy.csv");
  CHECK(energy_csv.rfind("layer,flops,R,T,kind,energy_nJ", 0) == 0);
  CHECK(energy_csv.find("spike-fed") != std::string::npos);
  CHECK(energy_csv.find("real-fed") != std::string::npos);

  RunResult energy = run_cli("energy --checkpoint " + dir + "/m.ckpt --manifest " +
                             manifest);
  CHECK(energy.exit_code == 0);
  CHECK(energy.output.find("saving_ratio=") != std::string::npos);
  CHECK(energy.output.find("dual-route agreement") != std::string::npos);
  // The ratio is printed with two decimals.
  const auto pos = energy.output.find("saving_ratio=");
  const std::string after = energy.output.substr(pos + 13, 8);
  CHECK(after.find('.') != std::string::npos);

  // Empty manifest is a usage error.
  {
    std::ofstream empty(dir + "/empty.csv");
    empty << "# nothing\n";
  }
  RunResult empty = run_cli("energy --checkpoint " + dir + "/m.ckpt --manifest " +
                            dir + "/empty.csv");
  CHECK(empty.exit_code == 2);

  // Attention dump: long-format CSV whose rows sum to one per query.
  std::string utt;
  {
    std::ifstream mf(manifest);
    std::string line;
    while (std::getline(mf, line)) {
      if (line.empty() || line[0] == '#') continue;
      utt = dir + "/data/" + line.substr(0, line.find(','));
      break;
    }
  }
  REQUIRE(!utt.empty());
  RunResult attn = run_cli("attn-dump --checkpoint " + dir + "/m.ckpt --utterance " +
                           utt + " --layer 1 --out-csv " + dir + "/attn.csv");
  CHECK(attn.exit_code == 0);
  {
    std::ifstream is(dir + "/attn.csv");
    std::string header;
    std::getline(is, header);
    CHECK(header == "head,row,col,value");
    std::map<std::pair<int, int>, double> sums;
    std::string line;
    while (std::getline(is, line)) {
      int h, i, j;
      double v;
      std::sscanf(line.c_str(), "%d,%d,%d,%lf", &h, &i, &j, &v);
      sums[{h, i}] += v;
    }
    for (const auto& [key, sum] : sums) CHECK(sum == doctest::Approx(1.0).epsilon(1e-4));
  }

  std::filesystem::remove_all(dir);
}
