// Copyright 2026 The ncwfa Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: gen-data, train, eval, experiment.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "ncwfa/errors.hpp"
#include "ncwfa/experiment.hpp"

namespace fs = std::filesystem;
using namespace ncwfa;

namespace {

ExperimentConfig load_config(const std::string& path) {
  return config_from_json(load_json(path));
}

std::vector<Dataset> load_training_dir(const fs::path& dir, const ExperimentConfig& cfg) {
  std::vector<Dataset> out;
  for (std::size_t len : cfg.train_lengths()) {
    const fs::path file = dir / fmt::format("l{}.jsonl", len);
    DatasetFile d = load_dataset(file);
    if (d.length != len) {
      throw IoError(fmt::format("{} holds length-{} sequences, expected {}", file.string(), d.length, len));
    }
    out.push_back(std::move(d.sequences));
  }
  return out;
}

std::map<std::size_t, Dataset> load_test_dir(const fs::path& dir) {
  std::map<std::size_t, Dataset> out;
  if (!fs::is_directory(dir)) throw IoError(fmt::format("{} is not a directory", dir.string()));
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".jsonl") continue;
    DatasetFile d = load_dataset(entry.path());
    auto& slot = out[d.length];
    slot.insert(slot.end(), d.sequences.begin(), d.sequences.end());
  }
  if (out.empty()) throw IoError(fmt::format("no .jsonl test files in {}", dir.string()));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RNADE-NCWFA density estimation: data generation, training and evaluation"};
  app.require_subcommand(1);

  std::string config, out, data, method, test, truth;
  std::vector<std::string> models;
  std::uint64_t seed = 0;
  bool seed_given = false;

  auto* gen = app.add_subcommand("gen-data", "Sample the synthetic corpus");
  gen->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Fit one model on a training directory");
  train->add_option("--method", method, "spec, sgd or em")
      ->required()
      ->check(CLI::IsMember({"spec", "sgd", "em"}));
  train->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  train->add_option("--data", data, "Directory with l<L>.jsonl, l<2L>.jsonl, l<2L+1>.jsonl")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "Model file to write")->required();
  train->add_option("--seed", seed, "Training seed (default: first configured seed)")
      ->each([&](const std::string&) { seed_given = true; });

  auto* eval = app.add_subcommand("eval", "Log-likelihood ratios against the ground truth");
  eval->add_option("--models", models, "Model files")->required()->check(CLI::ExistingFile);
  eval->add_option("--test", test, "Directory of test .jsonl files")->required();
  eval->add_option("--truth", truth, "Ground-truth HMM file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", out, "CSV report to write")->required();

  auto* exp = app.add_subcommand("experiment", "Run the full pipeline");
  exp->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  exp->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      const auto cfg = load_config(config);
      const auto corpus = generate_corpus(cfg, out);
      std::printf("wrote %zu training and %zu test files to %s\n", corpus.train.size(),
                  corpus.test.size(), out.c_str());
    } else if (*train) {
      const auto cfg = load_config(config);
      const auto sets = load_training_dir(data, cfg);
      const auto tm = train_model(method, sets, cfg, seed_given ? seed : cfg.seeds.front());
      save_model(out, tm.model);
      if (!tm.metrics_csv.empty()) write_text(out + ".metrics.csv", tm.metrics_csv);
      for (const auto& w : tm.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("wrote %s\n", out.c_str());
    } else if (*eval) {
      const GaussianHmm hmm = std::get<GaussianHmm>(load_model(truth));
      std::vector<std::pair<std::string, AnyModel>> loaded;
      for (const auto& m : models) loaded.emplace_back(fs::path(m).stem().string(), load_model(m));
      const auto report = evaluate(loaded, load_test_dir(test), hmm);
      write_text(out, report.to_csv());
      std::printf("wrote %zu rows to %s\n", report.rows.size(), out.c_str());
    } else if (*exp) {
      const auto cfg = load_config(config);
      const auto res = run_experiment(cfg, out);
      std::printf("wrote %zu rows to %s; trend %s\n", res.report.rows.size(),
                  (fs::path(out) / "report.csv").c_str(),
                  res.manifest["trend"]["flag"].get<std::string>().c_str());
      if (!res.manifest["failures"].empty()) {
        std::fprintf(stderr, "error: %zu model fits failed; see manifest.json\n",
                     res.manifest["failures"].size());
        return 1;
      }
    }
  } catch (const std::bad_variant_access&) {
    std::fprintf(stderr, "error: %s does not hold a Gaussian HMM\n", truth.c_str());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
