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

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "ncwfa/ghmm.hpp"
#include "ncwfa/io.hpp"
#include "ncwfa/spectral.hpp"
#include "ncwfa/training.hpp"

namespace ncwfa {

inline constexpr const char* kVersion = "0.1.0";
inline const std::vector<std::string> kKnownModels = {"spec", "sgd", "em"};

struct ExperimentConfig {
  std::size_t hmm_states = 10;
  std::size_t obs_dim = 2;
  std::uint64_t hmm_seed = 1;
  std::size_t hankel_length = 3;
  std::vector<std::size_t> train_sizes{100, 1000};
  std::vector<double> noise_stds{0.0, 1.0};
  std::vector<std::size_t> test_lengths{8, 16, 32, 64, 100};
  std::size_t test_size = 200;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<std::string> models{"spec", "sgd", "em"};
  TrainConfig train;
  SpectralOptions spectral;
  EmConfig em;

  /// Training lengths L, 2L, 2L+1.
  std::vector<std::size_t> train_lengths() const;
  void validate() const;
};

/// Reads a config document; absent keys keep their defaults and unknown
/// keys are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& cfg);

/// Clean and noisy training sets for one seed plus the shared test sets.
struct Corpus {
  GaussianHmm truth;
  // key: length
  std::map<std::size_t, Dataset> test;
  // key: (seed, size, noise index, length)
  std::map<std::tuple<std::uint64_t, std::size_t, std::size_t, std::size_t>, Dataset> train;
};

Corpus build_corpus(const ExperimentConfig& cfg);

/// Builds the corpus and writes it below `out`:
///   truth.json
///   test/l<len>.jsonl
///   train/seed_<s>/n<size>/noise_<std>/l<len>.jsonl
Corpus generate_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out);

std::string noise_tag(double std);
std::filesystem::path train_dir(const std::filesystem::path& root, std::uint64_t seed,
                                std::size_t size, double noise);

struct EvalRow {
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> train_size;
  std::optional<double> noise_std;
  std::size_t test_length = 0;
  double mean_loglik = 0.0;
  double std_over_seeds = 0.0;  // sample std of mean_loglik across seeds
  double mean_log_ratio = 0.0;
  bool finite = true;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::string to_csv() const;
};

/// Per test length: mean log density of every model and its mean log ratio
/// against the forward density of the ground truth. The ground truth gets
/// its own rows with ratio exactly 0.
EvalReport evaluate(const std::vector<std::pair<std::string, AnyModel>>& models,
                    const std::map<std::size_t, Dataset>& test, const GaussianHmm& truth);

/// Fills std_over_seeds for rows sharing (model, size, noise, length).
void fill_seed_statistics(EvalReport& report);

struct TrainedModel {
  AnyModel model;
  std::string metrics_csv;  // empty for EM
  std::vector<std::string> warnings;
};

TrainedModel train_model(const std::string& method, const std::vector<Dataset>& by_length,
                         const ExperimentConfig& cfg, std::uint64_t seed);

struct ExperimentResult {
  EvalReport report;
  nlohmann::json manifest;
};

/// generate -> fit every model per (seed, size, noise) -> evaluate ->
/// report.csv, manifest.json and serialized models below `out`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out);

/// Worker count: NCWFA_THREADS when set, otherwise the hardware concurrency.
std::size_t worker_threads();

}  // namespace ncwfa
