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

#include "ncwfa/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <set>
#include <thread>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

using nlohmann::json;

namespace {

// Stream tags keep the random draws of each corpus part independent.
enum : std::uint64_t { kTruthStream = 1, kTestStream = 2, kTrainStream = 3, kNoiseStream = 4 };

Rng stream(std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ArgumentError(fmt::format("{} must be a JSON object", where));
  for (const auto& [key, _] : j.items()) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
      throw ArgumentError(fmt::format("unknown key \"{}\" in {}", key, where));
    }
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string format_number(double v) { return fmt::format("{}", v); }

}  // namespace

std::vector<std::size_t> ExperimentConfig::train_lengths() const {
  return {hankel_length, 2 * hankel_length, 2 * hankel_length + 1};
}

void ExperimentConfig::validate() const {
  if (models.empty()) throw ArgumentError("no models configured");
  std::set<std::string> seen;
  for (const auto& m : models) {
    if (std::find(kKnownModels.begin(), kKnownModels.end(), m) == kKnownModels.end()) {
      throw ArgumentError(fmt::format("unknown model \"{}\" (expected spec, sgd or em)", m));
    }
    if (!seen.insert(m).second) throw ArgumentError(fmt::format("model \"{}\" listed twice", m));
  }
  if (hmm_states < 1 || obs_dim < 1) throw ArgumentError("hmm states and obs_dim must be at least 1");
  if (hankel_length < 1) throw ArgumentError("hankel_length must be at least 1");
  if (train_sizes.empty() || noise_stds.empty() || test_lengths.empty() || seeds.empty()) {
    throw ArgumentError("train_sizes, noise_stds, test_lengths and seeds must be nonempty");
  }
  for (auto n : train_sizes)
    if (n < 1) throw ArgumentError("training sizes must be at least 1");
  for (double s : noise_stds)
    if (!(s >= 0.0) || !std::isfinite(s)) throw ArgumentError("noise stds must be finite and >= 0");
  for (auto l : test_lengths)
    if (l < 1) throw ArgumentError("test lengths must be at least 1");
  if (test_size < 1) throw ArgumentError("test_size must be at least 1");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ArgumentError("seeds must be distinct");
  }
  train.validate();
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  reject_unknown(j,
                 {"learning_rate", "beta1", "beta2", "eps", "max_epochs", "patience",
                  "validation_fraction", "batch_size", "rank", "states", "mixtures",
                  "feature_dim", "clip_norm", "init_std", "tie_cores", "seed", "hankel_length"},
                 "train");
  read(j, "learning_rate", c.learning_rate);
  read(j, "beta1", c.beta1);
  read(j, "beta2", c.beta2);
  read(j, "eps", c.eps);
  read(j, "max_epochs", c.max_epochs);
  read(j, "patience", c.patience);
  read(j, "validation_fraction", c.validation_fraction);
  read(j, "batch_size", c.batch_size);
  read(j, "rank", c.rank);
  read(j, "states", c.states);
  read(j, "mixtures", c.mixtures);
  read(j, "feature_dim", c.feature_dim);
  read(j, "clip_norm", c.clip_norm);
  read(j, "init_std", c.init_std);
  read(j, "tie_cores", c.tie_cores);
  read(j, "seed", c.seed);
  read(j, "hankel_length", c.hankel_length);
  return c;
}

json train_config_to_json(const TrainConfig& c) {
  return json{{"learning_rate", c.learning_rate},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"validation_fraction", c.validation_fraction},
              {"batch_size", c.batch_size},
              {"rank", c.rank},
              {"states", c.states},
              {"mixtures", c.mixtures},
              {"feature_dim", c.feature_dim},
              {"clip_norm", c.clip_norm},
              {"init_std", c.init_std},
              {"tie_cores", c.tie_cores},
              {"seed", c.seed},
              {"hankel_length", c.hankel_length}};
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"hmm", "hankel_length", "train_sizes", "noise_stds", "test_lengths",
                  "test_size", "seeds", "models", "train", "spectral", "em"},
                 "experiment config");
  ExperimentConfig c;
  try {
    if (j.contains("hmm")) {
      const json& h = j.at("hmm");
      reject_unknown(h, {"states", "obs_dim", "seed"}, "hmm");
      read(h, "states", c.hmm_states);
      read(h, "obs_dim", c.obs_dim);
      read(h, "seed", c.hmm_seed);
    }
    read(j, "hankel_length", c.hankel_length);
    read(j, "train_sizes", c.train_sizes);
    read(j, "noise_stds", c.noise_stds);
    read(j, "test_lengths", c.test_lengths);
    read(j, "test_size", c.test_size);
    read(j, "seeds", c.seeds);
    read(j, "models", c.models);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    c.train.hankel_length = c.hankel_length;
    if (j.contains("spectral")) {
      const json& s = j.at("spectral");
      reject_unknown(s, {"rank", "pinv_rtol", "split", "max_unfolding_entries"}, "spectral");
      read(s, "rank", c.spectral.rank);
      read(s, "pinv_rtol", c.spectral.pinv_rtol);
      read(s, "max_unfolding_entries", c.spectral.max_unfolding_entries);
      if (s.contains("split")) {
        const auto split = s.at("split").get<std::string>();
        if (split == "scale_left") {
          c.spectral.split = SplitConvention::kScaleLeft;
        } else if (split == "scale_right") {
          c.spectral.split = SplitConvention::kScaleRight;
        } else {
          throw ArgumentError(fmt::format("unknown split \"{}\"", split));
        }
      }
    }
    if (j.contains("em")) {
      const json& e = j.at("em");
      reject_unknown(e, {"max_iters", "tol", "restarts", "cov_reg"}, "em");
      read(e, "max_iters", c.em.max_iters);
      read(e, "tol", c.em.tol);
      read(e, "restarts", c.em.restarts);
      read(e, "cov_reg", c.em.cov_reg);
    }
  } catch (const json::exception& e) {
    throw ArgumentError(fmt::format("bad experiment config: {}", e.what()));
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  return json{
      {"hmm", {{"states", c.hmm_states}, {"obs_dim", c.obs_dim}, {"seed", c.hmm_seed}}},
      {"hankel_length", c.hankel_length},
      {"train_sizes", c.train_sizes},
      {"noise_stds", c.noise_stds},
      {"test_lengths", c.test_lengths},
      {"test_size", c.test_size},
      {"seeds", c.seeds},
      {"models", c.models},
      {"train", train_config_to_json(c.train)},
      {"spectral",
       {{"rank", c.spectral.rank},
        {"pinv_rtol", c.spectral.pinv_rtol},
        {"split", c.spectral.split == SplitConvention::kScaleLeft ? "scale_left" : "scale_right"},
        {"max_unfolding_entries", c.spectral.max_unfolding_entries}}},
      {"em",
       {{"max_iters", c.em.max_iters},
        {"tol", c.em.tol},
        {"restarts", c.em.restarts},
        {"cov_reg", c.em.cov_reg}}},
  };
}

Corpus build_corpus(const ExperimentConfig& cfg) {
  cfg.validate();
  Corpus c;
  Rng truth_rng = stream({cfg.hmm_seed, kTruthStream});
  c.truth = random_hmm(cfg.hmm_states, cfg.obs_dim, truth_rng);
  for (std::size_t len : cfg.test_lengths) {
    Rng rng = stream({cfg.hmm_seed, kTestStream, len});
    Dataset& d = c.test[len];
    for (std::size_t i = 0; i < cfg.test_size; ++i) d.push_back(sample(c.truth, len, rng).observations);
  }
  const std::size_t max_size = *std::max_element(cfg.train_sizes.begin(), cfg.train_sizes.end());
  for (std::uint64_t seed : cfg.seeds) {
    for (std::size_t len : cfg.train_lengths()) {
      // Smaller training sets are prefixes of the largest one.
      Rng rng = stream({cfg.hmm_seed, kTrainStream, seed, len});
      Dataset clean;
      for (std::size_t i = 0; i < max_size; ++i) clean.push_back(sample(c.truth, len, rng).observations);
      for (std::size_t size : cfg.train_sizes) {
        for (std::size_t ni = 0; ni < cfg.noise_stds.size(); ++ni) {
          const double std = cfg.noise_stds[ni];
          Dataset d(clean.begin(), clean.begin() + static_cast<std::ptrdiff_t>(size));
          if (std > 0.0) {
            Rng noise = stream({cfg.hmm_seed, kNoiseStream, seed, size, std::bit_cast<std::uint64_t>(std), len});
            std::normal_distribution<double> n(0.0, std);
            for (auto& seq : d)
              for (auto& x : seq)
                for (auto& v : x) v += n(noise);
          }
          c.train[{seed, size, ni, len}] = std::move(d);
        }
      }
    }
  }
  return c;
}

std::string noise_tag(double std) { return fmt::format("noise_{}", std); }

std::filesystem::path train_dir(const std::filesystem::path& root, std::uint64_t seed,
                                std::size_t size, double noise) {
  return root / "train" / fmt::format("seed_{}", seed) / fmt::format("n{}", size) / noise_tag(noise);
}

Corpus generate_corpus(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  Corpus c = build_corpus(cfg);
  save_json(out / "truth.json", hmm_to_json(c.truth));
  save_json(out / "config.json", config_to_json(cfg));
  for (const auto& [len, d] : c.test) {
    save_dataset(out / "test" / fmt::format("l{}.jsonl", len), {cfg.obs_dim, len, cfg.hmm_seed, d});
  }
  for (const auto& [key, d] : c.train) {
    const auto& [seed, size, ni, len] = key;
    save_dataset(train_dir(out, seed, size, cfg.noise_stds[ni]) / fmt::format("l{}.jsonl", len),
                 {cfg.obs_dim, len, seed, d});
  }
  return c;
}

namespace {

std::vector<double> truth_densities(const GaussianHmm& truth, const Dataset& test) {
  std::vector<double> out;
  out.reserve(test.size());
  for (const auto& seq : test) out.push_back(log_density_forward(truth, seq));
  return out;
}

EvalRow model_row(const std::string& name, const AnyModel& model, std::size_t len,
                  const Dataset& test, const std::vector<double>& truth_ll) {
  EvalRow row;
  row.model = name;
  row.test_length = len;
  double ll = 0.0, ratio = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const double v = log_density(model, test[i]);
    if (!std::isfinite(v)) row.finite = false;
    ll += v;
    ratio += v - truth_ll[i];
  }
  const auto n = static_cast<double>(test.size());
  row.mean_loglik = ll / n;
  row.mean_log_ratio = ratio / n;
  return row;
}

EvalRow truth_row(std::size_t len, const std::vector<double>& truth_ll) {
  EvalRow row;
  row.model = "truth";
  row.test_length = len;
  double ll = 0.0;
  for (double v : truth_ll) {
    if (!std::isfinite(v)) row.finite = false;
    ll += v;
  }
  row.mean_loglik = ll / static_cast<double>(truth_ll.size());
  row.mean_log_ratio = 0.0;
  return row;
}

}  // namespace

EvalReport evaluate(const std::vector<std::pair<std::string, AnyModel>>& models,
                    const std::map<std::size_t, Dataset>& test, const GaussianHmm& truth) {
  EvalReport report;
  for (const auto& [len, d] : test) {
    if (d.empty()) throw ArgumentError(fmt::format("empty test set for length {}", len));
    const auto tll = truth_densities(truth, d);
    report.rows.push_back(truth_row(len, tll));
    for (const auto& [name, model] : models) report.rows.push_back(model_row(name, model, len, d, tll));
  }
  return report;
}

void fill_seed_statistics(EvalReport& report) {
  using Key = std::tuple<std::string, std::optional<std::size_t>, std::optional<double>, std::size_t>;
  std::map<Key, std::vector<double>> groups;
  auto key = [](const EvalRow& r) { return Key{r.model, r.train_size, r.noise_std, r.test_length}; };
  for (const auto& r : report.rows)
    if (r.seed) groups[key(r)].push_back(r.mean_loglik);
  for (auto& r : report.rows) {
    if (!r.seed) {
      r.std_over_seeds = 0.0;
      continue;
    }
    const auto& v = groups[key(r)];
    if (v.size() < 2) {
      r.std_over_seeds = 0.0;
      continue;
    }
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    r.std_over_seeds = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
}

std::string EvalReport::to_csv() const {
  std::string out =
      "model,seed,train_size,noise_std,test_length,mean_loglik,std_over_seeds,mean_log_ratio,"
      "loglik_summary,finite\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{:.2f} ({:.2f}),{}\n", r.model,
                       r.seed ? fmt::format("{}", *r.seed) : "",
                       r.train_size ? fmt::format("{}", *r.train_size) : "",
                       r.noise_std ? format_number(*r.noise_std) : "", r.test_length,
                       format_number(r.mean_loglik), format_number(r.std_over_seeds),
                       format_number(r.mean_log_ratio), r.mean_loglik, r.std_over_seeds,
                       r.finite ? "true" : "false");
  }
  return out;
}

TrainedModel train_model(const std::string& method, const std::vector<Dataset>& by_length,
                         const ExperimentConfig& cfg, std::uint64_t seed) {
  if (by_length.size() != 3) throw ArgumentError("expected datasets for lengths L, 2L and 2L+1");
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  tc.hankel_length = cfg.hankel_length;
  Dataset all;
  for (const auto& d : by_length) all.insert(all.end(), d.begin(), d.end());
  if (method == "spec") {
    auto fit = spectral_learn(by_length[0], by_length[1], by_length[2], tc, cfg.spectral);
    return {std::move(fit.model), metrics_csv(fit.hankel.log), fit.report.warnings};
  }
  if (method == "sgd") {
    auto fit = fit_sgd(all, tc);
    return {std::move(fit.model), metrics_csv(fit.log), {}};
  }
  if (method == "em") {
    EmConfig ec = cfg.em;
    ec.seed = seed;
    auto fit = em_fit(all, tc.states, ec);
    std::vector<std::string> warnings;
    if (fit.reseeded_states > 0) {
      warnings.push_back(fmt::format("{} degenerate states were re-seeded", fit.reseeded_states));
    }
    return {std::move(fit.model), {}, std::move(warnings)};
  }
  throw ArgumentError(fmt::format("unknown training method \"{}\"", method));
}

std::size_t worker_threads() {
  if (const char* env = std::getenv("NCWFA_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    throw ArgumentError(fmt::format("NCWFA_THREADS must be a positive integer, got \"{}\"", env));
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

namespace {

struct Cell {
  std::uint64_t seed;
  std::size_t size;
  std::size_t noise_index;
};

struct CellOutcome {
  std::vector<EvalRow> rows;
  json log = json::object();
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

CellOutcome run_cell(const Cell& cell, const ExperimentConfig& cfg, const Corpus& corpus,
                     const std::map<std::size_t, std::vector<double>>& truth_ll,
                     const std::filesystem::path& out) {
  CellOutcome res;
  const double noise = cfg.noise_stds[cell.noise_index];
  std::vector<Dataset> data;
  for (std::size_t len : cfg.train_lengths())
    data.push_back(corpus.train.at({cell.seed, cell.size, cell.noise_index, len}));
  const auto model_dir = out / "models" / fmt::format("seed_{}", cell.seed) /
                         fmt::format("n{}", cell.size) / noise_tag(noise);
  res.log["seed"] = cell.seed;
  res.log["train_size"] = cell.size;
  res.log["noise_std"] = noise;
  res.log["models"] = json::object();
  for (const auto& name : cfg.models) {
    json entry;
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<EvalRow> rows;
    try {
      TrainedModel tm = train_model(name, data, cfg, cell.seed);
      entry["train_seconds"] = seconds_since(t0);
      entry["warnings"] = tm.warnings;
      save_model(model_dir / (name + ".json"), tm.model);
      if (!tm.metrics_csv.empty()) write_text(model_dir / (name + "_metrics.csv"), tm.metrics_csv);
      for (const auto& [len, d] : corpus.test) rows.push_back(model_row(name, tm.model, len, d, truth_ll.at(len)));
      entry["status"] = "ok";
    } catch (const std::exception& e) {
      entry["status"] = "failed";
      entry["error"] = e.what();
      rows.clear();
      for (const auto& [len, d] : corpus.test) {
        EvalRow r;
        r.model = name;
        r.test_length = len;
        r.mean_loglik = std::numeric_limits<double>::quiet_NaN();
        r.mean_log_ratio = std::numeric_limits<double>::quiet_NaN();
        r.finite = false;
        rows.push_back(r);
      }
    }
    for (auto& r : rows) {
      r.seed = cell.seed;
      r.train_size = cell.size;
      r.noise_std = noise;
      if (!r.finite) entry["nonfinite_lengths"].push_back(r.test_length);
    }
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    entry["seconds"] = seconds_since(t0);
    res.log["models"][name] = entry;
  }
  return res;
}

/// Mean over seeds and test lengths of one model's log likelihood at a
/// (size, noise) pair; nullopt when no such rows exist.
std::optional<double> cell_mean(const EvalReport& r, const std::string& model, std::size_t size,
                                double noise) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& row : r.rows) {
    if (row.model == model && row.train_size == size && row.noise_std == noise) {
      s += row.mean_loglik;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t threads = worker_threads();
  const Corpus corpus = generate_corpus(cfg, out / "data");
  const double gen_seconds = seconds_since(t0);

  std::map<std::size_t, std::vector<double>> truth_ll;
  EvalReport report;
  for (const auto& [len, d] : corpus.test) {
    truth_ll[len] = truth_densities(corpus.truth, d);
    report.rows.push_back(truth_row(len, truth_ll[len]));
  }

  std::vector<Cell> cells;
  std::vector<std::uint64_t> seeds = cfg.seeds;
  std::sort(seeds.begin(), seeds.end());
  std::vector<std::size_t> sizes = cfg.train_sizes;
  std::sort(sizes.begin(), sizes.end());
  std::vector<std::size_t> noise_order(cfg.noise_stds.size());
  std::iota(noise_order.begin(), noise_order.end(), std::size_t{0});
  std::stable_sort(noise_order.begin(), noise_order.end(),
                   [&](std::size_t a, std::size_t b) { return cfg.noise_stds[a] < cfg.noise_stds[b]; });
  for (auto s : seeds)
    for (auto n : sizes)
      for (auto ni : noise_order) cells.push_back({s, n, ni});

  std::vector<CellOutcome> outcomes(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++)
      outcomes[i] = run_cell(cells[i], cfg, corpus, truth_ll, out);
  };
  const std::size_t nworkers = std::min(threads, cells.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < nworkers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  json cell_logs = json::array();
  json failures = json::array();
  for (auto& o : outcomes) {
    report.rows.insert(report.rows.end(), o.rows.begin(), o.rows.end());
    for (const auto& [name, entry] : o.log["models"].items()) {
      if (entry["status"] == "failed") {
        failures.push_back({{"seed", o.log["seed"]},
                            {"train_size", o.log["train_size"]},
                            {"noise_std", o.log["noise_std"]},
                            {"model", name},
                            {"error", entry["error"]}});
      }
    }
    cell_logs.push_back(std::move(o.log));
  }
  fill_seed_statistics(report);
  const std::string csv = report.to_csv();
  write_text(out / "report.csv", csv);

  // Trend flag: spec against sgd at the smallest size and the largest noise.
  json trend = {{"size", sizes.front()},
                {"noise_std", *std::max_element(cfg.noise_stds.begin(), cfg.noise_stds.end())}};
  const auto spec = cell_mean(report, "spec", trend["size"], trend["noise_std"]);
  const auto sgd = cell_mean(report, "sgd", trend["size"], trend["noise_std"]);
  if (spec && sgd) {
    trend["spec_mean_loglik"] = *spec;
    trend["sgd_mean_loglik"] = *sgd;
    trend["flag"] = *spec >= *sgd ? "PASS" : "TREND-MISS";
  } else {
    trend["flag"] = "N/A";
  }

  json manifest;
  manifest["version"] = kVersion;
  manifest["config"] = config_to_json(cfg);
  manifest["seeds"] = cfg.seeds;
  manifest["threads"] = threads;
  manifest["row_count"] = report.rows.size();
  manifest["cells"] = std::move(cell_logs);
  manifest["failures"] = std::move(failures);
  manifest["trend"] = std::move(trend);
  manifest["wall_clock"] = {{"generate_seconds", gen_seconds}, {"total_seconds", seconds_since(t0)}};
  manifest["outputs"] = {{"report", "report.csv"}, {"data", "data"}, {"models", "models"}};
  save_json(out / "manifest.json", manifest);
  return {std::move(report), std::move(manifest)};
}

}  // namespace ncwfa
