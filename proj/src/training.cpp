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

#include "ncwfa/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

void TrainConfig::validate() const {
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ArgumentError("validation_fraction must lie in (0, 1)");
  }
  if (patience < 1) throw ArgumentError("patience must be at least 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be at least 1");
  if (states < 1 || mixtures < 1 || hankel_length < 1) {
    throw ArgumentError("states, mixtures and hankel_length must be at least 1");
  }
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be positive");
}

std::vector<std::size_t> HankelModel::lengths() const {
  return {hankel_length, 2 * hankel_length, 2 * hankel_length + 1};
}

std::string HankelModel::core_name(std::size_t length, std::size_t position) const {
  return tied ? fmt::format("G_{}", position) : fmt::format("G{}_{}", length, position);
}

std::vector<std::size_t> HankelModel::active_params(std::size_t length) const {
  std::vector<std::size_t> ids{params.index("h0"), params.index("W")};
  for (const char* name : kHeadParams) ids.push_back(params.index(name));
  for (std::size_t j = 1; j <= length; ++j) ids.push_back(params.index(core_name(length, j)));
  return ids;
}

namespace {

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double std, Rng& rng) {
  std::normal_distribution<double> n(0.0, std);
  Matrix m(rows, cols);
  // fill row-major so the draw order matches the logical layout
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
  return m;
}

std::size_t feature_dim(std::size_t obs_dim, const TrainConfig& cfg) {
  return cfg.feature_dim == 0 ? obs_dim : cfg.feature_dim;
}

void add_shared(ParamGraph& g, std::size_t d, const TrainConfig& cfg, Rng& rng) {
  const auto di = static_cast<Eigen::Index>(d);
  const std::size_t dp = feature_dim(d, cfg);
  const auto k = static_cast<Eigen::Index>(cfg.states);
  const auto m = static_cast<Eigen::Index>(cfg.mixtures);
  const double s = cfg.init_std;
  g.add("W", {d, dp}, normal_matrix(di, static_cast<Eigen::Index>(dp), s, rng));
  g.add("v_beta", {cfg.mixtures, cfg.states}, normal_matrix(m, k, s, rng));
  g.add("b_beta", {cfg.mixtures}, normal_matrix(m, 1, s, rng));
  g.add("v_mu", {cfg.states, cfg.mixtures, d}, normal_matrix(k, m * di, s, rng));
  g.add("b_mu", {cfg.mixtures, d}, normal_matrix(m * di, 1, s, rng));
  g.add("v_sigma", {cfg.states, cfg.mixtures, d}, normal_matrix(k, m * di, s, rng));
  g.add("b_sigma", {cfg.mixtures, d}, Matrix::Zero(m * di, 1));
}

struct HeadIds {
  std::size_t v_beta, b_beta, v_mu, b_mu, v_sigma, b_sigma;

  explicit HeadIds(const ParamGraph& g)
      : v_beta(g.index("v_beta")),
        b_beta(g.index("b_beta")),
        v_mu(g.index("v_mu")),
        b_mu(g.index("b_mu")),
        v_sigma(g.index("v_sigma")),
        b_sigma(g.index("b_sigma")) {}
};

Tape::Node head_term(Tape& t, const HeadIds& ids, Tape::Node h, const Vector& x, double floor) {
  const auto logw = t.log_softmax(t.affine(ids.v_beta, ids.b_beta, h, false));
  const auto means = t.affine(ids.v_mu, ids.b_mu, h, true);
  const auto vars = t.exp_floor(t.affine(ids.v_sigma, ids.b_sigma, h, true), floor);
  return t.mixture_logpdf(logw, means, vars, x);
}

void check_obs_dim(const Sequence& seq, std::size_t d) {
  for (const auto& x : seq) {
    if (static_cast<std::size_t>(x.size()) != d) {
      throw ShapeError(fmt::format("observation has dimension {}, model expects {}", x.size(), d));
    }
  }
}

}  // namespace

HankelModel init_hankel_model(std::size_t obs_dim, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  HankelModel model;
  model.hankel_length = cfg.hankel_length;
  model.tied = cfg.tie_cores;
  const auto k = static_cast<Eigen::Index>(cfg.states);
  const std::size_t dp = feature_dim(obs_dim, cfg);
  const auto d = static_cast<Eigen::Index>(dp);
  model.params.add("h0", {cfg.states}, Matrix::Constant(k, 1, 1.0 / static_cast<double>(k)));
  add_shared(model.params, obs_dim, cfg, rng);
  for (std::size_t l : model.lengths()) {
    for (std::size_t j = 1; j <= l; ++j) {
      const std::string name = model.core_name(l, j);
      if (model.params.contains(name)) continue;
      if (j == 1) {
        model.params.add(name, {dp, cfg.states},
                         normal_matrix(d * k, 1, cfg.init_std, rng));
      } else {
        model.params.add(name, {cfg.states, dp, cfg.states},
                         normal_matrix(k * d * k, 1, cfg.init_std, rng));
      }
    }
  }
  return model;
}

ParamGraph init_direct_params(std::size_t obs_dim, const TrainConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamGraph g;
  const auto k = static_cast<Eigen::Index>(cfg.states);
  const std::size_t dp = feature_dim(obs_dim, cfg);
  const auto d = static_cast<Eigen::Index>(dp);
  g.add("alpha", {cfg.states}, Matrix::Constant(k, 1, 1.0 / static_cast<double>(k)));
  g.add("A", {cfg.states, dp, cfg.states}, normal_matrix(k * d * k, 1, cfg.init_std, rng));
  add_shared(g, obs_dim, cfg, rng);
  return g;
}

ParamGraph params_from_model(const RnadeNcwfa& model) {
  model.validate();
  const auto* feature = std::get_if<TanhFeature>(&model.feature);
  const auto* head = std::get_if<DiagHead>(&model.head);
  if (!feature || !head || model.out_map) {
    throw ArgumentError("only tanh-feature, diagonal-head models without output map are trainable");
  }
  const std::size_t k = model.state_dim();
  const std::size_t m = head->num_mixtures();
  const std::size_t d = head->obs_dim();
  ParamGraph g;
  g.add("alpha", {k}, model.alpha);
  g.add("A", model.transition.shape(), model.transition.to_vector());
  g.add("W", {static_cast<std::size_t>(feature->w.rows()), static_cast<std::size_t>(feature->w.cols())},
        feature->w);
  g.add("v_beta", {m, k}, head->v_beta);
  g.add("b_beta", {m}, head->b_beta);
  g.add("v_mu", {k, m, d}, head->v_mu);
  g.add("b_mu", {m, d}, head->b_mu);
  g.add("v_sigma", {k, m, d}, head->v_sigma);
  g.add("b_sigma", {m, d}, head->b_sigma);
  return g;
}

DiagHead head_from_params(const ParamGraph& g, double var_floor) {
  DiagHead h;
  h.v_beta = g["v_beta"].value;
  h.b_beta = g["b_beta"].value;
  h.v_mu = g["v_mu"].value;
  h.b_mu = g["b_mu"].value;
  h.v_sigma = g["v_sigma"].value;
  h.b_sigma = g["b_sigma"].value;
  h.var_floor = var_floor;
  return h;
}

Matrix feature_weights(const ParamGraph& g) { return g["W"].value; }

RnadeNcwfa model_from_params(const ParamGraph& g, double var_floor) {
  const Param& a = g["A"];
  std::vector<double> data(a.value.data(), a.value.data() + a.value.size());
  RnadeNcwfa model{
      g["alpha"].value,
      DenseTensor(a.shape, std::move(data)),
      TanhFeature{feature_weights(g)},
      head_from_params(g, var_floor),
      std::nullopt,
  };
  model.validate();
  return model;
}

double loss_eq9(HankelModel& model, std::size_t length, std::span<const Sequence> batch,
                bool with_grad) {
  const auto lengths = model.lengths();
  if (std::find(lengths.begin(), lengths.end(), length) == lengths.end()) {
    throw ArgumentError(fmt::format("no Hankel train of length {}", length));
  }
  ParamGraph& g = model.params;
  const HeadIds head(g);
  const std::size_t h0 = g.index("h0");
  const std::size_t w = g.index("W");
  const std::size_t d = g[w].shape[0];
  std::vector<std::size_t> cores;
  for (std::size_t j = 1; j <= length; ++j) cores.push_back(g.index(model.core_name(length, j)));

  Tape tape(g);
  std::vector<std::pair<Tape::Node, double>> seeds;
  double total = 0.0;
  for (const auto& seq : batch) {
    if (seq.size() != length) {
      throw ArgumentError(
          fmt::format("sequence of length {} in a batch for the length-{} Hankel train",
                      seq.size(), length));
    }
    check_obs_dim(seq, d);
    tape.clear();
    seeds.clear();
    auto h = tape.param(h0);
    double seq_ll = 0.0;
    for (std::size_t j = 0; j < length; ++j) {
      const auto term = head_term(tape, head, h, seq[j], kVarianceFloor);
      seq_ll += tape.scalar(term);
      seeds.emplace_back(term, -1.0);
      if (j + 1 < length) {
        const auto phi = tape.tanh_feature(w, seq[j]);
        h = j == 0 ? tape.first_core(cores[0], phi) : tape.bilinear(cores[j], h, phi);
      }
    }
    total += -seq_ll;
    if (with_grad) tape.backward(seeds);
  }
  return total;
}

double loss_direct(ParamGraph& g, std::span<const Sequence> batch, bool with_grad,
                   double var_floor) {
  const HeadIds head(g);
  const std::size_t alpha = g.index("alpha");
  const std::size_t a = g.index("A");
  const std::size_t w = g.index("W");
  const std::size_t d = g[w].shape[0];
  Tape tape(g);
  std::vector<std::pair<Tape::Node, double>> seeds;
  double total = 0.0;
  for (const auto& seq : batch) {
    if (seq.empty()) throw ArgumentError("empty sequence in batch");
    check_obs_dim(seq, d);
    tape.clear();
    seeds.clear();
    auto h = tape.param(alpha);
    double seq_ll = 0.0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      const auto term = head_term(tape, head, h, seq[j], var_floor);
      seq_ll += tape.scalar(term);
      seeds.emplace_back(term, -1.0);
      if (j + 1 < seq.size()) h = tape.bilinear(a, h, tape.tanh_feature(w, seq[j]));
    }
    total += -seq_ll;
    if (with_grad) tape.backward(seeds);
  }
  return total;
}

AdamState::AdamState(const ParamGraph& params) {
  for (const auto& p : params) {
    m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    t.push_back(0);
  }
}

void adam_step(ParamGraph& params, AdamState& state, const TrainConfig& cfg,
               std::span<const std::size_t> which) {
  std::vector<std::size_t> all;
  if (which.empty()) {
    all.resize(params.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    which = all;
  }
  for (std::size_t i : which) {
    Param& p = params[i];
    const std::size_t t = ++state.t[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * p.grad;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * p.grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    p.value.array() -= cfg.learning_rate * (state.m[i].array() / c1) /
                       ((state.v[i].array() / c2).sqrt() + cfg.eps);
  }
}

double clip_gradients(ParamGraph& params, std::span<const std::size_t> which, double max_norm) {
  double sq = 0.0;
  for (std::size_t i : which) sq += params[i].grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (std::size_t i : which) params[i].grad *= s;
  }
  return norm;
}

namespace {

struct Split {
  Dataset train, val;
};

Split split_dataset(const Dataset& data, double fraction, Rng& rng) {
  if (data.size() < 2) throw ArgumentError("need at least two sequences to hold out validation data");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, data.size() - 1);
  Split s;
  for (std::size_t i = 0; i < idx.size(); ++i) (i < n_val ? s.val : s.train).push_back(data[idx[i]]);
  return s;
}

std::size_t count_obs(const Dataset& data) {
  std::size_t n = 0;
  for (const auto& s : data) n += s.size();
  return n;
}

// One pass of minibatch Adam over `train` with the given loss; returns the
// summed pre-update batch losses.
template <typename LossFn>
double run_epoch(const Dataset& train, ParamGraph& params, AdamState& adam, const TrainConfig& cfg,
                 std::span<const std::size_t> active, Rng& rng, LossFn&& loss) {
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  double total = 0.0;
  Dataset batch;
  for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
    const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
    batch.clear();
    for (std::size_t i = start; i < stop; ++i) batch.push_back(train[order[i]]);
    for (std::size_t i : active) params[i].grad.setZero();
    total += loss(batch);
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t i : active) params[i].grad *= scale;
    clip_gradients(params, active, cfg.clip_norm);
    adam_step(params, adam, cfg, active);
  }
  return total;
}

bool improved(double val, double best) { return std::isfinite(val) && val < best; }

}  // namespace

HankelFit fit_hankel(const Dataset& d_l, const Dataset& d_2l, const Dataset& d_2l1,
                     const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.hankel_length;
  const std::array<const Dataset*, 3> sets{&d_l, &d_2l, &d_2l1};
  const std::array<std::size_t, 3> lens{L, 2 * L, 2 * L + 1};
  for (std::size_t s = 0; s < 3; ++s) {
    if (sets[s]->empty()) throw ArgumentError(fmt::format("dataset for length {} is empty", lens[s]));
    for (const auto& seq : *sets[s]) {
      if (seq.size() != lens[s]) {
        throw ArgumentError(fmt::format("dataset for length {} holds a sequence of length {}",
                                        lens[s], seq.size()));
      }
    }
  }
  const std::size_t d = static_cast<std::size_t>(d_l.front().front().size());
  Rng rng(cfg.seed);
  HankelModel model = init_hankel_model(d, cfg, rng);
  std::array<Split, 3> splits;
  std::size_t train_obs = 0, val_obs = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    splits[s] = split_dataset(*sets[s], cfg.validation_fraction, rng);
    train_obs += count_obs(splits[s].train);
    val_obs += count_obs(splits[s].val);
  }
  auto evaluate = [&](HankelModel& m, bool train_part) {
    double total = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      total += loss_eq9(m, lens[s], train_part ? splits[s].train : splits[s].val, false);
    }
    return total / static_cast<double>(train_part ? train_obs : val_obs);
  };

  HankelFit fit{model, {}, 0, evaluate(model, false), false};
  fit.log.push_back({0, evaluate(model, true), fit.best_val});
  AdamState adam(model.params);
  std::size_t bad = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    double train_total = 0.0;
    for (std::size_t s = 0; s < 3; ++s) {
      const auto active = model.active_params(lens[s]);
      train_total += run_epoch(splits[s].train, model.params, adam, cfg, active, rng,
                               [&](const Dataset& b) { return loss_eq9(model, lens[s], b, true); });
    }
    const bool finite = model.params.all_finite();
    const double val = finite ? evaluate(model, false) : std::numeric_limits<double>::infinity();
    fit.log.push_back({epoch, train_total / static_cast<double>(train_obs), val});
    if (improved(val, fit.best_val)) {
      fit.best_val = val;
      fit.best_epoch = epoch;
      fit.model = model;
      bad = 0;
    } else if (!finite || ++bad >= cfg.patience) {
      fit.early_stopped = true;
      break;
    }
  }
  return fit;
}

SgdFit fit_sgd(const Dataset& data, const TrainConfig& cfg, const ParamGraph* init) {
  cfg.validate();
  if (data.empty()) throw ArgumentError("fit_sgd on an empty dataset");
  const std::size_t d = static_cast<std::size_t>(data.front().front().size());
  Rng rng(cfg.seed);
  ParamGraph params = init ? *init : init_direct_params(d, cfg, rng);
  Split split = split_dataset(data, cfg.validation_fraction, rng);
  const double train_obs = static_cast<double>(count_obs(split.train));
  const double val_obs = static_cast<double>(count_obs(split.val));
  std::vector<std::size_t> active(params.size());
  std::iota(active.begin(), active.end(), std::size_t{0});

  ParamGraph best = params;
  SgdFit fit{model_from_params(params), {}, 0, loss_direct(params, split.val, false) / val_obs,
             false};
  fit.log.push_back({0, loss_direct(params, split.train, false) / train_obs, fit.best_val});
  AdamState adam(params);
  std::size_t bad = 0;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const double train_total =
        run_epoch(split.train, params, adam, cfg, active, rng,
                  [&](const Dataset& b) { return loss_direct(params, b, true); });
    const bool finite = params.all_finite();
    const double val =
        finite ? loss_direct(params, split.val, false) / val_obs : std::numeric_limits<double>::infinity();
    fit.log.push_back({epoch, train_total / train_obs, val});
    if (improved(val, fit.best_val)) {
      fit.best_val = val;
      fit.best_epoch = epoch;
      best = params;
      bad = 0;
    } else if (!finite || ++bad >= cfg.patience) {
      fit.early_stopped = true;
      break;
    }
  }
  fit.model = model_from_params(best);
  return fit;
}

GradCheckReport grad_check(const std::function<double(ParamGraph&, bool)>& loss, ParamGraph& params,
                           double rel_tol, double step) {
  params.zero_grad();
  loss(params, true);
  GradCheckReport report;
  for (auto& p : params) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      double& v = p.value.data()[i];
      const double saved = v;
      v = saved + step;
      const double up = loss(params, false);
      v = saved - step;
      const double down = loss(params, false);
      v = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double analytic = p.grad.data()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
    report.max_rel_error[p.name] = worst;
    report.worst = std::max(report.worst, worst);
  }
  report.passed = report.worst < rel_tol;
  return report;
}

std::string metrics_csv(std::span<const EpochLog> log) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& e : log) {
    out << fmt::format("{},{:.17g},{:.17g}\n", e.epoch, e.train_loss, e.val_loss);
  }
  return out.str();
}

}  // namespace ncwfa
