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
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ncwfa/autodiff.hpp"
#include "ncwfa/ghmm.hpp"
#include "ncwfa/model.hpp"

namespace ncwfa {

struct TrainConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t max_epochs = 500;
  std::size_t patience = 10;
  double validation_fraction = 0.1;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t rank = 0;  // spectral rank R; 0 means "use states"
  std::size_t states = 10;
  std::size_t mixtures = 3;
  std::size_t hankel_length = 3;  // L
  std::size_t feature_dim = 0;    // d'; 0 means the observation dimension
  double clip_norm = 10.0;
  double init_std = 0.1;
  bool tie_cores = false;  // share Hankel cores by position across lengths

  void validate() const;
};

/// Parameters of the Hankel-learning stage: shared feature map, head and
/// initial state plus one tensor train per training length.
struct HankelModel {
  ParamGraph params;
  std::size_t hankel_length = 0;
  bool tied = false;

  std::vector<std::size_t> lengths() const;
  std::string core_name(std::size_t length, std::size_t position) const;
  /// Shared parameters plus the cores of one length.
  std::vector<std::size_t> active_params(std::size_t length) const;
};

/// Head parameter names shared by both parameter layouts.
inline constexpr const char* kHeadParams[] = {"v_beta", "b_beta", "v_mu",
                                              "b_mu",   "v_sigma", "b_sigma"};

HankelModel init_hankel_model(std::size_t obs_dim, const TrainConfig& cfg, Rng& rng);
ParamGraph init_direct_params(std::size_t obs_dim, const TrainConfig& cfg, Rng& rng);

/// Model parameters <-> trainable graph (tanh feature, diagonal head, no
/// output map).
ParamGraph params_from_model(const RnadeNcwfa& model);
RnadeNcwfa model_from_params(const ParamGraph& params, double var_floor = kVarianceFloor);
DiagHead head_from_params(const ParamGraph& params, double var_floor = kVarianceFloor);
Matrix feature_weights(const ParamGraph& params);

/// Negative log-likelihood of a batch of length-l sequences through the
/// length-l Hankel train. Term j uses the state from the first j-1 cores
/// (h_0 is the trained initial vector). Adds gradients when requested.
double loss_eq9(HankelModel& model, std::size_t length, std::span<const Sequence> batch,
                bool with_grad);

/// Negative log-likelihood through the recurrent transition tensor.
double loss_direct(ParamGraph& params, std::span<const Sequence> batch, bool with_grad,
                   double var_floor = kVarianceFloor);

struct AdamState {
  std::vector<Matrix> m, v;
  std::vector<std::size_t> t;

  explicit AdamState(const ParamGraph& params);
};

/// Bias-corrected Adam update of the listed parameters from their gradient
/// buffers (all parameters when `which` is empty).
void adam_step(ParamGraph& params, AdamState& state, const TrainConfig& cfg,
               std::span<const std::size_t> which = {});

/// Rescales gradients of `which` to global norm at most max_norm; returns
/// the norm before clipping.
double clip_gradients(ParamGraph& params, std::span<const std::size_t> which, double max_norm);

struct EpochLog {
  std::size_t epoch;
  double train_loss;  // mean NLL per observation
  double val_loss;
};

struct HankelFit {
  HankelModel model;  // best-validation snapshot
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool early_stopped = false;
};

/// Gradient-descent stage: cycles lengths L, 2L, 2L+1 every epoch with
/// early stopping on the summed validation NLL.
HankelFit fit_hankel(const Dataset& d_l, const Dataset& d_2l, const Dataset& d_2l1,
                     const TrainConfig& cfg);

struct SgdFit {
  RnadeNcwfa model;
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
  bool early_stopped = false;
};

SgdFit fit_sgd(const Dataset& data, const TrainConfig& cfg, const ParamGraph* init = nullptr);

struct GradCheckReport {
  std::map<std::string, double> max_rel_error;  // per parameter group
  double worst = 0.0;
  bool passed = false;
};

inline constexpr double kGradCheckStep = 1e-5;

/// Central finite differences against the analytic gradients written by
/// loss(params, true). Relative errors use max(|analytic|, |numeric|, 1e-4)
/// as denominator.
GradCheckReport grad_check(const std::function<double(ParamGraph&, bool)>& loss,
                           ParamGraph& params, double rel_tol, double step = kGradCheckStep);

/// Plain-text CSV metrics log: epoch,train_loss,val_loss.
std::string metrics_csv(std::span<const EpochLog> log);

}  // namespace ncwfa
