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

#include <string>
#include <vector>

#include "ncwfa/model.hpp"
#include "ncwfa/tensor.hpp"
#include "ncwfa/training.hpp"

namespace ncwfa {

/// Hankel trains of lengths L, 2L and 2L+1 over a shared mode dimension.
struct HankelSet {
  TTTrain h_l;
  TTTrain h_2l;
  TTTrain h_2l1;
  std::size_t length = 0;  // L

  void validate() const;
};

struct SpectralOptions {
  std::size_t rank = 0;
  double pinv_rtol = kDefaultPinvRtol;
  SplitConvention split = SplitConvention::kScaleLeft;
  std::size_t max_unfolding_entries = 1'000'000;
};

struct SpectralReport {
  std::size_t rank = 0;
  std::size_t numerical_rank = 0;
  Vector singular_values;
  double residual = 0.0;
  std::vector<std::string> warnings;
};

/// Operators recovered from a Hankel set: initial vector (R), transition
/// (R, d, R) and termination (R x p).
struct RecoveredOperators {
  Vector alpha;
  DenseTensor transition;
  Matrix omega;
  SpectralReport report;
};

/// Hankel train of a linear CWFA: G_1 = A x1 alpha, G_2..G_l = A, output
/// core Omega.
TTTrain hankel_from_linear_cwfa(const LinearCwfa& cwfa, std::size_t length);

/// Hankel train of the state map of an RNADE-NCWFA over feature-space
/// inputs: G_1 = A x1 alpha, G_2..G_l = A, identity output (trailing bond).
TTTrain hankel_from_model(const RnadeNcwfa& model, std::size_t length);

RecoveredOperators recover_operators(const HankelSet& h, const SpectralOptions& opts);

struct LinearRecovery {
  LinearCwfa cwfa;
  SpectralReport report;
};

LinearRecovery recover_linear_cwfa(const HankelSet& h, std::size_t rank,
                                   const SpectralOptions& opts = {});

/// Rebuilds an RNADE-NCWFA from state-map Hankels plus the trained feature
/// map and head. The recovered termination becomes the output map so the
/// head sees states in the coordinates it was trained on.
RnadeNcwfa recover_density_model(const HankelSet& h, const FeatureMap& feature, const Head& head,
                                 const SpectralOptions& opts, SpectralReport* report = nullptr);

/// Assigns each untrained trailing core: the core at the same position of
/// the longest train when one exists, otherwise the preceding core.
void complete_trailing_cores(HankelModel& model);

/// Tensor trains held by a trained Hankel model, one per length.
HankelSet hankel_set_from_model(const HankelModel& model);

struct SpectralFit {
  RnadeNcwfa model;
  HankelFit hankel;
  SpectralReport report;
};

/// Gradient-descent Hankel stage followed by spectral recovery of the
/// initial vector and transition tensor. Rank defaults to the number of
/// states, capped by the unfolding size.
SpectralFit spectral_learn(const Dataset& d_l, const Dataset& d_2l, const Dataset& d_2l1,
                           const TrainConfig& cfg, const SpectralOptions& opts = {});

}  // namespace ncwfa
