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

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ncwfa/ghmm.hpp"
#include "ncwfa/prob.hpp"
#include "ncwfa/tensor.hpp"

namespace ncwfa {

/// Linear continuous WFA <alpha, A, Omega> computing
/// f(x_1..x_n) = (A x1 alpha x2 x_1)^T (A x2 x_2) ... (A x2 x_n) Omega.
struct LinearCwfa {
  Vector alpha;            // k
  DenseTensor transition;  // (k, d, k)
  Matrix omega;            // k x p

  std::size_t num_states() const { return static_cast<std::size_t>(alpha.size()); }
  std::size_t input_dim() const { return transition.dim(1); }
  std::size_t output_dim() const { return static_cast<std::size_t>(omega.cols()); }
  void validate() const;
};

Vector linear_cwfa_apply(const LinearCwfa& cwfa, std::span<const Vector> seq);

/// phi(x) = tanh(x^T W), W is d x d'.
struct TanhFeature {
  Matrix w;
};

/// phi(x) = c for every input of dimension input_dim.
struct ConstantFeature {
  Vector value;
  std::size_t input_dim = 1;
};

using FeatureMap = std::variant<TanhFeature, ConstantFeature>;

/// Trainable mixture-density head with diagonal covariances. With head
/// input h (k-vector):
///   beta  = softmax(V_beta h + b_beta)
///   M     = V_mu x1 h + B_mu
///   Sigma = max(exp(V_sigma x1 h + B_sigma), floor)
/// The (k, m, d) tensors are stored as k x (m d) matrices, row-major in (m, d).
struct DiagHead {
  Matrix v_beta;   // m x k
  Vector b_beta;   // m
  Matrix v_mu;     // k x (m d)
  Vector b_mu;     // m d
  Matrix v_sigma;  // k x (m d)
  Vector b_sigma;  // m d
  double var_floor = kVarianceFloor;

  std::size_t num_mixtures() const { return static_cast<std::size_t>(b_beta.size()); }
  std::size_t head_dim() const { return static_cast<std::size_t>(v_beta.cols()); }
  std::size_t obs_dim() const {
    return num_mixtures() == 0 ? 0 : static_cast<std::size_t>(b_mu.size()) / num_mixtures();
  }
};

/// Frozen head with one full-covariance component per state whose mixing
/// weights are the head input itself (must be a probability vector).
struct StateWeightedHead {
  std::vector<FullGaussian> components;
};

using Head = std::variant<DiagHead, StateWeightedHead>;

/// RNADE-NCWFA: h_0 = alpha, h_t = A x1 h_{t-1} x2 phi(x_t), and
/// p(x_t | x_<t) = xi(x_t, out(h_{t-1})) where out is the optional output
/// map (identity when absent).
struct RnadeNcwfa {
  Vector alpha;            // R
  DenseTensor transition;  // (R, d', R)
  FeatureMap feature;
  Head head;
  std::optional<Matrix> out_map;  // R x k

  std::size_t state_dim() const { return static_cast<std::size_t>(alpha.size()); }
  std::size_t feature_dim() const { return transition.dim(1); }
  std::size_t input_dim() const;
  std::size_t head_dim() const;
  void validate() const;
};

Vector feature_map(const RnadeNcwfa& model, const Vector& x);
Vector step(const RnadeNcwfa& model, const Vector& h_prev, const Vector& x);
/// Bilinear contraction A x1 h x2 phi on a (R, d', R) tensor.
Vector bilinear_step(const DenseTensor& transition, const Vector& h, const Vector& phi);
Vector head_input(const RnadeNcwfa& model, const Vector& h);
double conditional_log_density(const RnadeNcwfa& model, const Vector& x, const Vector& h_prev);
/// Mixture parameters the head emits for a given (transformed) head input.
MixtureParams head_mixture(const Head& head, const Vector& head_in);
double sequence_log_density(const RnadeNcwfa& model, std::span<const Vector> seq);
/// h_0 .. h_n for a length-n sequence.
std::vector<Vector> hidden_states(const RnadeNcwfa& model, std::span<const Vector> seq);

/// Gaussian-HMM embedding: alpha = init, every transition slice equals the
/// HMM transition matrix, constant feature 1/k, state-weighted emissions.
/// Its sequence density is log_density_factored of the HMM.
RnadeNcwfa from_gaussian_hmm(const GaussianHmm& hmm);

/// Two-state model whose conditional at step i is N(i, 1).
RnadeNcwfa shifting_construction();

}  // namespace ncwfa
