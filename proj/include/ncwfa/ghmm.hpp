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
#include <random>
#include <span>
#include <vector>

#include "ncwfa/prob.hpp"

namespace ncwfa {

using Rng = std::mt19937_64;
using Sequence = std::vector<Vector>;
using Dataset = std::vector<Sequence>;

/// Gaussian hidden Markov model: initial distribution, row-stochastic
/// transition matrix and one Gaussian emission per state.
struct GaussianHmm {
  Vector init;
  Matrix trans;
  std::vector<FullGaussian> emissions;

  std::size_t num_states() const { return static_cast<std::size_t>(init.size()); }
  std::size_t obs_dim() const { return emissions.empty() ? 0 : emissions.front().dim(); }

  /// Throws DomainError/ShapeError unless init and rows of trans are
  /// probability vectors (within 1e-12) and the emissions agree in dimension.
  void validate() const;
};

struct SampledSequence {
  Sequence observations;
  std::vector<std::size_t> states;
};

SampledSequence sample(const GaussianHmm& hmm, std::size_t length, Rng& rng);

/// Marginal log density over all hidden paths (scaled forward recursion).
double log_density_forward(const GaussianHmm& hmm, std::span<const Vector> seq);

/// sum_i log O(m^T T^(i-1), o_i): the state distribution is propagated
/// without conditioning on past observations. Agrees with the forward
/// density for a single state or a length-1 sequence, not in general.
double log_density_factored(const GaussianHmm& hmm, std::span<const Vector> seq);

struct EmConfig {
  std::size_t max_iters = 200;
  double tol = 1e-7;  // relative log-likelihood improvement
  std::uint64_t seed = 0;
  std::size_t restarts = 3;
  double cov_reg = 1e-6;  // added to the covariance diagonal every M-step
};

struct EmResult {
  GaussianHmm model;
  /// Training log-likelihood before each M-step of the returned restart,
  /// followed by the final value.
  std::vector<double> trace;
  std::vector<std::vector<double>> restart_traces;
  std::size_t reseeded_states = 0;
};

EmResult em_fit(const Dataset& data, std::size_t num_states, const EmConfig& cfg);

/// Emission mean equals the time step (starting at 1), unit variance.
double shifting_hmm_log_density(std::span<const double> seq);

/// Random generator HMM used by the experiment pipeline: flat-Dirichlet
/// initial and transition rows, means 2 * N(0, 1), diagonal variances
/// uniform in [0.5, 1.5].
GaussianHmm random_hmm(std::size_t num_states, std::size_t obs_dim, Rng& rng);

Vector sample_dirichlet_flat(std::size_t n, Rng& rng);

}  // namespace ncwfa
