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

#include <variant>
#include <vector>

#include <Eigen/Cholesky>

#include "ncwfa/tensor.hpp"

namespace ncwfa {

inline constexpr double kVarianceFloor = 1e-6;
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

/// log(sum(exp(v))) with max subtraction. -inf for all -inf input.
double log_sum_exp(const Vector& v);

/// exp(v) / sum(exp(v)), shift invariant.
Vector softmax(const Vector& v);
Vector log_softmax(const Vector& v);

struct DiagGaussian {
  Vector mean;
  Vector var;
};

/// Gaussian with full covariance; the Cholesky factor is computed once.
class FullGaussian {
 public:
  FullGaussian(Vector mean, Matrix cov);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  const Eigen::LLT<Matrix>& cholesky() const { return llt_; }
  double log_det() const { return log_det_; }
  std::size_t dim() const { return static_cast<std::size_t>(mean_.size()); }

 private:
  Vector mean_;
  Matrix cov_;
  Eigen::LLT<Matrix> llt_;
  double log_det_ = 0.0;
};

double log_density_diag(const Vector& x, const DiagGaussian& g);
double log_density_full(const Vector& x, const FullGaussian& g);

using Component = std::variant<DiagGaussian, FullGaussian>;

struct MixtureParams {
  Vector log_weights;  // normalized: log_sum_exp == 0
  std::vector<Component> components;

  /// Normalizes arbitrary log weights.
  static MixtureParams from_log_weights(Vector log_weights, std::vector<Component> components);
};

double log_density(const Vector& x, const Component& c);
double log_mixture_density(const Vector& x, const MixtureParams& mix);

}  // namespace ncwfa
