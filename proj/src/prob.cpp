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

#include "ncwfa/prob.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

double log_sum_exp(const Vector& v) {
  if (v.size() == 0) throw ArgumentError("log_sum_exp of an empty vector");
  const double m = v.maxCoeff();
  if (m == -std::numeric_limits<double>::infinity()) return m;
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

Vector softmax(const Vector& v) {
  const Vector e = (v.array() - v.maxCoeff()).exp();
  return e / e.sum();
}

Vector log_softmax(const Vector& v) { return v.array() - log_sum_exp(v); }

FullGaussian::FullGaussian(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != mean_.size() || cov_.cols() != mean_.size()) {
    throw ShapeError(fmt::format("covariance is {}x{} for a mean of length {}", cov_.rows(),
                                 cov_.cols(), mean_.size()));
  }
  if (!(cov_ - cov_.transpose()).isZero(1e-10 * std::max(1.0, cov_.cwiseAbs().maxCoeff()))) {
    throw DomainError("covariance is not symmetric");
  }
  llt_.compute(cov_);
  if (llt_.info() != Eigen::Success) throw DomainError("covariance is not positive definite");
  log_det_ = 2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

double log_density_diag(const Vector& x, const DiagGaussian& g) {
  if (x.size() != g.mean.size() || g.var.size() != g.mean.size()) {
    throw ShapeError(fmt::format("point of length {} against Gaussian of dimension {}", x.size(),
                                 g.mean.size()));
  }
  if ((g.var.array() <= 0.0).any()) throw DomainError("non-positive variance");
  const auto diff = (x - g.mean).array();
  return (-0.5 * (kLogTwoPi + g.var.array().log()) - diff.square() / (2.0 * g.var.array())).sum();
}

double log_density_full(const Vector& x, const FullGaussian& g) {
  if (static_cast<std::size_t>(x.size()) != g.dim()) {
    throw ShapeError(fmt::format("point of length {} against Gaussian of dimension {}", x.size(),
                                 g.dim()));
  }
  const Vector z = g.cholesky().matrixL().solve(x - g.mean());
  return -0.5 * (static_cast<double>(g.dim()) * kLogTwoPi + g.log_det() + z.squaredNorm());
}

double log_density(const Vector& x, const Component& c) {
  return std::visit(
      [&x](const auto& g) {
        if constexpr (std::is_same_v<std::decay_t<decltype(g)>, DiagGaussian>) {
          return log_density_diag(x, g);
        } else {
          return log_density_full(x, g);
        }
      },
      c);
}

MixtureParams MixtureParams::from_log_weights(Vector log_weights, std::vector<Component> components) {
  if (static_cast<std::size_t>(log_weights.size()) != components.size()) {
    throw ShapeError("mixture weight count differs from component count");
  }
  const double z = log_sum_exp(log_weights);
  return MixtureParams{log_weights.array() - z, std::move(components)};
}

double log_mixture_density(const Vector& x, const MixtureParams& mix) {
  if (static_cast<std::size_t>(mix.log_weights.size()) != mix.components.size()) {
    throw ShapeError("mixture weight count differs from component count");
  }
  Vector terms(mix.log_weights.size());
  for (Eigen::Index j = 0; j < terms.size(); ++j) {
    terms(j) = mix.log_weights(j) + log_density(x, mix.components[static_cast<std::size_t>(j)]);
  }
  return log_sum_exp(terms);
}

}  // namespace ncwfa
