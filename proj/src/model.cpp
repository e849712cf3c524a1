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

#include "ncwfa/model.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"
#include "ncwfa/kernels.hpp"

namespace ncwfa {

void LinearCwfa::validate() const {
  const auto k = num_states();
  if (transition.order() != 3 || transition.dim(0) != k || transition.dim(2) != k) {
    throw ShapeError(fmt::format("transition shape does not match {} states", k));
  }
  if (static_cast<std::size_t>(omega.rows()) != k) {
    throw ShapeError(fmt::format("termination matrix has {} rows, expected {}", omega.rows(), k));
  }
}

Vector bilinear_step(const DenseTensor& transition, const Vector& h, const Vector& phi) {
  const auto r = static_cast<Eigen::Index>(transition.dim(0));
  const auto dp = static_cast<Eigen::Index>(transition.dim(1));
  if (h.size() != r) throw ShapeError(fmt::format("state has length {}, expected {}", h.size(), r));
  if (phi.size() != dp) {
    throw ShapeError(fmt::format("feature has length {}, expected {}", phi.size(), dp));
  }
  return kernels::bilinear(transition.data().data(), r, dp,
                           static_cast<Eigen::Index>(transition.dim(2)), h, phi);
}

Vector linear_cwfa_apply(const LinearCwfa& cwfa, std::span<const Vector> seq) {
  if (seq.empty()) throw ArgumentError("linear_cwfa_apply on an empty sequence");
  cwfa.validate();
  Vector h = cwfa.alpha;
  for (const auto& x : seq) h = bilinear_step(cwfa.transition, h, x);
  return cwfa.omega.transpose() * h;
}

std::size_t RnadeNcwfa::input_dim() const {
  return std::visit(
      [](const auto& f) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, TanhFeature>) {
          return static_cast<std::size_t>(f.w.rows());
        } else {
          return f.input_dim;
        }
      },
      feature);
}

std::size_t RnadeNcwfa::head_dim() const {
  return out_map ? static_cast<std::size_t>(out_map->cols()) : state_dim();
}

void RnadeNcwfa::validate() const {
  const auto r = state_dim();
  if (r == 0) throw ShapeError("model needs at least one state");
  if (transition.order() != 3 || transition.dim(0) != r || transition.dim(2) != r) {
    throw ShapeError(fmt::format("transition has shape ({}), expected ({}, d', {})",
                                 fmt::join(transition.shape(), ", "), r, r));
  }
  const std::size_t fdim = std::visit(
      [](const auto& f) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, TanhFeature>) {
          return static_cast<std::size_t>(f.w.cols());
        } else {
          return static_cast<std::size_t>(f.value.size());
        }
      },
      feature);
  if (fdim != feature_dim()) {
    throw ShapeError(fmt::format("feature map emits {} values, transition expects {}", fdim,
                                 feature_dim()));
  }
  if (out_map && static_cast<std::size_t>(out_map->rows()) != r) {
    throw ShapeError(fmt::format("output map has {} rows, expected {}", out_map->rows(), r));
  }
  const auto k = head_dim();
  std::visit(
      [&](const auto& h) {
        if constexpr (std::is_same_v<std::decay_t<decltype(h)>, DiagHead>) {
          const auto m = static_cast<Eigen::Index>(h.num_mixtures());
          const auto md = static_cast<Eigen::Index>(h.b_mu.size());
          if (m == 0 || md % m != 0) throw ShapeError("head has inconsistent mixture sizes");
          if (h.v_beta.rows() != m || h.head_dim() != k || h.v_mu.rows() != static_cast<Eigen::Index>(k) ||
              h.v_sigma.rows() != static_cast<Eigen::Index>(k) || h.v_mu.cols() != md ||
              h.v_sigma.cols() != md || h.b_sigma.size() != md) {
            throw ShapeError("head parameter shapes disagree");
          }
          if (h.obs_dim() != input_dim()) {
            throw ShapeError(fmt::format("head emits dimension {}, inputs have dimension {}",
                                         h.obs_dim(), input_dim()));
          }
          if (!(h.var_floor > 0.0)) throw DomainError("variance floor must be positive");
        } else {
          if (h.components.size() != k) {
            throw ShapeError(fmt::format("{} components for head input of length {}",
                                         h.components.size(), k));
          }
        }
      },
      head);
}

Vector feature_map(const RnadeNcwfa& model, const Vector& x) {
  return std::visit(
      [&x](const auto& f) -> Vector {
        if constexpr (std::is_same_v<std::decay_t<decltype(f)>, TanhFeature>) {
          if (x.size() != f.w.rows()) {
            throw ShapeError(fmt::format("input has length {}, expected {}", x.size(), f.w.rows()));
          }
          return kernels::tanh_feature(f.w, x);
        } else {
          if (static_cast<std::size_t>(x.size()) != f.input_dim) {
            throw ShapeError(fmt::format("input has length {}, expected {}", x.size(), f.input_dim));
          }
          return f.value;
        }
      },
      model.feature);
}

Vector step(const RnadeNcwfa& model, const Vector& h_prev, const Vector& x) {
  return bilinear_step(model.transition, h_prev, feature_map(model, x));
}

Vector head_input(const RnadeNcwfa& model, const Vector& h) {
  if (static_cast<std::size_t>(h.size()) != model.state_dim()) {
    throw ShapeError(fmt::format("state has length {}, expected {}", h.size(), model.state_dim()));
  }
  return model.out_map ? Vector(model.out_map->transpose() * h) : h;
}

MixtureParams head_mixture(const Head& head, const Vector& in) {
  return std::visit(
      [&in](const auto& hd) -> MixtureParams {
        if constexpr (std::is_same_v<std::decay_t<decltype(hd)>, DiagHead>) {
          const auto m = static_cast<Eigen::Index>(hd.num_mixtures());
          const auto d = static_cast<Eigen::Index>(hd.obs_dim());
          const Vector logits = kernels::affine(hd.v_beta, hd.b_beta, in);
          const Vector means = kernels::affine_t(hd.v_mu, hd.b_mu, in);
          const Vector vars =
              kernels::exp_floor(kernels::affine_t(hd.v_sigma, hd.b_sigma, in), hd.var_floor);
          std::vector<Component> comps;
          comps.reserve(static_cast<std::size_t>(m));
          for (Eigen::Index j = 0; j < m; ++j) {
            comps.emplace_back(DiagGaussian{means.segment(j * d, d), vars.segment(j * d, d)});
          }
          return MixtureParams{log_softmax(logits), std::move(comps)};
        } else {
          if ((in.array() < 0.0).any()) {
            throw DomainError("state-weighted head received negative mixing weights");
          }
          std::vector<Component> comps(hd.components.begin(), hd.components.end());
          return MixtureParams{in.array().log(), std::move(comps)};
        }
      },
      head);
}

double conditional_log_density(const RnadeNcwfa& model, const Vector& x, const Vector& h_prev) {
  const Vector in = head_input(model, h_prev);
  return std::visit(
      [&](const auto& hd) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(hd)>, DiagHead>) {
          if (static_cast<std::size_t>(x.size()) != hd.obs_dim()) {
            throw ShapeError(fmt::format("observation has length {}, head expects {}", x.size(),
                                         hd.obs_dim()));
          }
          const Vector logw = kernels::log_softmax(kernels::affine(hd.v_beta, hd.b_beta, in));
          const Vector means = kernels::affine_t(hd.v_mu, hd.b_mu, in);
          const Vector vars =
              kernels::exp_floor(kernels::affine_t(hd.v_sigma, hd.b_sigma, in), hd.var_floor);
          const Vector terms = kernels::mixture_terms(logw, means, vars, x);
          return log_sum_exp(terms);
        } else {
          return log_mixture_density(x, head_mixture(model.head, in));
        }
      },
      model.head);
}

double sequence_log_density(const RnadeNcwfa& model, std::span<const Vector> seq) {
  if (seq.empty()) throw ArgumentError("sequence_log_density on an empty sequence");
  double total = 0.0;
  Vector h = model.alpha;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    total += conditional_log_density(model, seq[t], h);
    if (t + 1 < seq.size()) h = step(model, h, seq[t]);
  }
  return total;
}

std::vector<Vector> hidden_states(const RnadeNcwfa& model, std::span<const Vector> seq) {
  std::vector<Vector> out{model.alpha};
  out.reserve(seq.size() + 1);
  for (const auto& x : seq) out.push_back(step(model, out.back(), x));
  return out;
}

RnadeNcwfa from_gaussian_hmm(const GaussianHmm& hmm) {
  hmm.validate();
  const std::size_t k = hmm.num_states();
  DenseTensor a({k, k, k});
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t j = 0; j < k; ++j)
        a.at({i, s, j}) = hmm.trans(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  RnadeNcwfa model{
      hmm.init,
      std::move(a),
      ConstantFeature{Vector::Constant(static_cast<Eigen::Index>(k), 1.0 / static_cast<double>(k)),
                      hmm.obs_dim()},
      StateWeightedHead{hmm.emissions},
      std::nullopt,
  };
  return model;
}

RnadeNcwfa shifting_construction() {
  DenseTensor a({2, 2, 2});
  for (std::size_t s = 0; s < 2; ++s) {
    a.at({0, s, 0}) = 1.0;
    a.at({0, s, 1}) = 1.0;
    a.at({1, s, 0}) = 0.0;
    a.at({1, s, 1}) = 1.0;
  }
  DiagHead head;
  head.v_beta = Matrix::Zero(1, 2);
  head.b_beta = Vector::Zero(1);
  head.v_mu = Matrix(2, 1);
  head.v_mu << 0.0, 1.0;  // mean = <h, [0, 1]>
  head.b_mu = Vector::Zero(1);
  head.v_sigma = Matrix::Zero(2, 1);
  head.b_sigma = Vector::Zero(1);  // unit variance
  return RnadeNcwfa{
      Vector::Ones(2),
      std::move(a),
      ConstantFeature{Vector::Constant(2, 0.5), 1},
      std::move(head),
      std::nullopt,
  };
}

}  // namespace ncwfa
