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

#include <doctest.h>

#include <cmath>
#include <limits>

#include "ncwfa/errors.hpp"
#include "ncwfa/prob.hpp"
#include "oracles.hpp"

using namespace ncwfa;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST_CASE("log_sum_exp") {
  CHECK(log_sum_exp(vec({2.5})) == 2.5);
  // dyadic entries so the shift itself is exact; only the final add rounds
  const Vector v = vec({0.5, -2.0, 3.0});
  CHECK(std::abs(log_sum_exp((v.array() + 1000.0).matrix()) - (log_sum_exp(v) + 1000.0)) <= 2.3e-13);
  CHECK(std::abs(log_sum_exp(vec({std::log(1.0), std::log(2.0), std::log(3.0)})) - std::log(6.0)) < 1e-14);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp(vec({-inf, -inf})) == -inf);
  CHECK_THROWS_AS(log_sum_exp(Vector()), ArgumentError);
  CHECK(std::isfinite(log_sum_exp(vec({1e6, -1e6, 1e6}))));
  CHECK(log_sum_exp(vec({1e6, 1e6})) == doctest::Approx(1e6 + std::log(2.0)));
}

TEST_CASE("softmax") {
  const Vector h = softmax(vec({0, 0}));
  CHECK(h(0) == 0.5);
  CHECK(h(1) == 0.5);
  for (double c : {-50.0, 0.0, 7.0, 700.0}) {
    const Vector u = softmax(Vector::Constant(4, c));
    for (double x : u) CHECK(x == doctest::Approx(0.25).epsilon(1e-14));
  }
  const Vector s = softmax(vec({1, 2, 3}));
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(s(i) - std::exp(i + 1.0) / z) < 1e-14);
  const Vector v = vec({0.3, -1.2, 4.0, 2.2});
  CHECK((softmax((v.array() + 123.0).matrix()) - softmax(v)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(softmax(v).sum() - 1.0) < 1e-12);
  CHECK((log_softmax(v).array().exp().matrix() - softmax(v)).norm() < 1e-14);
}

TEST_CASE("diagonal Gaussian") {
  CHECK(log_density_diag(vec({0}), {vec({0}), vec({1})}) == doctest::Approx(-0.9189385332046727).epsilon(1e-15));
  const DiagGaussian g{vec({0.5, -1, 2}), vec({0.7, 1.3, 2.0})};
  const Vector x = vec({0.1, 0.2, 0.3});
  double sum = 0.0;
  for (int i = 0; i < 3; ++i) sum += log_density_diag(vec({x(i)}), {vec({g.mean(i)}), vec({g.var(i)})});
  CHECK(log_density_diag(x, g) == doctest::Approx(sum).epsilon(1e-14));
  // (1,-1), mean 0, var (1, 4): -log(2 pi) - 0.5 log 4 - 1/2 - 1/8
  const double ref = -std::log(2.0 * M_PI) - 0.5 * std::log(4.0) - 0.5 - 0.125;
  CHECK(log_density_diag(vec({1, -1}), {vec({0, 0}), vec({1, 4})}) == doctest::Approx(ref).epsilon(1e-14));
  CHECK_THROWS_AS(log_density_diag(vec({0}), {vec({0}), vec({0})}), DomainError);
  CHECK_THROWS_AS(log_density_diag(vec({0}), {vec({0}), vec({-1})}), DomainError);
  CHECK_THROWS_AS(log_density_diag(vec({0, 1}), {vec({0}), vec({1})}), ShapeError);
}

TEST_CASE("full-covariance Gaussian") {
  const Vector mean = vec({0.3, -0.4});
  Matrix diag = Matrix::Zero(2, 2);
  diag.diagonal() = vec({0.8, 2.5});
  const Vector x = vec({1.1, 0.2});
  CHECK(std::abs(log_density_full(x, FullGaussian(mean, diag)) - log_density_diag(x, {mean, vec({0.8, 2.5})})) < 1e-12);

  Matrix cov(2, 2);
  cov << 1.0, 0.5, 0.5, 1.0;
  // explicit 2x2 inverse and determinant
  const double det = 1.0 - 0.25;
  const double dx = x(0) - mean(0), dy = x(1) - mean(1);
  const double quad = (dx * dx - 2 * 0.5 * dx * dy + dy * dy) / det;
  const double ref = -std::log(2.0 * M_PI) - 0.5 * std::log(det) - 0.5 * quad;
  const FullGaussian g(mean, cov);
  CHECK(log_density_full(x, g) == doctest::Approx(ref).epsilon(1e-13));
  CHECK(log_density_full(x, g) == doctest::Approx(oracle::gauss_full(x, mean, cov)).epsilon(1e-12));

  double mass = 0.0;
  const double h = 0.02;
  for (double a = -8.0; a < 8.0; a += h)
    for (double b = -8.0; b < 8.0; b += h) mass += std::exp(log_density_full(vec({a + h / 2, b + h / 2}), g)) * h * h;
  CHECK(std::abs(mass - 1.0) < 1e-3);

  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(FullGaussian(mean, bad), DomainError);
  Matrix asym(2, 2);
  asym << 1.0, 0.1, 0.0, 1.0;
  CHECK_THROWS_AS(FullGaussian(mean, asym), DomainError);
}

TEST_CASE("diagonal densities integrate to one") {
  const DiagGaussian g{vec({0.5, -0.5}), vec({0.6, 1.7})};
  double mass = 0.0;
  const double h = 0.02;
  for (double a = -10.0; a < 10.0; a += h)
    for (double b = -10.0; b < 10.0; b += h) mass += std::exp(log_density_diag(vec({a + h / 2, b + h / 2}), g)) * h * h;
  CHECK(std::abs(mass - 1.0) < 1e-3);
}

TEST_CASE("Gaussian mixtures") {
  const DiagGaussian a{vec({0.0}), vec({1.0})};
  const DiagGaussian b{vec({2.0}), vec({0.5})};
  const Vector x = vec({0.7});
  const auto single = MixtureParams::from_log_weights(vec({3.0}), {a});
  CHECK(single.log_weights(0) == 0.0);
  CHECK(log_mixture_density(x, single) == log_density_diag(x, a));

  const auto twin = MixtureParams::from_log_weights(vec({std::log(0.3), std::log(0.7)}), {a, a});
  CHECK(log_mixture_density(x, twin) == doctest::Approx(log_density_diag(x, a)).epsilon(1e-14));
  CHECK(std::abs(twin.log_weights.array().exp().sum() - 1.0) < 1e-12);

  const auto mix = MixtureParams::from_log_weights(vec({std::log(0.4), std::log(0.6)}), {a, b});
  const double lin = 0.4 * std::exp(oracle::gauss_diag(x, a.mean, a.var)) + 0.6 * std::exp(oracle::gauss_diag(x, b.mean, b.var));
  CHECK(log_mixture_density(x, mix) == doctest::Approx(std::log(lin)).epsilon(1e-13));
  const double la = log_density_diag(x, a), lb = log_density_diag(x, b);
  CHECK(log_mixture_density(x, mix) >= std::min(la, lb));
  CHECK(log_mixture_density(x, mix) <= log_sum_exp(vec({la, lb})));

  Matrix cov(1, 1);
  cov << 1.0;
  const auto mixed = MixtureParams::from_log_weights(vec({0.0, 0.0}), {a, FullGaussian(vec({0.0}), cov)});
  CHECK(log_mixture_density(x, mixed) == doctest::Approx(la).epsilon(1e-14));
}
