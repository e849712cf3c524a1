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
#include <numbers>

#include "ncwfa/errors.hpp"
#include "ncwfa/model.hpp"
#include "oracles.hpp"

using namespace ncwfa;

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Applies A x1 h x2 phi through generic mode products.
Vector step_by_modes(const DenseTensor& a, const Vector& h, const Vector& phi) {
  const DenseTensor t = mode_n_vector_product(mode_n_vector_product(a, h, 0), phi, 0);
  return Eigen::Map<const Vector>(t.data().data(), static_cast<Eigen::Index>(t.size()));
}

}  // namespace

TEST_CASE("feature maps") {
  Rng rng(1);
  RnadeNcwfa model = oracle::random_rnade(3, 2, 2, rng);
  SUBCASE("zero input maps to zero") { CHECK(feature_map(model, Vector::Zero(2)).norm() == 0.0); }
  SUBCASE("identity weights give elementwise tanh") {
    model.feature = TanhFeature{Matrix::Identity(2, 2)};
    Vector x(2);
    x << 0.3, -2.0;
    const Vector phi = feature_map(model, x);
    CHECK(phi(0) == doctest::Approx(std::tanh(0.3)).epsilon(1e-15));
    CHECK(phi(1) == doctest::Approx(std::tanh(-2.0)).epsilon(1e-15));
  }
  SUBCASE("bounded for large inputs") {
    const Vector phi = feature_map(model, Vector::Constant(2, 1e6));
    CHECK(phi.cwiseAbs().maxCoeff() <= 1.0);
    CHECK(phi.allFinite());
  }
  SUBCASE("constant feature ignores the input") {
    model.feature = ConstantFeature{Vector::Constant(2, 0.25), 2};
    CHECK(feature_map(model, oracle::randn(2, rng)) == Vector::Constant(2, 0.25));
  }
  SUBCASE("wrong input dimension") { CHECK_THROWS_AS(feature_map(model, Vector::Zero(3)), ShapeError); }
}

TEST_CASE("transition step") {
  Rng rng(2);
  SUBCASE("identity slices return the state scaled by the feature sum") {
    DenseTensor a({3, 2, 3});
    for (std::size_t s = 0; s < 2; ++s)
      for (std::size_t i = 0; i < 3; ++i) a.at({i, s, i}) = 1.0;
    const Vector h = oracle::randn(3, rng), phi = oracle::randn(2, rng);
    CHECK((bilinear_step(a, h, phi) - phi.sum() * h).norm() < 1e-14);
  }
  SUBCASE("agrees with mode products") {
    for (int n = 0; n < 20; ++n) {
      const DenseTensor a = oracle::randn_tensor({4, 3, 4}, rng);
      const Vector h = oracle::randn(4, rng), phi = oracle::randn(3, rng);
      CHECK((bilinear_step(a, h, phi) - step_by_modes(a, h, phi)).norm() < 1e-12);
    }
  }
  SUBCASE("a constant feature collapses to a matrix product") {
    const GaussianHmm hmm = random_hmm(4, 2, rng);
    const RnadeNcwfa emb = from_gaussian_hmm(hmm);
    const Vector h = sample_dirichlet_flat(4, rng);
    const Vector expect = hmm.trans.transpose() * h;
    CHECK((step(emb, h, oracle::randn(2, rng)) - expect).norm() < 1e-14);
  }
  SUBCASE("shape errors") {
    const DenseTensor a = oracle::randn_tensor({4, 3, 4}, rng);
    CHECK_THROWS_AS(bilinear_step(a, Vector::Zero(3), Vector::Zero(3)), ShapeError);
    CHECK_THROWS_AS(bilinear_step(a, Vector::Zero(4), Vector::Zero(2)), ShapeError);
  }
}

TEST_CASE("conditional density") {
  Rng rng(3);
  SUBCASE("single component with zero state is the bias Gaussian") {
    RnadeNcwfa model = oracle::random_rnade(3, 1, 2, rng);
    const auto& head = std::get<DiagHead>(model.head);
    const Vector x = oracle::randn(2, rng);
    const Vector var = head.b_sigma.array().exp();
    CHECK(conditional_log_density(model, x, Vector::Zero(3)) ==
          doctest::Approx(oracle::gauss_diag(x, head.b_mu, var)).epsilon(1e-13));
  }
  SUBCASE("matches the straight-line head") {
    for (int n = 0; n < 30; ++n) {
      const RnadeNcwfa model = oracle::random_rnade(4, 3, 2, rng);
      const Vector x = oracle::randn(2, rng), h = oracle::randn(4, rng);
      CHECK(oracle::rel_err(conditional_log_density(model, x, h),
                            oracle::diag_head_log_density(std::get<DiagHead>(model.head), x, h)) < 1e-12);
    }
  }
  SUBCASE("mixture weights sum to one") {
    const RnadeNcwfa model = oracle::random_rnade(4, 5, 2, rng);
    const auto mix = head_mixture(model.head, oracle::randn(4, rng, 3.0));
    CHECK(std::abs(mix.log_weights.array().exp().sum() - 1.0) < 1e-12);
  }
  SUBCASE("variance floor") {
    RnadeNcwfa model = oracle::random_rnade(2, 1, 1, rng);
    auto& head = std::get<DiagHead>(model.head);
    head.v_sigma.setZero();
    head.b_sigma.setConstant(-100.0);
    head.var_floor = 1e-4;
    const auto mix = head_mixture(model.head, Vector::Zero(2));
    const auto& c = std::get<DiagGaussian>(mix.components[0]);
    CHECK(c.var(0) == 1e-4);
  }
  SUBCASE("integrates to one on a grid") {
    const RnadeNcwfa model = oracle::random_rnade(3, 2, 1, rng);
    const Vector h = oracle::randn(3, rng);
    const double step = 1e-3;
    double total = 0.0;
    for (double x = -40.0; x <= 40.0; x += step)
      total += std::exp(conditional_log_density(model, Vector::Constant(1, x), h)) * step;
    CHECK(std::abs(total - 1.0) < 1e-4);
  }
}

TEST_CASE("sequence density") {
  Rng rng(4);
  SUBCASE("length one is the conditional at alpha") {
    const RnadeNcwfa model = oracle::random_rnade(3, 2, 2, rng);
    const Vector x = oracle::randn(2, rng);
    const Sequence seq{x};
    CHECK(sequence_log_density(model, seq) == doctest::Approx(conditional_log_density(model, x, model.alpha)).epsilon(1e-14));
  }
  SUBCASE("matches the loop oracle with and without an output map") {
    for (int n = 0; n < 20; ++n) {
      RnadeNcwfa model = oracle::random_rnade(4, 2, 2, rng);
      const auto seq = oracle::random_sequence(6, 2, rng);
      CHECK(oracle::rel_err(sequence_log_density(model, seq), oracle::rnade_sequence(model, seq)) < 1e-10);
      model.out_map = oracle::randn(3, 4, rng, 0.5);
      auto& head = std::get<DiagHead>(model.head);
      head.v_beta = oracle::randn(2, 4, rng, 0.5);
      head.v_mu = oracle::randn(4, 4, rng, 0.5);
      head.v_sigma = oracle::randn(4, 4, rng, 0.2);
      CHECK_THROWS_AS(model.validate(), ShapeError);
      model.out_map = oracle::randn(4, 4, rng, 0.5);
      CHECK_NOTHROW(model.validate());
      CHECK(oracle::rel_err(sequence_log_density(model, seq), oracle::rnade_sequence(model, seq)) < 1e-10);
    }
  }
  SUBCASE("hidden states have length n+1") {
    const RnadeNcwfa model = oracle::random_rnade(3, 2, 2, rng);
    const auto seq = oracle::random_sequence(5, 2, rng);
    const auto hs = hidden_states(model, seq);
    REQUIRE(hs.size() == 6);
    CHECK(hs[0] == model.alpha);
    CHECK((hs[3] - step(model, hs[2], seq[2])).norm() == 0.0);
  }
  SUBCASE("HMM embedding reproduces the factored density") {
    for (int n = 0; n < 100; ++n) {
      std::uniform_int_distribution<std::size_t> kd(1, 5), ld(1, 8);
      const GaussianHmm hmm = random_hmm(kd(rng), 2, rng);
      const auto seq = sample(hmm, ld(rng), rng).observations;
      CHECK(oracle::rel_err(sequence_log_density(from_gaussian_hmm(hmm), seq), log_density_factored(hmm, seq)) < 1e-8);
    }
  }
}

TEST_CASE("shifting construction") {
  const RnadeNcwfa model = shifting_construction();
  CHECK_NOTHROW(model.validate());
  Sequence seq;
  for (int i = 1; i <= 5; ++i) seq.push_back(Vector::Constant(1, static_cast<double>(i)));
  const auto hs = hidden_states(model, seq);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(hs[i](0) == 1.0);
    CHECK(hs[i](1) == static_cast<double>(i + 1));
  }
  for (const std::vector<double>& v : {std::vector<double>{1.0}, {1.0, 2.0, 3.0}, {0.0, 0.0}, {-1.5, 4.0, 2.5, 0.1}}) {
    Sequence s;
    for (double x : v) s.push_back(Vector::Constant(1, x));
    CHECK(sequence_log_density(model, s) == doctest::Approx(shifting_hmm_log_density(v)).epsilon(1e-14));
  }
  const Sequence one{Vector::Constant(1, 1.0)};
  CHECK(sequence_log_density(model, one) == doctest::Approx(-kHalfLog2Pi).epsilon(1e-15));
}

TEST_CASE("linear CWFA") {
  Rng rng(5);
  SUBCASE("matches an explicit matrix chain") {
    for (int n = 0; n < 20; ++n) {
      const LinearCwfa c = oracle::random_cwfa(4, 3, 2, rng);
      const auto seq = oracle::random_sequence(5, 3, rng);
      CHECK((linear_cwfa_apply(c, seq) - oracle::cwfa_chain(c, seq)).norm() < 1e-10 * oracle::cwfa_chain(c, seq).norm());
    }
  }
  SUBCASE("linear in each input") {
    const LinearCwfa c = oracle::random_cwfa(3, 2, 1, rng);
    auto seq = oracle::random_sequence(4, 2, rng);
    const Vector u = oracle::randn(2, rng), v = oracle::randn(2, rng);
    for (std::size_t pos = 0; pos < 4; ++pos) {
      auto su = seq, sv = seq, sw = seq;
      su[pos] = u;
      sv[pos] = v;
      sw[pos] = 2.0 * u - 3.0 * v;
      const Vector lhs = linear_cwfa_apply(c, sw);
      const Vector rhs = 2.0 * linear_cwfa_apply(c, su) - 3.0 * linear_cwfa_apply(c, sv);
      CHECK((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
    }
  }
  SUBCASE("chain associativity") {
    // Splitting the sequence at any point and multiplying the two halves
    // through the state gives the same value.
    const LinearCwfa c = oracle::random_cwfa(3, 2, 2, rng);
    const auto seq = oracle::random_sequence(6, 2, rng);
    const Vector full = linear_cwfa_apply(c, seq);
    for (std::size_t cut = 1; cut < 6; ++cut) {
      LinearCwfa head = c;
      head.omega = Matrix::Identity(3, 3);
      const Vector state = linear_cwfa_apply(head, std::span(seq).first(cut));
      LinearCwfa tail = c;
      tail.alpha = state;
      CHECK((linear_cwfa_apply(tail, std::span(seq).subspan(cut)) - full).norm() < 1e-10 * full.norm());
    }
  }
  SUBCASE("validation") {
    LinearCwfa c = oracle::random_cwfa(3, 2, 2, rng);
    c.omega = Matrix::Zero(4, 2);
    CHECK_THROWS_AS(c.validate(), ShapeError);
  }
}
