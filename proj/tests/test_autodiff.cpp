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

#include "ncwfa/autodiff.hpp"
#include "ncwfa/training.hpp"
#include "oracles.hpp"

using namespace ncwfa;

namespace {

Matrix flat(const DenseTensor& t) {
  return Eigen::Map<const Matrix>(t.data().data(), static_cast<Eigen::Index>(t.size()), 1);
}

// Small graph exercising every tape op. The probe (1 x n) reduces vector
// nodes to scalars so that each op gets its own seed.
struct Fixture {
  ParamGraph g;
  Matrix m_const;
  Vector x1, x2;

  explicit Fixture(Rng& rng) {
    g.add("W", {2, 3}, oracle::randn(2, 3, rng));
    g.add("G", {3, 4}, flat(oracle::randn_tensor({3, 4}, rng, 0.5)));
    g.add("A", {4, 3, 4}, flat(oracle::randn_tensor({4, 3, 4}, rng, 0.5)));
    g.add("V", {1, 4}, oracle::randn(1, 4, rng));
    g.add("b", {1}, oracle::randn(1, 1, rng));
    g.add("Vm", {4, 2}, oracle::randn(4, 2, rng, 0.5));
    g.add("bm", {2}, oracle::randn(2, 1, rng));
    g.add("Vs", {4, 2}, oracle::randn(4, 2, rng, 0.3));
    g.add("bs", {2}, oracle::randn(2, 1, rng, 0.3));
    g.add("Vw", {2, 4}, oracle::randn(2, 4, rng));
    g.add("bw", {2}, oracle::randn(2, 1, rng));
    g.add("h", {4}, oracle::randn(4, 1, rng));
    m_const = oracle::randn(4, 4, rng);
    x1 = oracle::randn(2, rng);
    x2 = oracle::randn(2, rng);
  }

  double loss(ParamGraph& p, bool with_grad) const {
    Tape t(p);
    const auto phi1 = t.tanh_feature(p.index("W"), x1);
    const auto phi2 = t.tanh_feature(p.index("W"), x2);
    const auto h1 = t.first_core(p.index("G"), phi1);
    const auto h2 = t.bilinear(p.index("A"), h1, phi2);
    const auto h3 = t.bilinear(p.index("A"), t.const_matvec_t(m_const, h2), phi1);
    const auto hp = t.bilinear(p.index("A"), t.param(p.index("h")), phi2);
    const auto s1 = t.affine(p.index("V"), p.index("b"), h3, false);
    const auto s2 = t.affine(p.index("V"), p.index("b"), hp, false);
    // Mixture of two 1-d components: weights from h2, means and variances from h3.
    const auto logw = t.log_softmax(t.affine(p.index("Vw"), p.index("bw"), h2, false));
    const auto means = t.affine(p.index("Vm"), p.index("bm"), h3, true);
    const auto vars = t.exp_floor(t.affine(p.index("Vs"), p.index("bs"), h1, true), 1e-6);
    const auto mix = t.mixture_logpdf(logw, means, vars, Vector::Constant(1, 0.4));
    const double value = 0.7 * t.scalar(s1) - 1.3 * t.scalar(s2) + t.scalar(mix);
    if (with_grad) t.backward({{s1, 0.7}, {s2, -1.3}, {mix, 1.0}});
    return value;
  }
};

}  // namespace

TEST_CASE("tape gradients match central differences for every op") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const Fixture f(rng);
    ParamGraph g = f.g;
    const auto report = grad_check([&](ParamGraph& p, bool grad) { return f.loss(p, grad); }, g, 1e-6);
    INFO("seed " << seed << " worst " << report.worst);
    CHECK(report.passed);
    CHECK(report.max_rel_error.size() == g.size());
  }
}

TEST_CASE("tape values") {
  Rng rng(11);
  ParamGraph g;
  const auto w = g.add("W", {2, 2}, Matrix::Identity(2, 2));
  Tape t(g);
  Vector x(2);
  x << 0.5, -1.0;
  CHECK((t.value(t.tanh_feature(w, x)) - x.array().tanh().matrix()).norm() < 1e-15);
  Vector z(3);
  z << 1.0, 2.0, 3.0;
  const Vector ls = t.value(t.log_softmax(t.constant(z)));
  CHECK(std::abs(ls.array().exp().sum() - 1.0) < 1e-15);
  const Vector ef = t.value(t.exp_floor(t.constant(Vector::Constant(2, -50.0)), 1e-3));
  CHECK(ef == Vector::Constant(2, 1e-3));
}

TEST_CASE("floored variances pass no gradient") {
  ParamGraph g;
  const auto h = g.add("h", {1}, Matrix::Constant(1, 1, -40.0));
  Tape t(g);
  const auto v = t.exp_floor(t.param(h), 1e-6);
  const auto lw = t.constant(Vector::Zero(1));
  const auto out = t.mixture_logpdf(lw, t.constant(Vector::Zero(1)), v, Vector::Constant(1, 0.0));
  g.zero_grad();
  t.backward({{out, 1.0}});
  CHECK(g[h].grad(0, 0) == 0.0);
}

TEST_CASE("parameter graph bookkeeping") {
  ParamGraph g;
  g.add("a", {2, 3}, Matrix::Ones(2, 3));
  CHECK(g.index("a") == 0);
  CHECK(g["a"].grad.isZero());
  CHECK_THROWS(g.index("missing"));
  CHECK_THROWS(g.add("a", {1}, Matrix::Ones(1, 1)));
  CHECK(g.all_finite());
  g["a"].value(0, 0) = std::nan("");
  CHECK_FALSE(g.all_finite());
}

TEST_CASE("grad_check on a quadratic") {
  ParamGraph g;
  g.add("p", {3}, (Matrix(3, 1) << 1.0, -2.0, 0.5).finished());
  const Vector c = (Vector(3) << 0.3, 0.1, -1.0).finished();
  auto quad = [&](ParamGraph& p, bool grad) {
    const Vector diff = p["p"].value.col(0) - c;
    if (grad) p["p"].grad.col(0) += 2.0 * diff;
    return diff.squaredNorm();
  };
  auto report = grad_check(quad, g, 1e-8);
  CHECK(report.passed);
  CHECK(report.worst < 1e-8);
  auto wrong = [&](ParamGraph& p, bool grad) {
    const Vector diff = p["p"].value.col(0) - c;
    if (grad) p["p"].grad.col(0) += 2.1 * diff;
    return diff.squaredNorm();
  };
  report = grad_check(wrong, g, 1e-4);
  CHECK_FALSE(report.passed);
  CHECK(report.max_rel_error.at("p") > 0.04);
}
