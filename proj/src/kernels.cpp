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

#include "ncwfa/kernels.hpp"

#include "ncwfa/prob.hpp"

namespace ncwfa::kernels {

Vector tanh_feature(const Matrix& w, const Vector& x) {
  return (w.transpose() * x).array().tanh();
}

Vector bilinear(const double* a, Eigen::Index r, Eigen::Index dp, Eigen::Index r_out,
                const Vector& h, const Vector& phi) {
  Eigen::Map<const RowMatrix> am(a, r, dp * r_out);
  const Vector row = am.transpose() * h;
  return Eigen::Map<const RowMatrix>(row.data(), dp, r_out).transpose() * phi;
}

Vector first_core(const double* g, Eigen::Index d, Eigen::Index k, const Vector& phi) {
  return Eigen::Map<const RowMatrix>(g, d, k).transpose() * phi;
}

Vector affine(const Matrix& v, const Eigen::Ref<const Vector>& b,
              const Eigen::Ref<const Vector>& h) {
  return v * h + b;
}

Vector affine_t(const Matrix& v, const Eigen::Ref<const Vector>& b,
                const Eigen::Ref<const Vector>& h) {
  return v.transpose() * h + b;
}

Vector log_softmax(const Vector& z) { return z.array() - log_sum_exp(z); }

Vector exp_floor(const Vector& z, double floor) { return z.array().exp().max(floor); }

Vector mixture_terms(const Vector& log_weights, const Vector& means, const Vector& vars,
                     const Vector& x) {
  const Eigen::Index m = log_weights.size();
  const Eigen::Index d = x.size();
  Vector terms(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto diff = (x - means.segment(j * d, d)).array();
    const auto v = vars.segment(j * d, d).array();
    terms(j) = log_weights(j) + (-0.5 * (kLogTwoPi + v.log()) - diff.square() / (2.0 * v)).sum();
  }
  return terms;
}

}  // namespace ncwfa::kernels
