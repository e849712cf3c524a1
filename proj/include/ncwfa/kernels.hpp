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

// Forward kernels shared by model evaluation and the gradient tape. Both
// paths call these exact functions so their results agree to the bit.

#include "ncwfa/tensor.hpp"

namespace ncwfa::kernels {

/// tanh(W^T x)
Vector tanh_feature(const Matrix& w, const Vector& x);

/// out_l = sum_{i,j} A[i,j,l] h_i phi_j, A row-major (r, dp, r_out).
Vector bilinear(const double* a, Eigen::Index r, Eigen::Index dp, Eigen::Index r_out,
                const Vector& h, const Vector& phi);

/// G^T phi with G row-major (d, k).
Vector first_core(const double* g, Eigen::Index d, Eigen::Index k, const Vector& phi);

/// V h + b
Vector affine(const Matrix& v, const Eigen::Ref<const Vector>& b, const Eigen::Ref<const Vector>& h);
/// V^T h + b
Vector affine_t(const Matrix& v, const Eigen::Ref<const Vector>& b, const Eigen::Ref<const Vector>& h);

Vector log_softmax(const Vector& z);

/// max(exp(z), floor)
Vector exp_floor(const Vector& z, double floor);

/// Per-component log(weight) + diagonal Gaussian log density; means and
/// variances laid out (m, d) row-major.
Vector mixture_terms(const Vector& log_weights, const Vector& means, const Vector& vars,
                     const Vector& x);

}  // namespace ncwfa::kernels
