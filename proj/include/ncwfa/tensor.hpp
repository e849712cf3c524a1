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

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace ncwfa {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<std::size_t>;

/// Multidimensional real array stored row-major (last index fastest).
/// Every reshape, matricization and vectorization in the library uses this
/// linearization, so grouping contiguous modes never moves data.
class DenseTensor {
 public:
  DenseTensor() = default;
  explicit DenseTensor(Shape shape);
  DenseTensor(Shape shape, std::vector<double> data);

  static DenseTensor from_matrix(const Matrix& m);
  static DenseTensor from_vector(const Vector& v);

  const Shape& shape() const { return shape_; }
  std::size_t order() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t mode) const { return shape_.at(mode); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  double& operator()(std::span<const std::size_t> index);
  double operator()(std::span<const std::size_t> index) const;
  double& at(std::initializer_list<std::size_t> index);
  double at(std::initializer_list<std::size_t> index) const;

  std::size_t offset(std::span<const std::size_t> index) const;

  /// Same data, new shape; product of dims must match.
  DenseTensor reshaped(Shape shape) const;

  /// Row-major view as an n x m matrix; order must be 2.
  Matrix to_matrix() const;
  Vector to_vector() const;

  bool all_finite() const;

  friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t shape_product(std::span<const std::size_t> shape);

/// Sizes of consecutive mode groups; must sum to the tensor order.
struct Grouping {
  std::vector<std::size_t> group_sizes;
};

/// Mode-n matrix product T x_n M (0-based mode). M has shape(rows, dim(n)).
DenseTensor mode_n_product(const DenseTensor& t, const Matrix& m, std::size_t mode);

/// Mode-n vector product; removes mode n from the shape.
DenseTensor mode_n_vector_product(const DenseTensor& t, const Vector& v, std::size_t mode);

/// Reshape into one mode per group. The result is a tensor of order
/// group_sizes.size(); call to_matrix() on it for two groups.
DenseTensor matricize(const DenseTensor& t, const Grouping& grouping);

/// Inverse of matricize: restores the original shape.
DenseTensor unmatricize(const DenseTensor& grouped, const Shape& original);

/// Tensor train with uniform bond dimension.
///
/// Mode cores consume one feature vector each. Without a left boundary the
/// first core is (d, k); with one, every mode core is (k, d, k). An optional
/// output core (k, p) closes the train; without it the trailing bond index is
/// the output.
class TTTrain {
 public:
  TTTrain(std::vector<DenseTensor> cores, std::optional<Vector> left = std::nullopt,
          std::optional<Matrix> output = std::nullopt);

  const std::vector<DenseTensor>& cores() const { return cores_; }
  const std::optional<Vector>& left() const { return left_; }
  const std::optional<Matrix>& output() const { return output_; }

  std::size_t num_mode_cores() const { return cores_.size(); }
  std::size_t rank() const { return rank_; }
  std::size_t mode_dim() const { return mode_dim_; }
  /// Trailing dimension of the train (p with an output core, otherwise k).
  std::size_t output_dim() const;

 private:
  std::vector<DenseTensor> cores_;
  std::optional<Vector> left_;
  std::optional<Matrix> output_;
  std::size_t rank_ = 0;
  std::size_t mode_dim_ = 0;
};

/// State after contracting the first features.size() mode cores (no output
/// core applied). Linear in the sequence length; nothing dense is formed.
Vector tt_contract_prefix(const TTTrain& tt, std::span<const Vector> features);

/// Contract every mode core and then the output core if present.
Vector tt_contract_features(const TTTrain& tt, std::span<const Vector> features);

inline constexpr std::size_t kDefaultDenseCap = 10'000'000;

/// Dense expansion with shape (d, ..., d, out).
DenseTensor tt_to_dense(const TTTrain& tt, std::size_t max_entries = kDefaultDenseCap);

enum class SplitConvention {
  kScaleLeft,   // P = U Sigma, S = V^T
  kScaleRight,  // P = U, S = Sigma V^T
};

/// Truncated-SVD rank factorization M ~= P S (by default P = U Sigma, S = V^T).
struct RankFactorization {
  Matrix p;
  Matrix s;
  /// Pseudoinverses from the same decomposition (cutoff relative to sigma_max).
  Matrix p_pinv;
  Matrix s_pinv;
  Vector singular_values;  // full spectrum, descending
  double residual = 0.0;   // ||M - P S||_F
  std::size_t numerical_rank = 0;
};

inline constexpr double kDefaultPinvRtol = 1e-10;

RankFactorization rank_factorize(const Matrix& m, std::size_t rank,
                                 double pinv_rtol = kDefaultPinvRtol,
                                 SplitConvention split = SplitConvention::kScaleLeft);

/// Moore-Penrose pseudoinverse with a relative singular-value cutoff.
Matrix pseudo_inverse(const Matrix& m, double rtol = kDefaultPinvRtol);

}  // namespace ncwfa
