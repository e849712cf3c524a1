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

#include "ncwfa/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include <Eigen/SVD>
#include <fmt/format.h>
#include <fmt/ranges.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

std::size_t shape_product(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == 0) throw ShapeError(fmt::format("dimension {} of shape {} is zero", i, shape));
  }
}

}  // namespace

DenseTensor::DenseTensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

DenseTensor::DenseTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError(fmt::format("shape {} needs {} values, got {}", shape_, shape_product(shape_),
                                 data_.size()));
  }
}

DenseTensor DenseTensor::from_matrix(const Matrix& m) {
  DenseTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  Eigen::Map<RowMatrix>(t.data_.data(), m.rows(), m.cols()) = m;
  return t;
}

DenseTensor DenseTensor::from_vector(const Vector& v) {
  return DenseTensor({static_cast<std::size_t>(v.size())},
                     std::vector<double>(v.data(), v.data() + v.size()));
}

std::size_t DenseTensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError(fmt::format("index of order {} into tensor of order {}", index.size(),
                                 shape_.size()));
  }
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) {
      throw ShapeError(fmt::format("index {} out of range for mode {} of size {}", index[i], i,
                                   shape_[i]));
    }
    off = off * shape_[i] + index[i];
  }
  return off;
}

double& DenseTensor::operator()(std::span<const std::size_t> index) { return data_[offset(index)]; }
double DenseTensor::operator()(std::span<const std::size_t> index) const {
  return data_[offset(index)];
}
double& DenseTensor::at(std::initializer_list<std::size_t> index) {
  return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
}
double DenseTensor::at(std::initializer_list<std::size_t> index) const {
  return (*this)(std::span<const std::size_t>(index.begin(), index.size()));
}

DenseTensor DenseTensor::reshaped(Shape shape) const { return DenseTensor(std::move(shape), data_); }

Matrix DenseTensor::to_matrix() const {
  if (order() != 2) throw ShapeError(fmt::format("to_matrix on tensor of order {}", order()));
  return Eigen::Map<const RowMatrix>(data_.data(), shape_[0], shape_[1]);
}

Vector DenseTensor::to_vector() const {
  return Eigen::Map<const Vector>(data_.data(), static_cast<Eigen::Index>(data_.size()));
}

bool DenseTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

namespace {

// Treat the tensor as (outer, dim(mode), inner) in row-major order.
struct ModeSplit {
  std::size_t outer, dim, inner;
};

ModeSplit split_at(const Shape& shape, std::size_t mode) {
  ModeSplit s{1, shape[mode], 1};
  for (std::size_t i = 0; i < mode; ++i) s.outer *= shape[i];
  for (std::size_t i = mode + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

DenseTensor mode_n_product(const DenseTensor& t, const Matrix& m, std::size_t mode) {
  if (mode >= t.order()) {
    throw ShapeError(fmt::format("mode {} out of range for tensor of order {}", mode, t.order()));
  }
  if (static_cast<std::size_t>(m.cols()) != t.dim(mode)) {
    throw ShapeError(fmt::format("mode {}: matrix has {} columns but tensor dimension is {}", mode,
                                 m.cols(), t.dim(mode)));
  }
  const auto s = split_at(t.shape(), mode);
  Shape out_shape = t.shape();
  out_shape[mode] = static_cast<std::size_t>(m.rows());
  DenseTensor out(out_shape);
  const auto src = t.data();
  auto dst = out.data();
  const std::size_t rows = out_shape[mode];
  for (std::size_t o = 0; o < s.outer; ++o) {
    // Slab (dim x inner) -> (rows x inner)
    Eigen::Map<const RowMatrix> in(src.data() + o * s.dim * s.inner, s.dim, s.inner);
    Eigen::Map<RowMatrix> res(dst.data() + o * rows * s.inner, rows, s.inner);
    res.noalias() = m * in;
  }
  return out;
}

DenseTensor mode_n_vector_product(const DenseTensor& t, const Vector& v, std::size_t mode) {
  DenseTensor y = mode_n_product(t, v.transpose(), mode);
  Shape shape = y.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(mode));
  if (shape.empty()) shape.push_back(1);
  return y.reshaped(std::move(shape));
}

DenseTensor matricize(const DenseTensor& t, const Grouping& grouping) {
  std::size_t total = 0;
  for (auto g : grouping.group_sizes) {
    if (g == 0) throw ShapeError("grouping contains an empty group");
    total += g;
  }
  if (total != t.order()) {
    throw ShapeError(fmt::format("grouping {} sums to {} but tensor has order {}",
                                 grouping.group_sizes, total, t.order()));
  }
  Shape shape;
  std::size_t mode = 0;
  for (auto g : grouping.group_sizes) {
    std::size_t dim = 1;
    for (std::size_t i = 0; i < g; ++i) dim *= t.dim(mode++);
    shape.push_back(dim);
  }
  return t.reshaped(std::move(shape));
}

DenseTensor unmatricize(const DenseTensor& grouped, const Shape& original) {
  return grouped.reshaped(original);
}

TTTrain::TTTrain(std::vector<DenseTensor> cores, std::optional<Vector> left,
                 std::optional<Matrix> output)
    : cores_(std::move(cores)), left_(std::move(left)), output_(std::move(output)) {
  if (left_) {
    rank_ = static_cast<std::size_t>(left_->size());
  } else if (!cores_.empty()) {
    if (cores_.front().order() != 2) {
      throw ShapeError("first core of a train without left boundary must be (d, k)");
    }
    rank_ = cores_.front().dim(1);
    mode_dim_ = cores_.front().dim(0);
  } else {
    throw ShapeError("tensor train needs a left boundary or at least one core");
  }
  for (std::size_t i = 0; i < cores_.size(); ++i) {
    const auto& c = cores_[i];
    if (i == 0 && !left_) continue;
    if (c.order() != 3 || c.dim(0) != rank_ || c.dim(2) != rank_) {
      throw ShapeError(fmt::format("core {} has shape {}, expected ({}, d, {})", i, c.shape(),
                                   rank_, rank_));
    }
    if (mode_dim_ == 0) mode_dim_ = c.dim(1);
    if (c.dim(1) != mode_dim_) {
      throw ShapeError(
          fmt::format("core {} has mode dimension {}, expected {}", i, c.dim(1), mode_dim_));
    }
  }
  if (output_ && static_cast<std::size_t>(output_->rows()) != rank_) {
    throw ShapeError(fmt::format("output core has {} rows, expected rank {}", output_->rows(),
                                 rank_));
  }
}

std::size_t TTTrain::output_dim() const {
  return output_ ? static_cast<std::size_t>(output_->cols()) : rank_;
}

Vector tt_contract_prefix(const TTTrain& tt, std::span<const Vector> features) {
  if (features.size() > tt.num_mode_cores()) {
    throw ShapeError(fmt::format("{} features for a train with {} mode cores", features.size(),
                                 tt.num_mode_cores()));
  }
  const auto k = static_cast<Eigen::Index>(tt.rank());
  const auto d = static_cast<Eigen::Index>(tt.mode_dim());
  Vector h;
  std::size_t next = 0;
  if (tt.left()) {
    h = *tt.left();
  } else if (!features.empty()) {
    if (features[0].size() != d) {
      throw ShapeError(fmt::format("feature 0 has length {}, expected {}", features[0].size(), d));
    }
    const auto& g = tt.cores()[0];
    h = Eigen::Map<const RowMatrix>(g.data().data(), d, k).transpose() * features[0];
    next = 1;
  } else {
    throw ShapeError("empty prefix of a train without left boundary has no state");
  }
  for (; next < features.size(); ++next) {
    const auto& x = features[next];
    if (x.size() != d) {
      throw ShapeError(fmt::format("feature {} has length {}, expected {}", next, x.size(), d));
    }
    // core (k, d, k) viewed as k x (d k)
    Eigen::Map<const RowMatrix> g(tt.cores()[next].data().data(), k, d * k);
    const Vector row = g.transpose() * h;  // (d k)
    h = Eigen::Map<const RowMatrix>(row.data(), d, k).transpose() * x;
  }
  return h;
}

Vector tt_contract_features(const TTTrain& tt, std::span<const Vector> features) {
  if (features.size() != tt.num_mode_cores()) {
    throw ShapeError(fmt::format("{} features for a train with {} mode cores", features.size(),
                                 tt.num_mode_cores()));
  }
  Vector h = tt_contract_prefix(tt, features);
  if (tt.output()) return tt.output()->transpose() * h;
  return h;
}

DenseTensor tt_to_dense(const TTTrain& tt, std::size_t max_entries) {
  const std::size_t d = tt.mode_dim();
  const std::size_t n = tt.num_mode_cores();
  std::size_t total = tt.output_dim();
  for (std::size_t i = 0; i < n; ++i) {
    total *= d;
    if (total > max_entries) {
      throw ResourceError(
          fmt::format("dense expansion exceeds the cap of {} entries", max_entries));
    }
  }
  const auto k = static_cast<Eigen::Index>(tt.rank());
  // rows: prefixes enumerated row-major, cols: bond index
  RowMatrix prefix;
  std::size_t next = 0;
  if (tt.left()) {
    prefix = tt.left()->transpose();
  } else {
    prefix = tt.cores()[0].to_matrix();
    next = 1;
  }
  for (; next < n; ++next) {
    Eigen::Map<const RowMatrix> g(tt.cores()[next].data().data(), k,
                                  static_cast<Eigen::Index>(d) * k);
    RowMatrix grown = prefix * g;  // (P, d k) row-major == (P d, k)
    prefix = Eigen::Map<const RowMatrix>(grown.data(), grown.rows() * static_cast<Eigen::Index>(d), k);
  }
  if (tt.output()) prefix = prefix * *tt.output();
  Shape shape(n, d);
  shape.push_back(tt.output_dim());
  std::vector<double> data(prefix.data(), prefix.data() + prefix.size());
  return DenseTensor(std::move(shape), std::move(data));
}

RankFactorization rank_factorize(const Matrix& m, std::size_t rank, double pinv_rtol,
                                 SplitConvention split) {
  const auto min_dim = static_cast<std::size_t>(std::min(m.rows(), m.cols()));
  if (rank < 1 || rank > min_dim) {
    throw ArgumentError(fmt::format("target rank {} outside [1, {}] for a {}x{} matrix", rank,
                                    min_dim, m.rows(), m.cols()));
  }
  if (!m.allFinite()) throw NumericalError("rank_factorize: matrix has non-finite entries");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("singular value decomposition failed");
  const auto r = static_cast<Eigen::Index>(rank);
  const Vector& sv = svd.singularValues();
  RankFactorization f;
  f.singular_values = sv;
  const double cutoff = sv.size() > 0 ? pinv_rtol * sv(0) : 0.0;
  Vector inv = Vector::Zero(r);
  for (Eigen::Index i = 0; i < r; ++i) {
    if (sv(i) > cutoff) inv(i) = 1.0 / sv(i);
  }
  for (Eigen::Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > cutoff) ++f.numerical_rank;
  }
  const auto u = svd.matrixU().leftCols(r);
  const auto v = svd.matrixV().leftCols(r);
  if (split == SplitConvention::kScaleLeft) {
    f.p = u * sv.head(r).asDiagonal();
    f.s = v.transpose();
    f.p_pinv = inv.asDiagonal() * u.transpose();
    f.s_pinv = v;
  } else {
    f.p = u;
    f.s = sv.head(r).asDiagonal() * v.transpose();
    f.p_pinv = u.transpose();
    f.s_pinv = v * inv.asDiagonal();
  }
  f.residual = (m - f.p * f.s).norm();
  return f;
}

Matrix pseudo_inverse(const Matrix& m, double rtol) {
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericalError("singular value decomposition failed");
  const Vector& sv = svd.singularValues();
  const double cutoff = sv.size() > 0 ? rtol * sv(0) : 0.0;
  Vector inv = sv.unaryExpr([cutoff](double s) { return s > cutoff ? 1.0 / s : 0.0; });
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

}  // namespace ncwfa
