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

// Minimal reverse-mode differentiation over the fixed operator set the
// density losses need. Nodes hold small dense vectors; parameters live in a
// ParamGraph and receive gradients directly during the backward sweep.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ncwfa/tensor.hpp"

namespace ncwfa {

struct Param {
  std::string name;
  Shape shape;   // logical shape, row-major
  Matrix value;  // rows x cols storage (vectors and tensors are n x 1)
  Matrix grad;
};

/// Named parameter tensors with gradient buffers of identical shape.
class ParamGraph {
 public:
  std::size_t add(std::string name, Shape shape, Matrix value);
  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.contains(name); }

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& operator[](const std::string& name) { return params_[index(name)]; }
  const Param& operator[](const std::string& name) const { return params_[index(name)]; }

  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  bool all_finite() const;

 private:
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> by_name_;
};

class Tape {
 public:
  using Node = std::size_t;

  explicit Tape(ParamGraph& params) : params_(&params) {}

  void clear() { nodes_.clear(); }
  const Vector& value(Node n) const { return nodes_[n].value; }
  double scalar(Node n) const { return nodes_[n].value(0); }

  Node constant(Vector v);
  /// Whole parameter as a vector (row-major flattening of its storage).
  Node param(std::size_t pid);
  /// tanh(W^T x); W is a (d, d') parameter, x a constant.
  Node tanh_feature(std::size_t w_pid, const Vector& x);
  /// G^T phi for a (d, k) first core.
  Node first_core(std::size_t g_pid, Node phi);
  /// A x1 h x2 phi for a (k, d', k) parameter.
  Node bilinear(std::size_t a_pid, Node h, Node phi);
  /// V h + b (transpose = false) or V^T h + b (transpose = true).
  Node affine(std::size_t v_pid, std::size_t b_pid, Node h, bool transpose);
  /// M^T h for a constant matrix.
  Node const_matvec_t(const Matrix& m, Node h);
  Node log_softmax(Node z);
  Node exp_floor(Node z, double floor);
  /// Scalar log-sum-exp of per-component diagonal Gaussian terms.
  Node mixture_logpdf(Node log_weights, Node means, Node vars, const Vector& x);

  /// Reverse sweep seeded with d(loss)/d(node) for scalar nodes.
  void backward(const std::vector<std::pair<Node, double>>& seeds);

 private:
  enum class Op {
    kConstant,
    kParam,
    kTanhFeature,
    kFirstCore,
    kBilinear,
    kAffine,
    kAffineT,
    kConstMatvecT,
    kLogSoftmax,
    kExpFloor,
    kMixture,
  };

  struct NodeData {
    NodeData(Op o, Vector v) : op(o), value(std::move(v)) {}

    Op op;
    Vector value;
    Vector grad;
    Node in0 = 0, in1 = 0, in2 = 0;
    std::size_t pid0 = 0, pid1 = 0;
    Vector aux;  // op-specific cached data
    double floor = 0.0;
    const Matrix* mat = nullptr;
  };

  Node push(NodeData n);

  ParamGraph* params_;
  std::vector<NodeData> nodes_;
};

}  // namespace ncwfa
