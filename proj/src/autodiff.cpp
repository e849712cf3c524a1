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

#include "ncwfa/autodiff.hpp"

#include <cmath>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"
#include "ncwfa/kernels.hpp"
#include "ncwfa/prob.hpp"

namespace ncwfa {

std::size_t ParamGraph::add(std::string name, Shape shape, Matrix value) {
  if (by_name_.contains(name)) throw ArgumentError(fmt::format("duplicate parameter '{}'", name));
  if (shape_product(shape) != static_cast<std::size_t>(value.size())) {
    throw ShapeError(fmt::format("parameter '{}' has {} values for shape ({})", name, value.size(),
                                 fmt::join(shape, ", ")));
  }
  const std::size_t id = params_.size();
  by_name_.emplace(name, id);
  Matrix grad = Matrix::Zero(value.rows(), value.cols());
  params_.push_back(Param{std::move(name), std::move(shape), std::move(value), std::move(grad)});
  return id;
}

std::size_t ParamGraph::index(const std::string& name) const {
  const auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ArgumentError(fmt::format("unknown parameter '{}'", name));
  return it->second;
}

void ParamGraph::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

bool ParamGraph::all_finite() const {
  for (const auto& p : params_) {
    if (!p.value.allFinite()) return false;
  }
  return true;
}

namespace {

Eigen::Map<const Vector> cflat(const Matrix& m) { return {m.data(), m.size()}; }
Eigen::Map<Vector> flat(Matrix& m) { return {m.data(), m.size()}; }

}  // namespace

Tape::Node Tape::push(NodeData n) {
  n.grad = Vector::Zero(n.value.size());
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Tape::Node Tape::constant(Vector v) { return push(NodeData{Op::kConstant, std::move(v)}); }

Tape::Node Tape::param(std::size_t pid) {
  NodeData n{Op::kParam, cflat((*params_)[pid].value)};
  n.pid0 = pid;
  return push(std::move(n));
}

Tape::Node Tape::tanh_feature(std::size_t w_pid, const Vector& x) {
  const Matrix& w = (*params_)[w_pid].value;
  if (x.size() != w.rows()) {
    throw ShapeError(fmt::format("input has length {}, feature map expects {}", x.size(), w.rows()));
  }
  NodeData n{Op::kTanhFeature, kernels::tanh_feature(w, x)};
  n.pid0 = w_pid;
  n.aux = x;
  return push(std::move(n));
}

Tape::Node Tape::first_core(std::size_t g_pid, Node phi) {
  const Param& g = (*params_)[g_pid];
  const auto d = static_cast<Eigen::Index>(g.shape.at(0));
  const auto k = static_cast<Eigen::Index>(g.shape.at(1));
  NodeData n{Op::kFirstCore, kernels::first_core(g.value.data(), d, k, nodes_[phi].value)};
  n.pid0 = g_pid;
  n.in0 = phi;
  return push(std::move(n));
}

Tape::Node Tape::bilinear(std::size_t a_pid, Node h, Node phi) {
  const Param& a = (*params_)[a_pid];
  const auto r = static_cast<Eigen::Index>(a.shape.at(0));
  const auto dp = static_cast<Eigen::Index>(a.shape.at(1));
  const auto r_out = static_cast<Eigen::Index>(a.shape.at(2));
  if (nodes_[h].value.size() != r || nodes_[phi].value.size() != dp) {
    throw ShapeError(fmt::format("bilinear step on '{}' received state {} and feature {}", a.name,
                                 nodes_[h].value.size(), nodes_[phi].value.size()));
  }
  NodeData n{Op::kBilinear,
             kernels::bilinear(a.value.data(), r, dp, r_out, nodes_[h].value, nodes_[phi].value)};
  n.pid0 = a_pid;
  n.in0 = h;
  n.in1 = phi;
  return push(std::move(n));
}

Tape::Node Tape::affine(std::size_t v_pid, std::size_t b_pid, Node h, bool transpose) {
  const Matrix& v = (*params_)[v_pid].value;
  const auto b = cflat((*params_)[b_pid].value);
  NodeData n{transpose ? Op::kAffineT : Op::kAffine,
             transpose ? kernels::affine_t(v, b, nodes_[h].value)
                       : kernels::affine(v, b, nodes_[h].value)};
  n.pid0 = v_pid;
  n.pid1 = b_pid;
  n.in0 = h;
  return push(std::move(n));
}

Tape::Node Tape::const_matvec_t(const Matrix& m, Node h) {
  NodeData n{Op::kConstMatvecT, m.transpose() * nodes_[h].value};
  n.mat = &m;
  n.in0 = h;
  return push(std::move(n));
}

Tape::Node Tape::log_softmax(Node z) {
  NodeData n{Op::kLogSoftmax, kernels::log_softmax(nodes_[z].value)};
  n.in0 = z;
  return push(std::move(n));
}

Tape::Node Tape::exp_floor(Node z, double floor) {
  NodeData n{Op::kExpFloor, kernels::exp_floor(nodes_[z].value, floor)};
  n.in0 = z;
  n.floor = floor;
  return push(std::move(n));
}

Tape::Node Tape::mixture_logpdf(Node log_weights, Node means, Node vars, const Vector& x) {
  const Vector terms =
      kernels::mixture_terms(nodes_[log_weights].value, nodes_[means].value, nodes_[vars].value, x);
  Vector out(1);
  out(0) = log_sum_exp(terms);
  NodeData n{Op::kMixture, std::move(out)};
  n.in0 = log_weights;
  n.in1 = means;
  n.in2 = vars;
  // Responsibilities followed by the observation.
  n.aux.resize(terms.size() + x.size());
  n.aux.head(terms.size()) = (terms.array() - n.value(0)).exp();
  n.aux.tail(x.size()) = x;
  return push(std::move(n));
}

void Tape::backward(const std::vector<std::pair<Node, double>>& seeds) {
  for (const auto& [node, g] : seeds) nodes_[node].grad(0) += g;
  for (std::size_t idx = nodes_.size(); idx-- > 0;) {
    NodeData& n = nodes_[idx];
    const Vector& g = n.grad;
    if (n.op == Op::kConstant || g.isZero(0.0)) continue;
    switch (n.op) {
      case Op::kConstant:
        break;
      case Op::kParam:
        flat((*params_)[n.pid0].grad) += g;
        break;
      case Op::kTanhFeature: {
        const Vector dpre = g.array() * (1.0 - n.value.array().square());
        (*params_)[n.pid0].grad.noalias() += n.aux * dpre.transpose();
        break;
      }
      case Op::kFirstCore: {
        Param& p = (*params_)[n.pid0];
        const auto d = static_cast<Eigen::Index>(p.shape[0]);
        const auto k = static_cast<Eigen::Index>(p.shape[1]);
        Eigen::Map<RowMatrix> dg(p.grad.data(), d, k);
        const Vector& phi = nodes_[n.in0].value;
        dg.noalias() += phi * g.transpose();
        nodes_[n.in0].grad.noalias() += Eigen::Map<const RowMatrix>(p.value.data(), d, k) * g;
        break;
      }
      case Op::kBilinear: {
        Param& p = (*params_)[n.pid0];
        const auto r = static_cast<Eigen::Index>(p.shape[0]);
        const auto dp = static_cast<Eigen::Index>(p.shape[1]);
        const auto r_out = static_cast<Eigen::Index>(p.shape[2]);
        const Vector& h = nodes_[n.in0].value;
        const Vector& phi = nodes_[n.in1].value;
        Eigen::Map<const RowMatrix> a(p.value.data(), r * dp, r_out);
        Eigen::Map<RowMatrix> da(p.grad.data(), r * dp, r_out);
        // (h kron phi) g^T
        Vector hp(r * dp);
        for (Eigen::Index i = 0; i < r; ++i) hp.segment(i * dp, dp) = h(i) * phi;
        da.noalias() += hp * g.transpose();
        const Vector ag = a * g;  // (r dp), indexed (i, j)
        const Eigen::Map<const RowMatrix> agm(ag.data(), r, dp);
        nodes_[n.in0].grad.noalias() += agm * phi;
        nodes_[n.in1].grad.noalias() += agm.transpose() * h;
        break;
      }
      case Op::kAffine: {
        Param& v = (*params_)[n.pid0];
        const Vector& h = nodes_[n.in0].value;
        v.grad.noalias() += g * h.transpose();
        flat((*params_)[n.pid1].grad) += g;
        nodes_[n.in0].grad.noalias() += v.value.transpose() * g;
        break;
      }
      case Op::kAffineT: {
        Param& v = (*params_)[n.pid0];
        const Vector& h = nodes_[n.in0].value;
        v.grad.noalias() += h * g.transpose();
        flat((*params_)[n.pid1].grad) += g;
        nodes_[n.in0].grad.noalias() += v.value * g;
        break;
      }
      case Op::kConstMatvecT:
        nodes_[n.in0].grad.noalias() += *n.mat * g;
        break;
      case Op::kLogSoftmax:
        nodes_[n.in0].grad += g - n.value.array().exp().matrix() * g.sum();
        break;
      case Op::kExpFloor: {
        const Vector& z = nodes_[n.in0].value;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
          const double e = std::exp(z(i));
          if (e > n.floor) nodes_[n.in0].grad(i) += g(i) * e;
        }
        break;
      }
      case Op::kMixture: {
        const Vector& means = nodes_[n.in1].value;
        const Vector& vars = nodes_[n.in2].value;
        const Eigen::Index m = nodes_[n.in0].value.size();
        const Eigen::Index d = means.size() / m;
        const auto resp = n.aux.head(m);
        const auto x = n.aux.tail(d);
        const double go = g(0);
        nodes_[n.in0].grad += go * resp;
        for (Eigen::Index j = 0; j < m; ++j) {
          for (Eigen::Index c = 0; c < d; ++c) {
            const Eigen::Index q = j * d + c;
            const double diff = x(c) - means(q);
            const double v = vars(q);
            nodes_[n.in1].grad(q) += go * resp(j) * diff / v;
            nodes_[n.in2].grad(q) += go * resp(j) * (diff * diff / (2.0 * v * v) - 0.5 / v);
          }
        }
        break;
      }
    }
  }
}

}  // namespace ncwfa
