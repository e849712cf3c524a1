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

#include "ncwfa/ghmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

namespace {

constexpr double kSimplexTol = 1e-12;

void check_simplex(const Vector& v, const char* what) {
  if ((v.array() < 0.0).any()) throw DomainError(fmt::format("{} has negative entries", what));
  if (std::abs(v.sum() - 1.0) > kSimplexTol) {
    throw DomainError(fmt::format("{} sums to {:.17g}, not 1", what, v.sum()));
  }
}

void check_sequence(const GaussianHmm& hmm, std::span<const Vector> seq) {
  if (seq.empty()) throw ArgumentError("empty observation sequence");
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (static_cast<std::size_t>(seq[t].size()) != hmm.obs_dim()) {
      throw ShapeError(fmt::format("observation {} has dimension {}, model expects {}", t,
                                   seq[t].size(), hmm.obs_dim()));
    }
  }
}

// Per-state emission log densities for one observation.
Vector emission_logs(const GaussianHmm& hmm, const Vector& x) {
  Vector out(static_cast<Eigen::Index>(hmm.num_states()));
  for (std::size_t j = 0; j < hmm.num_states(); ++j) {
    out(static_cast<Eigen::Index>(j)) = log_density_full(x, hmm.emissions[j]);
  }
  return out;
}

std::size_t draw_index(const Vector& probs, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double r = u(rng);
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    r -= probs(i);
    if (r < 0.0) return static_cast<std::size_t>(i);
  }
  // rounding slack: last state with nonzero mass
  for (Eigen::Index i = probs.size() - 1; i >= 0; --i) {
    if (probs(i) > 0.0) return static_cast<std::size_t>(i);
  }
  return 0;
}

Vector draw_gaussian(const FullGaussian& g, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector z(static_cast<Eigen::Index>(g.dim()));
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n(rng);
  return g.mean() + g.cholesky().matrixL() * z;
}

}  // namespace

void GaussianHmm::validate() const {
  const auto k = init.size();
  if (k == 0) throw ShapeError("HMM needs at least one state");
  if (trans.rows() != k || trans.cols() != k) {
    throw ShapeError(fmt::format("transition matrix is {}x{} for {} states", trans.rows(),
                                 trans.cols(), k));
  }
  if (static_cast<Eigen::Index>(emissions.size()) != k) {
    throw ShapeError(fmt::format("{} emissions for {} states", emissions.size(), k));
  }
  check_simplex(init, "initial distribution");
  for (Eigen::Index i = 0; i < k; ++i) {
    check_simplex(trans.row(i).transpose(), "transition row");
  }
  for (const auto& e : emissions) {
    if (e.dim() != obs_dim()) throw ShapeError("emissions disagree in dimension");
  }
}

SampledSequence sample(const GaussianHmm& hmm, std::size_t length, Rng& rng) {
  if (length == 0) throw ArgumentError("sample length must be at least 1");
  SampledSequence out;
  out.observations.reserve(length);
  out.states.reserve(length);
  std::size_t s = draw_index(hmm.init, rng);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) s = draw_index(hmm.trans.row(static_cast<Eigen::Index>(s)).transpose(), rng);
    out.states.push_back(s);
    out.observations.push_back(draw_gaussian(hmm.emissions[s], rng));
  }
  return out;
}

double log_density_forward(const GaussianHmm& hmm, std::span<const Vector> seq) {
  check_sequence(hmm, seq);
  double ll = 0.0;
  Vector alpha;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    const Vector logs = emission_logs(hmm, seq[t]);
    const double mx = logs.maxCoeff();
    const Vector prior = t == 0 ? hmm.init : Vector(hmm.trans.transpose() * alpha);
    const Vector a = prior.array() * (logs.array() - mx).exp();
    const double c = a.sum();
    if (!(c > 0.0)) return -std::numeric_limits<double>::infinity();
    ll += std::log(c) + mx;
    alpha = a / c;
  }
  return ll;
}

double log_density_factored(const GaussianHmm& hmm, std::span<const Vector> seq) {
  check_sequence(hmm, seq);
  double ll = 0.0;
  Vector w = hmm.init;
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (t > 0) w = hmm.trans.transpose() * w;
    const Vector terms = w.array().log() + emission_logs(hmm, seq[t]).array();
    ll += log_sum_exp(terms);
  }
  return ll;
}

double shifting_hmm_log_density(std::span<const double> seq) {
  double ll = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const double diff = seq[i] - static_cast<double>(i + 1);
    ll += -0.5 * kLogTwoPi - 0.5 * diff * diff;
  }
  return ll;
}

Vector sample_dirichlet_flat(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  Vector v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = e(rng);
  v /= v.sum();
  // Renormalize so the simplex check holds to the last ulp.
  v(v.size() - 1) = 1.0 - v.head(v.size() - 1).sum();
  return v;
}

GaussianHmm random_hmm(std::size_t num_states, std::size_t obs_dim, Rng& rng) {
  GaussianHmm hmm;
  const auto k = static_cast<Eigen::Index>(num_states);
  const auto d = static_cast<Eigen::Index>(obs_dim);
  hmm.init = sample_dirichlet_flat(num_states, rng);
  hmm.trans.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) hmm.trans.row(i) = sample_dirichlet_flat(num_states, rng);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  for (Eigen::Index j = 0; j < k; ++j) {
    Vector mean(d);
    for (Eigen::Index i = 0; i < d; ++i) mean(i) = 2.0 * n(rng);
    Vector var(d);
    for (Eigen::Index i = 0; i < d; ++i) var(i) = u(rng);
    hmm.emissions.emplace_back(std::move(mean), Matrix(var.asDiagonal()));
  }
  return hmm;
}

// ---------------------------------------------------------------------------
// EM

namespace {

struct Stats {
  Vector init;
  Matrix trans;    // expected transition counts
  Vector weight;   // sum of posteriors per state
  Matrix sum_x;    // d x k
  std::vector<Matrix> sum_xx;
  double loglik = 0.0;

  Stats(Eigen::Index k, Eigen::Index d)
      : init(Vector::Zero(k)),
        trans(Matrix::Zero(k, k)),
        weight(Vector::Zero(k)),
        sum_x(Matrix::Zero(d, k)),
        sum_xx(static_cast<std::size_t>(k), Matrix::Zero(d, d)) {}
};

void accumulate(const GaussianHmm& hmm, const Sequence& seq, Stats& st) {
  const auto k = static_cast<Eigen::Index>(hmm.num_states());
  const auto n = static_cast<Eigen::Index>(seq.size());
  Matrix emis(n, k);  // scaled emission likelihoods
  Vector shift(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vector logs = emission_logs(hmm, seq[static_cast<std::size_t>(t)]);
    shift(t) = logs.maxCoeff();
    emis.row(t) = (logs.array() - shift(t)).exp().transpose();
  }
  Matrix alpha(n, k);
  Vector scale(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    Vector a = t == 0 ? hmm.init : Vector(hmm.trans.transpose() * alpha.row(t - 1).transpose());
    a.array() *= emis.row(t).transpose().array();
    scale(t) = a.sum();
    if (!(scale(t) > 0.0)) throw NumericalError("EM forward pass underflowed");
    alpha.row(t) = a.transpose() / scale(t);
  }
  Matrix beta(n, k);
  beta.row(n - 1).setOnes();
  for (Eigen::Index t = n - 2; t >= 0; --t) {
    const Vector b = emis.row(t + 1).transpose().cwiseProduct(beta.row(t + 1).transpose());
    beta.row(t) = (hmm.trans * b).transpose() / scale(t + 1);
  }
  st.loglik += scale.array().log().sum() + shift.sum();
  for (Eigen::Index t = 0; t < n; ++t) {
    const Vector gamma = alpha.row(t).transpose().cwiseProduct(beta.row(t).transpose());
    const Vector& x = seq[static_cast<std::size_t>(t)];
    if (t == 0) st.init += gamma;
    st.weight += gamma;
    st.sum_x += x * gamma.transpose();
    for (Eigen::Index j = 0; j < k; ++j) st.sum_xx[static_cast<std::size_t>(j)] += gamma(j) * x * x.transpose();
    if (t + 1 < n) {
      const Vector b = emis.row(t + 1).transpose().cwiseProduct(beta.row(t + 1).transpose());
      st.trans += (alpha.row(t).transpose() * b.transpose()).cwiseProduct(hmm.trans) / scale(t + 1);
    }
  }
}

double dataset_loglik(const GaussianHmm& hmm, const Dataset& data) {
  double ll = 0.0;
  for (const auto& s : data) ll += log_density_forward(hmm, s);
  return ll;
}

GaussianHmm kmeanspp_init(const Dataset& data, std::size_t num_states, double cov_reg, Rng& rng) {
  std::vector<const Vector*> points;
  for (const auto& s : data)
    for (const auto& x : s) points.push_back(&x);
  const auto d = points.front()->size();
  const auto k = static_cast<Eigen::Index>(num_states);

  Vector pooled_mean = Vector::Zero(d);
  for (const auto* p : points) pooled_mean += *p;
  pooled_mean /= static_cast<double>(points.size());
  Matrix pooled_cov = Matrix::Zero(d, d);
  for (const auto* p : points) pooled_cov += (*p - pooled_mean) * (*p - pooled_mean).transpose();
  pooled_cov /= static_cast<double>(points.size());
  pooled_cov.diagonal().array() += cov_reg;

  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  std::vector<Vector> centers{*points[pick(rng)]};
  std::vector<double> dist(points.size());
  while (static_cast<Eigen::Index>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, (*points[i] - c).squaredNorm());
      dist[i] = best;
      total += best;
    }
    if (!(total > 0.0)) {
      centers.push_back(*points[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double r = u(rng);
    std::size_t chosen = points.size() - 1;
    for (std::size_t i = 0; i < points.size(); ++i) {
      r -= dist[i];
      if (r < 0.0) {
        chosen = i;
        break;
      }
    }
    centers.push_back(*points[chosen]);
  }

  // A few Lloyd iterations to settle the seeds.
  std::vector<std::size_t> assign(points.size(), 0);
  for (int it = 0; it < 5; ++it) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const double dd = (*points[i] - centers[c]).squaredNorm();
        if (dd < best) {
          best = dd;
          assign[i] = c;
        }
      }
    }
    std::vector<Vector> sums(centers.size(), Vector::Zero(d));
    std::vector<std::size_t> counts(centers.size(), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      sums[assign[i]] += *points[i];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] > 0) centers[c] = sums[c] / static_cast<double>(counts[c]);
    }
  }

  GaussianHmm hmm;
  hmm.init = Vector::Constant(k, 1.0 / static_cast<double>(k));
  hmm.trans = Matrix::Constant(k, k, 1.0 / static_cast<double>(k));
  for (std::size_t c = 0; c < centers.size(); ++c) {
    Matrix cov = Matrix::Zero(d, d);
    std::size_t count = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (assign[i] != c) continue;
      cov += (*points[i] - centers[c]) * (*points[i] - centers[c]).transpose();
      ++count;
    }
    if (count > static_cast<std::size_t>(d)) {
      cov /= static_cast<double>(count);
      cov.diagonal().array() += cov_reg;
    } else {
      cov = pooled_cov;
    }
    hmm.emissions.emplace_back(centers[c], cov);
  }
  return hmm;
}

struct RestartOutcome {
  GaussianHmm model;
  std::vector<double> trace;
  std::size_t reseeded = 0;
};

RestartOutcome run_em(const Dataset& data, std::size_t num_states, const EmConfig& cfg, Rng& rng) {
  RestartOutcome out{kmeanspp_init(data, num_states, cfg.cov_reg, rng), {}, 0};
  const auto k = static_cast<Eigen::Index>(num_states);
  const auto d = static_cast<Eigen::Index>(data.front().front().size());
  std::size_t total_obs = 0;
  for (const auto& s : data) total_obs += s.size();
  std::uniform_int_distribution<std::size_t> pick_seq(0, data.size() - 1);

  for (std::size_t iter = 0; iter < cfg.max_iters; ++iter) {
    Stats st(k, d);
    for (const auto& s : data) accumulate(out.model, s, st);
    out.trace.push_back(st.loglik);
    if (out.trace.size() >= 2) {
      const double prev = out.trace[out.trace.size() - 2];
      if (st.loglik - prev < cfg.tol * std::abs(prev)) break;
    }

    GaussianHmm next;
    next.init = st.init / st.init.sum();
    next.trans.resize(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      const double row = st.trans.row(i).sum();
      if (row > 0.0) {
        next.trans.row(i) = st.trans.row(i) / row;
      } else {
        next.trans.row(i) = out.model.trans.row(i);
      }
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      const double w = st.weight(j);
      const auto ju = static_cast<std::size_t>(j);
      // Degenerate state: re-seed its emission from a random observation.
      if (w < 1e-8 * static_cast<double>(total_obs) || w < 1e-10) {
        const auto& s = data[pick_seq(rng)];
        std::uniform_int_distribution<std::size_t> pick_t(0, s.size() - 1);
        next.emissions.emplace_back(s[pick_t(rng)], out.model.emissions[ju].cov());
        ++out.reseeded;
        continue;
      }
      const Vector mean = st.sum_x.col(j) / w;
      Matrix cov = st.sum_xx[ju] / w - mean * mean.transpose();
      cov = 0.5 * (cov + cov.transpose());
      cov.diagonal().array() += cfg.cov_reg;
      next.emissions.emplace_back(mean, cov);
    }
    out.model = std::move(next);
  }
  // Trace ends with the likelihood of the returned parameters.
  const double final_ll = dataset_loglik(out.model, data);
  if (out.trace.empty() || final_ll != out.trace.back()) out.trace.push_back(final_ll);
  return out;
}

}  // namespace

EmResult em_fit(const Dataset& data, std::size_t num_states, const EmConfig& cfg) {
  if (data.empty()) throw ArgumentError("em_fit on an empty dataset");
  if (num_states == 0) throw ArgumentError("em_fit needs at least one state");
  if (cfg.max_iters == 0 || !(cfg.tol > 0.0)) throw ArgumentError("invalid EM configuration");
  EmResult result;
  double best = -std::numeric_limits<double>::infinity();
  const std::size_t restarts = std::max<std::size_t>(1, cfg.restarts);
  for (std::size_t r = 0; r < restarts; ++r) {
    Rng rng(cfg.seed * 1000003ULL + r);
    RestartOutcome o = run_em(data, num_states, cfg, rng);
    result.restart_traces.push_back(o.trace);
    result.reseeded_states += o.reseeded;
    if (o.trace.back() > best || r == 0) {
      best = o.trace.back();
      result.model = std::move(o.model);
      result.trace = o.trace;
    }
  }
  return result;
}

}  // namespace ncwfa
