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

#include "ncwfa/spectral.hpp"

#include <fmt/format.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

void HankelSet::validate() const {
  if (length == 0) throw ArgumentError("Hankel basis length must be at least 1");
  if (h_l.num_mode_cores() != length || h_2l.num_mode_cores() != 2 * length ||
      h_2l1.num_mode_cores() != 2 * length + 1) {
    throw ShapeError(fmt::format("Hankel trains have {}, {}, {} mode cores; expected {}, {}, {}",
                                 h_l.num_mode_cores(), h_2l.num_mode_cores(),
                                 h_2l1.num_mode_cores(), length, 2 * length, 2 * length + 1));
  }
  if (h_l.mode_dim() != h_2l.mode_dim() || h_l.mode_dim() != h_2l1.mode_dim()) {
    throw ShapeError("Hankel trains disagree in mode dimension");
  }
  if (h_l.output_dim() != h_2l.output_dim() || h_l.output_dim() != h_2l1.output_dim()) {
    throw ShapeError("Hankel trains disagree in output dimension");
  }
}

namespace {

TTTrain state_hankel(const Vector& alpha, const DenseTensor& transition, std::size_t length,
                     std::optional<Matrix> output) {
  if (length == 0) throw ArgumentError("Hankel length must be at least 1");
  std::vector<DenseTensor> cores;
  cores.push_back(mode_n_vector_product(transition, alpha, 0));
  for (std::size_t j = 1; j < length; ++j) cores.push_back(transition);
  return TTTrain(std::move(cores), std::nullopt, std::move(output));
}

}  // namespace

TTTrain hankel_from_linear_cwfa(const LinearCwfa& cwfa, std::size_t length) {
  cwfa.validate();
  return state_hankel(cwfa.alpha, cwfa.transition, length, cwfa.omega);
}

TTTrain hankel_from_model(const RnadeNcwfa& model, std::size_t length) {
  model.validate();
  return state_hankel(model.alpha, model.transition, length, model.out_map);
}

RecoveredOperators recover_operators(const HankelSet& h, const SpectralOptions& opts) {
  h.validate();
  const std::size_t L = h.length;
  const std::size_t d = h.h_l.mode_dim();
  const std::size_t p = h.h_l.output_dim();
  std::size_t prefix = 1;
  for (std::size_t i = 0; i < L; ++i) prefix *= d;
  const std::size_t suffix = prefix * p;
  if (prefix * d * suffix > opts.max_unfolding_entries) {
    throw ResourceError(fmt::format("Hankel unfolding of {} entries exceeds the cap of {}",
                                    prefix * d * suffix, opts.max_unfolding_entries));
  }

  const Matrix h2 = matricize(tt_to_dense(h.h_2l), Grouping{{L, L + 1}}).to_matrix();
  const auto f = rank_factorize(h2, opts.rank, opts.pinv_rtol, opts.split);

  RecoveredOperators out;
  out.report.rank = opts.rank;
  out.report.numerical_rank = f.numerical_rank;
  out.report.singular_values = f.singular_values;
  out.report.residual = f.residual;
  if (f.numerical_rank < opts.rank) {
    out.report.warnings.push_back(
        fmt::format("unfolding has numerical rank {} below the requested rank {}; "
                    "pseudoinverses are truncated",
                    f.numerical_rank, opts.rank));
  }

  const DenseTensor h1 = tt_to_dense(h.h_l);
  out.alpha = f.s_pinv.transpose() * matricize(h1, Grouping{{L + 1}}).to_vector();
  out.omega = f.p_pinv * matricize(h1, Grouping{{L, 1}}).to_matrix();

  const DenseTensor h3 = matricize(tt_to_dense(h.h_2l1), Grouping{{L, 1, L + 1}});
  const auto r = static_cast<Eigen::Index>(opts.rank);
  out.transition = DenseTensor({opts.rank, d, opts.rank});
  const auto data = h3.data();
  for (std::size_t i = 0; i < d; ++i) {
    Matrix slice(static_cast<Eigen::Index>(prefix), static_cast<Eigen::Index>(suffix));
    for (std::size_t a = 0; a < prefix; ++a)
      for (std::size_t b = 0; b < suffix; ++b)
        slice(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
            data[(a * d + i) * suffix + b];
    const Matrix ai = f.p_pinv * slice * f.s_pinv;
    for (Eigen::Index s = 0; s < r; ++s)
      for (Eigen::Index t = 0; t < r; ++t)
        out.transition.at({static_cast<std::size_t>(s), i, static_cast<std::size_t>(t)}) = ai(s, t);
  }
  if (!out.alpha.allFinite() || !out.omega.allFinite() || !out.transition.all_finite()) {
    throw NumericalError("spectral recovery produced non-finite parameters");
  }
  return out;
}

LinearRecovery recover_linear_cwfa(const HankelSet& h, std::size_t rank,
                                   const SpectralOptions& opts) {
  SpectralOptions o = opts;
  o.rank = rank;
  auto ops = recover_operators(h, o);
  LinearRecovery out{LinearCwfa{std::move(ops.alpha), std::move(ops.transition), std::move(ops.omega)},
                     std::move(ops.report)};
  return out;
}

RnadeNcwfa recover_density_model(const HankelSet& h, const FeatureMap& feature, const Head& head,
                                 const SpectralOptions& opts, SpectralReport* report) {
  auto ops = recover_operators(h, opts);
  RnadeNcwfa model{std::move(ops.alpha), std::move(ops.transition), feature, head,
                   std::move(ops.omega)};
  model.validate();
  if (report) *report = std::move(ops.report);
  return model;
}

void complete_trailing_cores(HankelModel& model) {
  ParamGraph& g = model.params;
  const std::size_t L = model.hankel_length;
  const std::size_t longest = 2 * L + 1;
  auto copy = [&g](const std::string& from, const std::string& to) {
    g[to].value = g[from].value;
  };
  if (!model.tied) {
    copy(model.core_name(longest, L), model.core_name(L, L));
    copy(model.core_name(longest, 2 * L), model.core_name(2 * L, 2 * L));
  }
  copy(model.core_name(longest, 2 * L), model.core_name(longest, longest));
}

HankelSet hankel_set_from_model(const HankelModel& model) {
  const ParamGraph& g = model.params;
  auto train = [&](std::size_t length) {
    std::vector<DenseTensor> cores;
    for (std::size_t j = 1; j <= length; ++j) {
      const Param& p = g[model.core_name(length, j)];
      cores.emplace_back(p.shape, std::vector<double>(p.value.data(), p.value.data() + p.value.size()));
    }
    return TTTrain(std::move(cores));
  };
  const std::size_t L = model.hankel_length;
  return HankelSet{train(L), train(2 * L), train(2 * L + 1), L};
}

SpectralFit spectral_learn(const Dataset& d_l, const Dataset& d_2l, const Dataset& d_2l1,
                           const TrainConfig& cfg, const SpectralOptions& opts) {
  if (d_l.empty() || d_l.front().empty()) throw ArgumentError("empty length-L dataset");
  const std::size_t dp = cfg.feature_dim != 0 ? cfg.feature_dim
                                              : static_cast<std::size_t>(d_l.front().front().size());
  std::size_t prefix = 1;
  for (std::size_t i = 0; i < cfg.hankel_length; ++i) prefix *= dp;
  if (prefix * cfg.states > opts.max_unfolding_entries) {
    throw ResourceError(fmt::format("d'^L * k = {} exceeds the cap of {}", prefix * cfg.states,
                                    opts.max_unfolding_entries));
  }
  SpectralOptions o = opts;
  if (o.rank == 0) o.rank = cfg.rank != 0 ? cfg.rank : cfg.states;
  std::vector<std::string> notes;
  if (o.rank > prefix) {
    notes.push_back(
        fmt::format("rank {} exceeds the {} unfolding rows; using {}", o.rank, prefix, prefix));
    o.rank = prefix;
  }

  HankelFit fit = fit_hankel(d_l, d_2l, d_2l1, cfg);
  HankelModel trained = fit.model;
  complete_trailing_cores(trained);
  const HankelSet set = hankel_set_from_model(trained);
  SpectralFit out{RnadeNcwfa{}, std::move(fit), {}};
  out.model = recover_density_model(set, TanhFeature{feature_weights(trained.params)},
                                    head_from_params(trained.params), o, &out.report);
  out.report.warnings.insert(out.report.warnings.begin(), notes.begin(), notes.end());
  return out;
}

}  // namespace ncwfa
