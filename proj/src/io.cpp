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

#include "ncwfa/io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "ncwfa/errors.hpp"

namespace ncwfa {

using nlohmann::json;

namespace {

json array_json(const Shape& shape, std::span<const double> data) {
  return json{{"shape", shape}, {"data", std::vector<double>(data.begin(), data.end())}};
}

json matrix_json(const Matrix& m) {
  const RowMatrix r = m;
  return array_json({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                    {r.data(), static_cast<std::size_t>(r.size())});
}

json vector_json(const Vector& v) {
  return array_json({static_cast<std::size_t>(v.size())}, {v.data(), static_cast<std::size_t>(v.size())});
}

DenseTensor tensor_from(const json& j) {
  try {
    return DenseTensor(j.at("shape").get<Shape>(), j.at("data").get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed array: {}", e.what()));
  }
}

Matrix matrix_from(const json& j) {
  const DenseTensor t = tensor_from(j);
  if (t.order() != 2) throw IoError("expected a matrix (two shape entries)");
  return t.to_matrix();
}

Vector vector_from(const json& j) {
  const DenseTensor t = tensor_from(j);
  if (t.order() != 1) throw IoError("expected a vector (one shape entry)");
  return t.to_vector();
}

json gaussian_json(const FullGaussian& g) {
  return json{{"mean", vector_json(g.mean())}, {"cov", matrix_json(g.cov())}};
}

FullGaussian gaussian_from(const json& j) {
  return FullGaussian(vector_from(j.at("mean")), matrix_from(j.at("cov")));
}

void check_format(const json& j, const char* expected) {
  const auto it = j.find("format");
  if (it == j.end() || !it->is_string() || it->get<std::string>() != expected) {
    throw IoError(fmt::format("expected format tag \"{}\"", expected));
  }
}

}  // namespace

json model_to_json(const RnadeNcwfa& model) {
  model.validate();
  json j;
  j["format"] = kModelFormat;
  j["alpha"] = vector_json(model.alpha);
  j["transition"] = array_json(model.transition.shape(), model.transition.data());
  if (const auto* f = std::get_if<TanhFeature>(&model.feature)) {
    j["feature"] = {{"type", "tanh"}, {"w", matrix_json(f->w)}};
  } else {
    const auto& c = std::get<ConstantFeature>(model.feature);
    j["feature"] = {{"type", "constant"}, {"value", vector_json(c.value)}, {"input_dim", c.input_dim}};
  }
  if (const auto* h = std::get_if<DiagHead>(&model.head)) {
    j["head"] = {{"type", "diag"},
                 {"num_mixtures", h->num_mixtures()},
                 {"obs_dim", h->obs_dim()},
                 {"v_beta", matrix_json(h->v_beta)},
                 {"b_beta", vector_json(h->b_beta)},
                 {"v_mu", matrix_json(h->v_mu)},
                 {"b_mu", vector_json(h->b_mu)},
                 {"v_sigma", matrix_json(h->v_sigma)},
                 {"b_sigma", vector_json(h->b_sigma)},
                 {"var_floor", h->var_floor}};
  } else {
    json comps = json::array();
    for (const auto& g : std::get<StateWeightedHead>(model.head).components)
      comps.push_back(gaussian_json(g));
    j["head"] = {{"type", "state-weighted"}, {"components", comps}};
  }
  j["out_map"] = model.out_map ? matrix_json(*model.out_map) : json(nullptr);
  return j;
}

RnadeNcwfa model_from_json(const json& j) {
  check_format(j, kModelFormat);
  try {
    RnadeNcwfa m;
    m.alpha = vector_from(j.at("alpha"));
    m.transition = tensor_from(j.at("transition"));
    const json& f = j.at("feature");
    const auto ftype = f.at("type").get<std::string>();
    if (ftype == "tanh") {
      m.feature = TanhFeature{matrix_from(f.at("w"))};
    } else if (ftype == "constant") {
      m.feature = ConstantFeature{vector_from(f.at("value")), f.at("input_dim").get<std::size_t>()};
    } else {
      throw IoError(fmt::format("unknown feature type \"{}\"", ftype));
    }
    const json& h = j.at("head");
    const auto htype = h.at("type").get<std::string>();
    if (htype == "diag") {
      m.head = DiagHead{matrix_from(h.at("v_beta")), vector_from(h.at("b_beta")),
                        matrix_from(h.at("v_mu")),   vector_from(h.at("b_mu")),
                        matrix_from(h.at("v_sigma")), vector_from(h.at("b_sigma")),
                        h.at("var_floor").get<double>()};
    } else if (htype == "state-weighted") {
      StateWeightedHead sw;
      for (const auto& c : h.at("components")) sw.components.push_back(gaussian_from(c));
      m.head = std::move(sw);
    } else {
      throw IoError(fmt::format("unknown head type \"{}\"", htype));
    }
    if (j.contains("out_map") && !j.at("out_map").is_null()) m.out_map = matrix_from(j.at("out_map"));
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed model document: {}", e.what()));
  }
}

json hmm_to_json(const GaussianHmm& hmm) {
  hmm.validate();
  json comps = json::array();
  for (const auto& g : hmm.emissions) comps.push_back(gaussian_json(g));
  return json{{"format", kHmmFormat},
              {"init", vector_json(hmm.init)},
              {"trans", matrix_json(hmm.trans)},
              {"emissions", comps}};
}

GaussianHmm hmm_from_json(const json& j) {
  check_format(j, kHmmFormat);
  try {
    GaussianHmm hmm{vector_from(j.at("init")), matrix_from(j.at("trans")), {}};
    for (const auto& c : j.at("emissions")) hmm.emissions.push_back(gaussian_from(c));
    hmm.validate();
    return hmm;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("malformed HMM document: {}", e.what()));
  }
}

double log_density(const AnyModel& model, std::span<const Vector> seq) {
  if (const auto* m = std::get_if<RnadeNcwfa>(&model)) return sequence_log_density(*m, seq);
  return log_density_forward(std::get<GaussianHmm>(model), seq);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}: {}", path.parent_path().string(), ec.message()));
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path.string()));
  out << text;
  out.close();
  if (!out) throw IoError(fmt::format("failed writing {}", path.string()));
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_json(const std::filesystem::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json load_json(const std::filesystem::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

void save_model(const std::filesystem::path& path, const AnyModel& model) {
  if (const auto* m = std::get_if<RnadeNcwfa>(&model)) {
    save_json(path, model_to_json(*m));
  } else {
    save_json(path, hmm_to_json(std::get<GaussianHmm>(model)));
  }
}

AnyModel load_model(const std::filesystem::path& path) {
  const json j = load_json(path);
  const std::string tag = j.value("format", "");
  if (tag == kModelFormat) return model_from_json(j);
  if (tag == kHmmFormat) return hmm_from_json(j);
  throw IoError(fmt::format("{}: unknown model format \"{}\"", path.string(), tag));
}

std::string dataset_to_jsonl(const DatasetFile& file) {
  std::string out = json{{"d", file.dim}, {"length", file.length}, {"seed", file.seed}}.dump();
  out += '\n';
  for (const auto& seq : file.sequences) {
    if (seq.size() != file.length) {
      throw ShapeError(fmt::format("sequence of length {} in a length-{} file", seq.size(), file.length));
    }
    out += '[';
    for (std::size_t t = 0; t < seq.size(); ++t) {
      if (static_cast<std::size_t>(seq[t].size()) != file.dim) {
        throw ShapeError(fmt::format("observation of dimension {} in a d={} file", seq[t].size(), file.dim));
      }
      if (t) out += ',';
      out += '[';
      for (Eigen::Index i = 0; i < seq[t].size(); ++i) {
        if (i) out += ',';
        out += fmt::format("{}", seq[t](i));
      }
      out += ']';
    }
    out += "]\n";
  }
  return out;
}

DatasetFile dataset_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  DatasetFile file;
  std::size_t lineno = 0;
  try {
    if (!std::getline(in, line)) throw IoError("empty dataset file");
    ++lineno;
    const json header = json::parse(line);
    file.dim = header.at("d").get<std::size_t>();
    file.length = header.at("length").get<std::size_t>();
    file.seed = header.at("seed").get<std::uint64_t>();
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto rows = json::parse(line).get<std::vector<std::vector<double>>>();
      if (rows.size() != file.length) {
        throw IoError(fmt::format("line {}: sequence of length {}, header says {}", lineno,
                                  rows.size(), file.length));
      }
      Sequence seq;
      for (const auto& r : rows) {
        if (r.size() != file.dim) {
          throw IoError(fmt::format("line {}: observation of dimension {}, header says {}",
                                    lineno, r.size(), file.dim));
        }
        seq.push_back(Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size())));
      }
      file.sequences.push_back(std::move(seq));
    }
  } catch (const json::exception& e) {
    throw IoError(fmt::format("line {}: {}", lineno, e.what()));
  }
  return file;
}

void save_dataset(const std::filesystem::path& path, const DatasetFile& file) {
  write_text(path, dataset_to_jsonl(file));
}

DatasetFile load_dataset(const std::filesystem::path& path) {
  try {
    return dataset_from_jsonl(read_text(path));
  } catch (const IoError& e) {
    throw IoError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

}  // namespace ncwfa
