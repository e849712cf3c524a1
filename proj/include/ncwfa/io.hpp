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

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>

#include <json.hpp>

#include "ncwfa/ghmm.hpp"
#include "ncwfa/model.hpp"

namespace ncwfa {

inline constexpr const char* kModelFormat = "rnade-ncwfa/1";
inline constexpr const char* kHmmFormat = "gaussian-hmm/1";

nlohmann::json model_to_json(const RnadeNcwfa& model);
RnadeNcwfa model_from_json(const nlohmann::json& j);
nlohmann::json hmm_to_json(const GaussianHmm& hmm);
GaussianHmm hmm_from_json(const nlohmann::json& j);

/// Either model family a file may hold, dispatched on its format tag.
using AnyModel = std::variant<RnadeNcwfa, GaussianHmm>;

double log_density(const AnyModel& model, std::span<const Vector> seq);

void save_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json load_json(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const AnyModel& model);
AnyModel load_model(const std::filesystem::path& path);

/// One JSON-lines file: a header {"d", "length", "seed"} and one sequence
/// per line as a list of d-lists.
struct DatasetFile {
  std::size_t dim = 0;
  std::size_t length = 0;
  std::uint64_t seed = 0;
  Dataset sequences;
};

std::string dataset_to_jsonl(const DatasetFile& file);
DatasetFile dataset_from_jsonl(const std::string& text);
void save_dataset(const std::filesystem::path& path, const DatasetFile& file);
DatasetFile load_dataset(const std::filesystem::path& path);

/// Creates parent directories as needed; stream failures raise IoError.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ncwfa
