/*
 * Copyright 2026 The FACTS Slicer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FACTS_CORE_DATASET_HPP_
#define FACTS_CORE_DATASET_HPP_

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace facts {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::MatrixXd;
using VectorD = Eigen::VectorXd;

enum class Split : uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

std::string_view SplitName(Split split);
Split ParseSplit(std::string_view name);

// One metadata row. Matrix views (features, embedding, logits) are stored
// column-wise on the Dataset; row i of each block belongs to samples[i].
struct Sample {
  std::string id;
  Split split = Split::kTrain;
  int label = 0;
  std::optional<int> attribute;
  std::optional<bool> bias_conflicting;

  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::optional<MatrixF> features;
  std::optional<MatrixF> embedding;
  std::optional<MatrixF> logits;
  // attribute -> dictated label (M). Empty when unknown.
  std::vector<int> mapping;
  // SynthConfig echo or ingest provenance; null when absent.
  nlohmann::json provenance;

  size_t size() const { return samples.size(); }
  int NumClasses() const;
  bool HasAttributes() const;

  std::vector<size_t> IndicesOf(Split split) const;
  // Indices of `split` rows grouped by label; outer size is NumClasses().
  std::vector<std::vector<size_t>> IndicesByClass(Split split) const;

  // New dataset holding the listed rows, in order. Mapping and provenance are
  // carried over.
  Dataset Subset(const std::vector<size_t>& rows) const;
  Dataset SplitView(Split split) const { return Subset(IndicesOf(split)); }

  // Throws facts::Error when an invariant is violated: duplicate ids, labels
  // out of range, matrix rows not aligned, non-finite payload, or
  // bias_conflicting inconsistent with the mapping.
  void Validate() const;

  bool operator==(const Dataset& other) const;
};

// Copies the selected rows of a float block into a double matrix.
MatrixD ToDouble(const MatrixF& block);

}  // namespace facts

#endif  // FACTS_CORE_DATASET_HPP_
