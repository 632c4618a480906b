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

#ifndef FACTS_CORE_SYNTHGEN_HPP_
#define FACTS_CORE_SYNTHGEN_HPP_

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "json.hpp"

namespace facts::synth {

// Controlled correlation-bias dataset. Attribute a dictates label a (the
// mapping is the identity), so cell (label y, attribute a) is bias-conflicting
// exactly when y != a.
struct SynthConfig {
  int num_classes = 6;
  int num_attributes = 6;
  // Fraction of each attribute's carriers (train+val) that carry the
  // dictated label.
  double correlation = 0.95;
  // Train+val size of each class.
  std::vector<int> class_sizes = {1900, 1400, 1100, 900, 700, 500};
  double core_separation = 8.0;
  double spurious_separation = 8.0;
  double spurious_ease = 2.0;
  int feature_dim = 16;
  int embed_dim = 8;
  double noise_sigma = 1.0;
  // Embedding-view noise; falls back to noise_sigma when unset.
  std::optional<double> embed_noise_sigma = 0.03;
  // Test samples per (label, attribute) cell. The test split is balanced.
  int test_per_group = 50;
  double val_fraction = 0.2;
  uint64_t seed = 0;

  void Validate() const;
};

nlohmann::json ToJson(const SynthConfig& config);
SynthConfig SynthConfigFromJson(const nlohmann::json& j);

// Train+val sample counts per cell, counts[label][attribute].
std::vector<std::vector<int>> AllocateCells(const SynthConfig& config);

Dataset Generate(const SynthConfig& config);

// Fraction of the carriers of `attribute` whose label equals `label`.
double CorrelationStrength(const Dataset& dataset, int attribute, int label);

struct GroundTruthSlice {
  int attribute = 0;
  int label = 0;
  std::set<std::string> ids;
};

// Bias-conflicting (attribute, label) cells that are nonempty in `dataset`,
// ordered by (label, attribute).
std::vector<GroundTruthSlice> GroundTruthSlices(const Dataset& dataset);

}  // namespace facts::synth

#endif  // FACTS_CORE_SYNTHGEN_HPP_
