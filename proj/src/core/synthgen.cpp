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

#include "core/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <map>

#include "core/error.hpp"
#include "core/rng.hpp"

namespace facts::synth {

void SynthConfig::Validate() const {
  Require(num_classes >= 2, "num_classes must be at least 2");
  Require(num_attributes == num_classes,
          "num_attributes must equal num_classes (one dominant attribute per class)");
  Require(correlation > 0.0 && correlation <= 1.0, "correlation must be in (0, 1]");
  // At or below 1/K the attribute no longer singles out its label.
  Require(correlation > 1.0 / num_classes, "correlation must exceed 1/num_classes");
  Require(static_cast<int>(class_sizes.size()) == num_classes,
          "class_sizes must list one size per class");
  for (int n : class_sizes) {
    Require(n >= num_attributes, "every class size must be >= num_attributes");
  }
  Require(core_separation >= 0.0, "core_separation must be nonnegative");
  Require(spurious_separation >= 0.0, "spurious_separation must be nonnegative");
  Require(spurious_ease > 1.0, "spurious_ease must exceed 1");
  Require(feature_dim > 0 && embed_dim > 0, "dimensions must be positive");
  Require(noise_sigma > 0.0, "noise_sigma must be positive");
  Require(!embed_noise_sigma || *embed_noise_sigma > 0.0,
          "embed_noise_sigma must be positive");
  Require(test_per_group >= 0, "test_per_group must be nonnegative");
  Require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must be in [0, 1)");
}

nlohmann::json ToJson(const SynthConfig& c) {
  nlohmann::json j = {
      {"num_classes", c.num_classes},
      {"num_attributes", c.num_attributes},
      {"correlation", c.correlation},
      {"class_sizes", c.class_sizes},
      {"core_separation", c.core_separation},
      {"spurious_separation", c.spurious_separation},
      {"spurious_ease", c.spurious_ease},
      {"feature_dim", c.feature_dim},
      {"embed_dim", c.embed_dim},
      {"noise_sigma", c.noise_sigma},
      {"test_per_group", c.test_per_group},
      {"val_fraction", c.val_fraction},
      {"seed", c.seed},
  };
  j["embed_noise_sigma"] =
      c.embed_noise_sigma ? nlohmann::json(*c.embed_noise_sigma) : nlohmann::json();
  return j;
}

SynthConfig SynthConfigFromJson(const nlohmann::json& j) {
  SynthConfig c;
  c.num_classes = j.value("num_classes", c.num_classes);
  c.num_attributes = j.value("num_attributes", c.num_classes);
  c.correlation = j.value("correlation", c.correlation);
  c.class_sizes = j.value("class_sizes", c.class_sizes);
  c.core_separation = j.value("core_separation", c.core_separation);
  c.spurious_separation = j.value("spurious_separation", c.spurious_separation);
  c.spurious_ease = j.value("spurious_ease", c.spurious_ease);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  if (j.contains("embed_noise_sigma")) {
    if (j["embed_noise_sigma"].is_null()) {
      c.embed_noise_sigma.reset();
    } else {
      c.embed_noise_sigma = j["embed_noise_sigma"].get<double>();
    }
  }
  c.test_per_group = j.value("test_per_group", c.test_per_group);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.seed = j.value("seed", c.seed);
  return c;
}

// Conflicting samples of attribute a are spread evenly over the other labels:
// cell (y, a) holds c_a = q * A_a samples for y != a, with
// q = (1 - beta) / (beta * (K - 1)), so attribute a's correlation is
// A_a / (A_a + (K - 1) c_a) = beta. Class sizes fix the aligned counts A via
// n_y = A_y + sum_{a != y} c_a, a linear system with the closed form below.
std::vector<std::vector<int>> AllocateCells(const SynthConfig& config) {
  config.Validate();
  const int k = config.num_classes;
  const double beta = config.correlation;
  const double q = (1.0 - beta) / (beta * (k - 1));

  double total = 0.0;
  for (int n : config.class_sizes) total += n;
  const double aligned_total = total / (1.0 + (k - 1) * q);

  std::vector<int> per_cell(k, 0);
  for (int a = 0; a < k; ++a) {
    const double aligned = (config.class_sizes[a] - q * aligned_total) / (1.0 - q);
    if (aligned <= 0.0) {
      Fail(ErrorCode::kInvalidArgument,
           "class_sizes too imbalanced to realize correlation " +
               std::to_string(beta));
    }
    per_cell[a] = static_cast<int>(std::lround(q * aligned));
    if (beta < 1.0 && per_cell[a] < 1) {
      Fail(ErrorCode::kInvalidArgument,
           "class_sizes too small to realize correlation " + std::to_string(beta) +
               " with integer counts (attribute " + std::to_string(a) +
               " would host no bias-conflicting samples)");
    }
  }

  std::vector<std::vector<int>> counts(k, std::vector<int>(k, 0));
  for (int y = 0; y < k; ++y) {
    int conflicting = 0;
    for (int a = 0; a < k; ++a) {
      if (a == y) continue;
      counts[y][a] = per_cell[a];
      conflicting += per_cell[a];
    }
    counts[y][y] = config.class_sizes[y] - conflicting;
    if (counts[y][y] < 1) {
      Fail(ErrorCode::kInvalidArgument,
           "class_sizes too small: class " + std::to_string(y) +
               " has no room for bias-aligned samples");
    }
  }
  for (int a = 0; a < k; ++a) {
    int carriers = 0;
    for (int y = 0; y < k; ++y) carriers += counts[y][a];
    const double realized = static_cast<double>(counts[a][a]) / carriers;
    if (std::abs(realized - beta) > 0.01) {
      Fail(ErrorCode::kInvalidArgument,
           "class_sizes too small to realize correlation " + std::to_string(beta) +
               " within 0.01 for attribute " + std::to_string(a) + " (got " +
               std::to_string(realized) + ")");
    }
  }
  return counts;
}

namespace {

// `count` unit directions in R^dim; orthonormal when dim >= count.
std::vector<VectorD> Directions(int count, int dim, Rng& rng) {
  std::vector<VectorD> out;
  for (int i = 0; i < count; ++i) {
    VectorD v(dim);
    for (int d = 0; d < dim; ++d) v[d] = rng.Normal();
    if (count <= dim) {
      for (const auto& u : out) v -= u.dot(v) * u;
    }
    v.normalize();
    out.push_back(std::move(v));
  }
  return out;
}

std::string MakeId(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%07zu", index);
  return buf;
}

}  // namespace

Dataset Generate(const SynthConfig& config) {
  const auto counts = AllocateCells(config);
  const int k = config.num_classes;

  Rng direction_rng(DeriveSeed(config.seed, "synth/directions"));
  const auto core_dirs = Directions(2 * k, config.feature_dim, direction_rng);
  const auto embed_dirs = Directions(2 * k, config.embed_dim, direction_rng);

  Rng split_rng(DeriveSeed(config.seed, "synth/split"));
  Rng feature_rng(DeriveSeed(config.seed, "synth/features"));
  Rng embed_rng(DeriveSeed(config.seed, "synth/embedding"));

  struct Row {
    Split split;
    int label;
    int attribute;
  };
  std::vector<Row> rows;
  for (int y = 0; y < k; ++y) {
    for (int a = 0; a < k; ++a) {
      const int n = counts[y][a];
      const int n_val = static_cast<int>(std::lround(config.val_fraction * n));
      std::vector<Split> splits(n, Split::kTrain);
      for (int i = 0; i < n_val; ++i) splits[i] = Split::kVal;
      split_rng.Shuffle(splits);
      for (Split s : splits) rows.push_back({s, y, a});
    }
  }
  for (int y = 0; y < k; ++y) {
    for (int a = 0; a < k; ++a) {
      for (int i = 0; i < config.test_per_group; ++i) {
        rows.push_back({Split::kTest, y, a});
      }
    }
  }

  const double core_scale = config.core_separation / std::sqrt(2.0);
  const double spurious_scale =
      config.spurious_separation * config.spurious_ease / std::sqrt(2.0);
  const double embed_class_scale = config.core_separation / std::sqrt(2.0);
  const double embed_attr_scale = config.spurious_separation / std::sqrt(2.0);
  const double embed_noise = config.embed_noise_sigma.value_or(config.noise_sigma);

  Dataset ds;
  ds.samples.reserve(rows.size());
  ds.features = MatrixF(static_cast<Eigen::Index>(rows.size()), config.feature_dim);
  ds.embedding = MatrixF(static_cast<Eigen::Index>(rows.size()), config.embed_dim);
  for (size_t i = 0; i < rows.size(); ++i) {
    const Row& r = rows[i];
    Sample s;
    s.id = MakeId(i);
    s.split = r.split;
    s.label = r.label;
    s.attribute = r.attribute;
    s.bias_conflicting = r.attribute != r.label;
    ds.samples.push_back(std::move(s));

    const auto row = static_cast<Eigen::Index>(i);
    VectorD x = core_scale * core_dirs[r.label] + spurious_scale * core_dirs[k + r.attribute];
    for (int d = 0; d < config.feature_dim; ++d) {
      x[d] += config.noise_sigma * feature_rng.Normal();
    }
    ds.features->row(row) = x.cast<float>().transpose();

    VectorD z = embed_class_scale * embed_dirs[r.label] +
                embed_attr_scale * embed_dirs[k + r.attribute];
    for (int d = 0; d < config.embed_dim; ++d) z[d] += embed_noise * embed_rng.Normal();
    ds.embedding->row(row) = z.cast<float>().transpose();
  }
  ds.mapping.resize(k);
  for (int a = 0; a < k; ++a) ds.mapping[a] = a;
  ds.provenance = ToJson(config);
  return ds;
}

double CorrelationStrength(const Dataset& dataset, int attribute, int label) {
  size_t carriers = 0;
  size_t matching = 0;
  for (const auto& s : dataset.samples) {
    if (!s.attribute) {
      Fail(ErrorCode::kMissingBlock, "dataset has no attribute annotations");
    }
    if (*s.attribute != attribute) continue;
    ++carriers;
    if (s.label == label) ++matching;
  }
  if (carriers == 0) {
    Fail(ErrorCode::kUndefinedMetric,
         "undefined correlation: attribute " + std::to_string(attribute) +
             " has no carriers");
  }
  return static_cast<double>(matching) / static_cast<double>(carriers);
}

std::vector<GroundTruthSlice> GroundTruthSlices(const Dataset& dataset) {
  std::map<std::pair<int, int>, GroundTruthSlice> cells;
  for (const auto& s : dataset.samples) {
    if (!s.attribute || !s.bias_conflicting) {
      Fail(ErrorCode::kMissingBlock, "dataset has no attribute annotations");
    }
    if (!*s.bias_conflicting) continue;
    auto& cell = cells[{s.label, *s.attribute}];
    cell.label = s.label;
    cell.attribute = *s.attribute;
    cell.ids.insert(s.id);
  }
  std::vector<GroundTruthSlice> out;
  for (auto& [key, cell] : cells) out.push_back(std::move(cell));
  return out;
}

}  // namespace facts::synth
