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

#include <map>

#include <gtest/gtest.h>

#include "support/expect_error.hpp"

namespace facts::synth {
namespace {

SynthConfig Small() {
  SynthConfig c;
  c.class_sizes = {800, 600, 480, 400, 320, 250};
  c.seed = 17;
  return c;
}

TEST(AllocateCells, TwoClassesHandCount) {
  SynthConfig c;
  c.num_classes = 2;
  c.num_attributes = 2;
  c.correlation = 0.75;
  c.class_sizes = {100, 100};
  // q = 0.25 / 0.75 = 1/3, aligned total = 200 / (4/3) = 150,
  // aligned per attribute = (100 - 50) / (2/3) = 75, conflicting = 25.
  const auto counts = AllocateCells(c);
  ASSERT_EQ(counts.size(), 2u);
  EXPECT_EQ(counts[0][0], 75);
  EXPECT_EQ(counts[0][1], 25);
  EXPECT_EQ(counts[1][0], 25);
  EXPECT_EQ(counts[1][1], 75);
}

TEST(AllocateCells, RowSumsAreClassSizes) {
  const SynthConfig c;
  const auto counts = AllocateCells(c);
  for (int y = 0; y < c.num_classes; ++y) {
    int total = 0;
    for (int n : counts[y]) total += n;
    EXPECT_EQ(total, c.class_sizes[y]);
  }
}

TEST(AllocateCells, PerfectCorrelationHasNoConflicts) {
  SynthConfig c;
  c.correlation = 1.0;
  const auto counts = AllocateCells(c);
  for (int y = 0; y < c.num_classes; ++y) {
    for (int a = 0; a < c.num_classes; ++a) {
      if (a != y) {
        EXPECT_EQ(counts[y][a], 0);
      }
    }
  }
}

TEST(AllocateCells, RejectsInfeasibleImbalance) {
  SynthConfig c;
  c.num_classes = 2;
  c.num_attributes = 2;
  c.correlation = 0.8;
  c.class_sizes = {1000, 10};
  EXPECT_FACTS_ERROR(AllocateCells(c), ErrorCode::kInvalidArgument, "imbalanced");
}

TEST(SynthConfig, Validation) {
  SynthConfig c;
  c.spurious_ease = 1.0;
  EXPECT_FACTS_ERROR(c.Validate(), ErrorCode::kInvalidArgument, "spurious_ease");
  c = SynthConfig{};
  c.num_attributes = 5;
  EXPECT_FACTS_ERROR(c.Validate(), ErrorCode::kInvalidArgument, "num_attributes");
  c = SynthConfig{};
  c.correlation = 0.0;
  EXPECT_FACTS_ERROR(c.Validate(), ErrorCode::kInvalidArgument, "correlation");
  c.correlation = 1.0 / 6.0;
  EXPECT_FACTS_ERROR(c.Validate(), ErrorCode::kInvalidArgument, "1/num_classes");
}

TEST(SynthConfig, JsonRoundTrip) {
  SynthConfig c = Small();
  c.embed_noise_sigma.reset();
  const SynthConfig back = SynthConfigFromJson(ToJson(c));
  EXPECT_EQ(ToJson(back), ToJson(c));
  EXPECT_FALSE(back.embed_noise_sigma.has_value());
}

TEST(Generate, DefaultConfigShape) {
  SynthConfig c;
  c.seed = 1;
  const Dataset ds = Generate(c);
  EXPECT_EQ(ds.NumClasses(), 6);
  EXPECT_NO_THROW(ds.Validate());
  // Class imbalance of the default configuration.
  EXPECT_NEAR(1900.0 / 500.0, 3.8, 1e-12);
  std::vector<size_t> rows = ds.IndicesOf(Split::kTrain);
  for (size_t r : ds.IndicesOf(Split::kVal)) rows.push_back(r);
  const Dataset train_val = ds.Subset(rows);
  for (int a = 0; a < 6; ++a) {
    const double realized = CorrelationStrength(ds.SplitView(Split::kTrain), a, a);
    EXPECT_GE(realized, 0.94) << "attribute " << a;
    EXPECT_LE(realized, 0.96) << "attribute " << a;
    EXPECT_NEAR(CorrelationStrength(train_val, a, a), 0.95, 0.01) << "attribute " << a;
  }
  EXPECT_EQ(GroundTruthSlices(ds).size(), 30u);
  EXPECT_EQ(GroundTruthSlices(ds.SplitView(Split::kTest)).size(), 30u);
  ASSERT_TRUE(ds.features && ds.embedding);
  EXPECT_EQ(ds.features->cols(), c.feature_dim);
  EXPECT_EQ(ds.embedding->cols(), c.embed_dim);
  EXPECT_FALSE(ds.logits.has_value());
}

TEST(Generate, SplitSizes) {
  const SynthConfig c = Small();
  const Dataset ds = Generate(c);
  const auto counts = AllocateCells(c);
  std::map<std::pair<int, int>, std::map<Split, int>> seen;
  for (const auto& s : ds.samples) ++seen[{s.label, *s.attribute}][s.split];
  for (int y = 0; y < 6; ++y) {
    for (int a = 0; a < 6; ++a) {
      auto& cell = seen[{y, a}];
      EXPECT_EQ(cell[Split::kTrain] + cell[Split::kVal], counts[y][a]);
      EXPECT_EQ(cell[Split::kVal], static_cast<int>(std::lround(0.2 * counts[y][a])));
      EXPECT_EQ(cell[Split::kTest], c.test_per_group);
    }
  }
}

TEST(Generate, PerfectCorrelationHasNoConflictingTrainVal) {
  SynthConfig c = Small();
  c.correlation = 1.0;
  const Dataset ds = Generate(c);
  EXPECT_TRUE(GroundTruthSlices(ds.SplitView(Split::kTrain)).empty());
  EXPECT_TRUE(GroundTruthSlices(ds.SplitView(Split::kVal)).empty());
}

TEST(Generate, TwoClassConfigHasTwoSlices) {
  SynthConfig c;
  c.num_classes = 2;
  c.num_attributes = 2;
  c.class_sizes = {800, 300};
  const Dataset ds = Generate(c);
  EXPECT_EQ(GroundTruthSlices(ds).size(), 2u);
}

TEST(Generate, Deterministic) {
  const SynthConfig c = Small();
  EXPECT_TRUE(Generate(c) == Generate(c));
  SynthConfig other = c;
  other.seed = 18;
  EXPECT_FALSE(Generate(c) == Generate(other));
}

TEST(Generate, ConflictFlagFollowsMapping) {
  const Dataset ds = Generate(Small());
  for (const auto& s : ds.samples) {
    ASSERT_TRUE(s.bias_conflicting.has_value());
    EXPECT_EQ(*s.bias_conflicting, ds.mapping[*s.attribute] != s.label);
  }
}

TEST(CorrelationStrength, HandCounts) {
  Dataset ds;
  ds.mapping = {0, 1};
  for (int i = 0; i < 10; ++i) {
    Sample s;
    s.id = "s" + std::to_string(i);
    s.label = i < 9 ? 0 : 1;
    s.attribute = 0;
    s.bias_conflicting = s.label != 0;
    ds.samples.push_back(s);
  }
  EXPECT_DOUBLE_EQ(CorrelationStrength(ds, 0, 0), 0.9);
  ds.samples.pop_back();
  EXPECT_DOUBLE_EQ(CorrelationStrength(ds, 0, 0), 1.0);
}

TEST(GroundTruthSlices, GroupsByCell) {
  Dataset ds;
  ds.mapping = {0, 1};
  auto add = [&](const std::string& id, int label, int attribute) {
    Sample s;
    s.id = id;
    s.label = label;
    s.attribute = attribute;
    s.bias_conflicting = attribute != label;
    ds.samples.push_back(s);
  };
  add("a", 0, 0);
  add("b", 0, 1);
  add("c", 1, 0);
  add("d", 0, 1);
  const auto slices = GroundTruthSlices(ds);
  ASSERT_EQ(slices.size(), 2u);
  EXPECT_EQ(slices[0].label, 0);
  EXPECT_EQ(slices[0].attribute, 1);
  EXPECT_EQ(slices[0].ids, (std::set<std::string>{"b", "d"}));
  EXPECT_EQ(slices[1].ids, (std::set<std::string>{"c"}));
}

}  // namespace
}  // namespace facts::synth
