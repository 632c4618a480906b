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

#include "core/metrics.hpp"

#include <gtest/gtest.h>

#include "core/rng.hpp"
#include "support/expect_error.hpp"
#include "support/oracles.hpp"

namespace facts::metrics {
namespace {

using testing::Ids;

IdSet ToSet(const Ids& ids) { return IdSet(ids.begin(), ids.end()); }

TEST(PrecisionAtK, HandExample) {
  const std::vector<GroundTruthSlice> gt = {{"s", {"1", "2", "3"}}};
  const std::vector<PredictedSlice> pred = {{"a", {"1", "4", "2"}}, {"b", {"5", "6", "7"}}};
  EXPECT_EQ(PrecisionAtK(gt, pred, 3), 2.0 / 3.0);
}

TEST(PrecisionAtK, PerfectAndDisjoint) {
  const std::vector<GroundTruthSlice> gt = {{"x", {"a", "b"}}, {"y", {"c", "d", "e"}}};
  const std::vector<PredictedSlice> exact = {{"p", {"b", "a"}}, {"q", {"e", "c", "d"}}};
  EXPECT_EQ(PrecisionAtK(gt, exact, 2), 1.0);
  const std::vector<PredictedSlice> none = {{"p", {"z", "w"}}};
  EXPECT_EQ(PrecisionAtK(gt, none, 2), 0.0);
  EXPECT_EQ(PrecisionAtK(gt, {}, 2), 0.0);
}

TEST(PrecisionAtK, ShortOrderingCountsMisses) {
  const std::vector<GroundTruthSlice> gt = {{"x", {"a", "b"}}};
  EXPECT_EQ(PrecisionAtK(gt, {{"p", {"a", "b"}}}, 10), 0.2);
}

TEST(PrecisionAtK, Errors) {
  EXPECT_FACTS_ERROR(PrecisionAtK({}, {}, 10), ErrorCode::kUndefinedMetric, "no ground-truth");
  EXPECT_FACTS_ERROR(PrecisionAtK({{"x", {"a"}}}, {}, 0), ErrorCode::kInvalidArgument, "k");
}

TEST(AveragePrecision, HandExamples) {
  // labels [1, 0, 1]
  EXPECT_EQ(AveragePrecision({"p", "n", "q"}, {"p", "q"}), 0.5 * (1.0 / 1.0 + 2.0 / 3.0));
  EXPECT_DOUBLE_EQ(AveragePrecision({"p", "n", "q"}, {"p", "q"}), 5.0 / 6.0);
  EXPECT_EQ(AveragePrecision({"p", "q", "n"}, {"p", "q"}), 1.0);
  EXPECT_EQ(AveragePrecision({"n", "m"}, {"p"}), 0.0);
  EXPECT_FACTS_ERROR(AveragePrecision({"a"}, {}), ErrorCode::kUndefinedMetric, "no positives");
}

TEST(AvgAp, MeanOverClassesWithPositives) {
  EXPECT_EQ(AvgAp({{"a", "b"}}, {{"a"}}), 1.0);
  // Four of five positives retrieved first: 0.8. Two of five: 0.4. The
  // middle class has no positives and is skipped.
  const IdSet five = {"a", "b", "c", "d", "e"};
  const std::vector<Ranking> rankings = {{"a", "b", "c", "d", "x"}, {"z"}, {"a", "b", "x"}};
  EXPECT_DOUBLE_EQ(AvgAp(rankings, {five, {}, five}), 0.6);
  EXPECT_FACTS_ERROR(AvgAp({{"a"}}, {{}}), ErrorCode::kUndefinedMetric, "no class");
}

TEST(SliceRankingAp, HandExamples) {
  const IdSet bc = {"c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"};
  const Ranking conflicting = {"c0", "c1", "c2", "c3", "c4", "c5", "c6", "c7", "c8", "c9"};
  const Ranking aligned = {"a0", "a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "a9"};
  EXPECT_EQ(SliceRankingAp({conflicting, aligned, conflicting}, bc), (1.0 + 2.0 / 3.0) / 2.0);
  EXPECT_EQ(SliceRankingAp({conflicting, conflicting, aligned}, bc), 1.0);

  // Exactly 6 of 10 on the boundary.
  Ranking six = {"c0", "c1", "c2", "c3", "c4", "c5", "a0", "a1", "a2", "a3"};
  EXPECT_EQ(SliceRankingAp({aligned, six}, bc), 0.5);
  Ranking five = six;
  five[5] = "a4";
  EXPECT_FACTS_ERROR(SliceRankingAp({aligned, five}, bc), ErrorCode::kUndefinedMetric,
                     "no slice");
}

TEST(SliceMatchRecallAp, PerfectDisjointAndHalf) {
  const std::vector<GroundTruthSlice> gt = {{"x", {"a", "b", "c", "d"}}};
  const auto perfect = SliceMatchRecallAp(gt, {{"p", {"d", "c", "b", "a"}}});
  EXPECT_EQ(perfect.avg_recall, 1.0);
  EXPECT_EQ(perfect.avg_ap, 1.0);
  const auto disjoint = SliceMatchRecallAp(gt, {{"p", {"w", "x", "y", "z"}}});
  EXPECT_EQ(disjoint.avg_recall, 0.0);
  EXPECT_EQ(disjoint.avg_ap, 0.0);
  // Two of the four members in the first |s| = 4 positions.
  const auto half = SliceMatchRecallAp(gt, {{"p", {"a", "x", "b", "y", "c", "d"}}});
  EXPECT_EQ(half.avg_recall, 0.5);
}

TEST(Silhouette, SeparatedClusters) {
  MatrixD pts(6, 2);
  pts << 0, 0, 0.1, 0, 0, 0.1, 100, 100, 100.1, 100, 100, 100.1;
  EXPECT_GT(Silhouette(pts, {0, 0, 0, 1, 1, 1}), 0.9);
}

TEST(Silhouette, AllSingletonsIsZero) {
  MatrixD pts(4, 1);
  pts << 0, 1, 2, 3;
  EXPECT_EQ(Silhouette(pts, {0, 1, 2, 3}), 0.0);
}

TEST(Silhouette, RandomLabelsOnOneBlob) {
  Rng rng(99);
  MatrixD pts(1000, 2);
  std::vector<int> labels(1000);
  for (int i = 0; i < 1000; ++i) {
    pts(i, 0) = rng.Normal();
    pts(i, 1) = rng.Normal();
    labels[i] = static_cast<int>(rng.UniformInt(3));
  }
  EXPECT_LT(std::abs(Silhouette(pts, labels)), 0.1);
}

TEST(Silhouette, SingleClusterUndefined) {
  EXPECT_FACTS_ERROR(Silhouette(MatrixD::Zero(3, 1), {2, 2, 2}), ErrorCode::kUndefinedMetric,
                     "two clusters");
}

TEST(PrecisionCurve, HandCounts) {
  const Ranking r = {"a", "b", "c", "d", "e"};
  EXPECT_EQ(PrecisionCurve(r, {"a", "b", "c"}, {1, 3, 5}), (std::vector<double>{1.0, 1.0, 0.6}));
  EXPECT_EQ(PrecisionCurve(r, {}, {1, 3, 5}), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_EQ(PrecisionCurve(r, {"b", "e"}, {5}), (std::vector<double>{0.4}));
}

// Randomized agreement with the brute-force oracles.

TEST(MetricOracles, PrecisionAtK) {
  Rng rng(1001);
  for (int t = 0; t < 1000; ++t) {
    const auto inst = testing::RandomSliceInstance(rng);
    std::vector<GroundTruthSlice> gt;
    for (const auto& s : inst.gt) gt.push_back({"g", ToSet(s)});
    std::vector<PredictedSlice> pred;
    for (const auto& p : inst.pred) pred.push_back({"p", p});
    ASSERT_EQ(PrecisionAtK(gt, pred, inst.k),
              testing::OraclePrecisionAtK(inst.gt, inst.pred, inst.k))
        << "instance " << t;
  }
}

TEST(MetricOracles, AveragePrecision) {
  Rng rng(1002);
  for (int t = 0; t < 1000; ++t) {
    const auto inst = testing::RandomRankingInstance(rng);
    ASSERT_EQ(AveragePrecision(inst.ranking, ToSet(inst.positives)),
              testing::OracleAveragePrecision(inst.ranking, inst.positives))
        << "instance " << t;
  }
}

TEST(MetricOracles, SliceRankingAp) {
  Rng rng(1003);
  for (int t = 0; t < 1000; ++t) {
    const auto inst = testing::RandomSliceRankingInstance(rng);
    ASSERT_EQ(SliceRankingAp(inst.tops, ToSet(inst.conflicting)),
              testing::OracleSliceRankingAp(inst.tops, inst.conflicting))
        << "instance " << t;
  }
}

TEST(MetricOracles, Silhouette) {
  Rng rng(1004);
  for (int t = 0; t < 1000; ++t) {
    const auto inst = testing::RandomClusterInstance(rng);
    MatrixD pts(inst.points.size(), inst.points[0].size());
    for (size_t i = 0; i < inst.points.size(); ++i) {
      for (size_t d = 0; d < inst.points[i].size(); ++d) pts(i, d) = inst.points[i][d];
    }
    ASSERT_EQ(Silhouette(pts, inst.labels), testing::OracleSilhouette(inst.points, inst.labels))
        << "instance " << t;
  }
}

}  // namespace
}  // namespace facts::metrics
