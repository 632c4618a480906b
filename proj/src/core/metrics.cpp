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

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "core/error.hpp"

namespace facts::metrics {

double SliceSimilarity(const IdSet& members, const Ranking& ordering, int k) {
  Require(k >= 1, "k must be at least 1");
  const size_t depth = std::min(ordering.size(), static_cast<size_t>(k));
  size_t hits = 0;
  for (size_t i = 0; i < depth; ++i) hits += members.count(ordering[i]);
  return static_cast<double>(hits) / k;
}

double PrecisionAtK(const std::vector<GroundTruthSlice>& gt,
                    const std::vector<PredictedSlice>& pred, int k) {
  Require(k >= 1, "k must be at least 1");
  if (gt.empty()) Fail(ErrorCode::kUndefinedMetric, "precision@k: no ground-truth slices");
  double total = 0.0;
  for (const auto& s : gt) {
    double best = 0.0;
    for (const auto& p : pred) best = std::max(best, SliceSimilarity(s.members, p.ordering, k));
    total += best;
  }
  return total / static_cast<double>(gt.size());
}

double AveragePrecision(const Ranking& ranking, const IdSet& positives) {
  if (positives.empty()) {
    Fail(ErrorCode::kUndefinedMetric, "average precision: no positives");
  }
  double sum = 0.0;
  size_t hits = 0;
  for (size_t r = 0; r < ranking.size(); ++r) {
    if (positives.count(ranking[r])) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(r + 1);
    }
  }
  return sum / static_cast<double>(positives.size());
}

double AvgAp(const std::vector<Ranking>& per_class_rankings,
             const std::vector<IdSet>& per_class_positives) {
  Require(per_class_rankings.size() == per_class_positives.size(),
          "avg_ap: rankings and positive sets differ in length");
  double total = 0.0;
  int classes = 0;
  for (size_t c = 0; c < per_class_rankings.size(); ++c) {
    if (per_class_positives[c].empty()) continue;
    total += AveragePrecision(per_class_rankings[c], per_class_positives[c]);
    ++classes;
  }
  if (classes == 0) {
    Fail(ErrorCode::kUndefinedMetric, "avg_ap: no class contains a bias-conflicting slice");
  }
  return total / classes;
}

SliceMatchScores SliceMatchRecallAp(const std::vector<GroundTruthSlice>& gt,
                                    const std::vector<PredictedSlice>& pred) {
  if (gt.empty()) Fail(ErrorCode::kUndefinedMetric, "slice recall/AP: no ground-truth slices");
  SliceMatchScores out;
  for (const auto& s : gt) {
    const PredictedSlice* match = nullptr;
    double best = -1.0;
    for (const auto& p : pred) {
      const double score = SliceSimilarity(s.members, p.ordering, kSliceRankingDepth);
      if (score > best) {
        best = score;
        match = &p;
      }
    }
    if (match == nullptr) continue;
    const size_t gt_slice_size = s.members.size();
    const size_t depth = std::min(match->ordering.size(), gt_slice_size);
    size_t hits = 0;
    for (size_t i = 0; i < depth; ++i) hits += s.members.count(match->ordering[i]);
    out.avg_recall += static_cast<double>(hits) / static_cast<double>(gt_slice_size);
    out.avg_ap += AveragePrecision(match->ordering, s.members);
  }
  out.avg_recall /= static_cast<double>(gt.size());
  out.avg_ap /= static_cast<double>(gt.size());
  return out;
}

double SliceRankingAp(const std::vector<Ranking>& top_members, const IdSet& conflicting) {
  std::vector<bool> labels;
  size_t positives = 0;
  for (const auto& members : top_members) {
    const size_t depth = std::min(members.size(), static_cast<size_t>(kSliceRankingDepth));
    int hits = 0;
    for (size_t i = 0; i < depth; ++i) hits += static_cast<int>(conflicting.count(members[i]));
    labels.push_back(hits >= kSliceRankingThreshold);
    positives += labels.back() ? 1 : 0;
  }
  if (positives == 0) {
    Fail(ErrorCode::kUndefinedMetric, "slice ranking AP: no slice is labeled bias-conflicting");
  }
  double sum = 0.0;
  size_t hits = 0;
  for (size_t r = 0; r < labels.size(); ++r) {
    if (!labels[r]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  return sum / static_cast<double>(positives);
}

double Silhouette(const MatrixD& points, const std::vector<int>& labels) {
  const auto n = static_cast<size_t>(points.rows());
  Require(labels.size() == n, "silhouette: labels and points differ in length");
  std::map<int, size_t> cluster_index;
  for (int l : labels) cluster_index.emplace(l, 0);
  if (cluster_index.size() < 2) {
    Fail(ErrorCode::kUndefinedMetric, "silhouette: needs at least two clusters");
  }
  size_t next = 0;
  for (auto& [label, index] : cluster_index) index = next++;
  std::vector<size_t> cluster(n);
  std::vector<size_t> sizes(cluster_index.size(), 0);
  for (size_t i = 0; i < n; ++i) {
    cluster[i] = cluster_index[labels[i]];
    ++sizes[cluster[i]];
  }

  std::vector<double> dist_sum(sizes.size());
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (sizes[cluster[i]] == 1) continue;
    std::fill(dist_sum.begin(), dist_sum.end(), 0.0);
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dist_sum[cluster[j]] +=
          (points.row(static_cast<Eigen::Index>(i)) - points.row(static_cast<Eigen::Index>(j)))
              .norm();
    }
    const double a = dist_sum[cluster[i]] / static_cast<double>(sizes[cluster[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (size_t c = 0; c < sizes.size(); ++c) {
      if (c == cluster[i]) continue;
      b = std::min(b, dist_sum[c] / static_cast<double>(sizes[c]));
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

std::vector<double> PrecisionCurve(const Ranking& ranking, const IdSet& positives,
                                   const std::vector<int>& ks) {
  std::vector<double> out;
  out.reserve(ks.size());
  for (int k : ks) {
    Require(k >= 1, "precision curve: k must be positive");
    out.push_back(SliceSimilarity(positives, ranking, k));
  }
  return out;
}

}  // namespace facts::metrics
