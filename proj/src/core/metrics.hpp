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

#ifndef FACTS_CORE_METRICS_HPP_
#define FACTS_CORE_METRICS_HPP_

#include <set>
#include <string>
#include <vector>

#include "core/dataset.hpp"

namespace facts::metrics {

using IdSet = std::set<std::string>;
using Ranking = std::vector<std::string>;

struct GroundTruthSlice {
  std::string key;
  IdSet members;
};

struct PredictedSlice {
  std::string key;
  // Members by decreasing slice-membership likelihood.
  Ranking ordering;
};

// P_k(s, s_hat): fraction of the first k entries of `ordering` that belong to
// `members`. Orderings shorter than k count the missing positions as misses.
double SliceSimilarity(const IdSet& members, const Ranking& ordering, int k);

// Mean over ground-truth slices of the best P_k over predicted slices.
double PrecisionAtK(const std::vector<GroundTruthSlice>& gt,
                    const std::vector<PredictedSlice>& pred, int k);

// Mean over positives of precision at the positive's rank; positives that
// never appear in the ranking contribute 0.
double AveragePrecision(const Ranking& ranking, const IdSet& positives);

// Mean AP over the classes whose positive set is nonempty.
double AvgAp(const std::vector<Ranking>& per_class_rankings,
             const std::vector<IdSet>& per_class_positives);

struct SliceMatchScores {
  double avg_recall = 0.0;
  double avg_ap = 0.0;
};

// Associates each ground-truth slice with its best predicted slice by P_10,
// then averages Recall@|s| and AP of the matched ordering.
SliceMatchScores SliceMatchRecallAp(const std::vector<GroundTruthSlice>& gt,
                                    const std::vector<PredictedSlice>& pred);

inline constexpr int kSliceRankingDepth = 10;
inline constexpr int kSliceRankingThreshold = 6;

// `top_members` lists each reported slice's top members in report order
// (ascending accuracy). A slice counts as bias-conflicting when at least 6
// of its first 10 members are in `conflicting`; returns the AP of the report
// order against those labels.
double SliceRankingAp(const std::vector<Ranking>& top_members, const IdSet& conflicting);

// Mean silhouette with Euclidean distance; singleton clusters score 0.
double Silhouette(const MatrixD& points, const std::vector<int>& labels);

// |top-k ∩ positives| / k for every k in `ks`.
std::vector<double> PrecisionCurve(const Ranking& ranking, const IdSet& positives,
                                   const std::vector<int>& ks);

}  // namespace facts::metrics

#endif  // FACTS_CORE_METRICS_HPP_
