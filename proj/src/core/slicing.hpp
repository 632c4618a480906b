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

#ifndef FACTS_CORE_SLICING_HPP_
#define FACTS_CORE_SLICING_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "json.hpp"

namespace facts::slicing {

enum class CovType { kFull, kDiagonal, kTied };

std::string CovTypeName(CovType type);
CovType ParseCovType(const std::string& name);

struct SliceHyper {
  int k_hat = 36;
  // Exponent on the logit-view density. Zero reduces the model to
  // embedding-only clustering.
  double alpha = 25.0;
  double delta_p = 1e-3;
  CovType cov_p = CovType::kFull;
  int max_em_steps = 100;
  double ll_tol = 1e-7;
  uint64_t seed = 0;

  void Validate() const;
};

nlohmann::json ToJson(const SliceHyper& hyper);
SliceHyper SliceHyperFromJson(const nlohmann::json& j, SliceHyper base = {});

inline constexpr double kEmbedVarianceFloor = 1e-6;
inline constexpr double kEmptyComponentMass = 1e-10;

struct Component {
  VectorD mu_p;
  MatrixD sigma_p;
  VectorD mu_c;
  VectorD sigma_c_diag;
  bool active = true;
};

struct SliceMixture {
  int class_label = 0;
  SliceHyper hyper;
  VectorD weights;
  std::vector<Component> components;
  // Log-likelihood after each E-step.
  std::vector<double> fit_log;

  int logit_dim() const;
  int embed_dim() const;

  // n x k matrix of log p_j + log N(z; mu_c, Sigma_c) + alpha * log N(b; mu_p,
  // Sigma_p). Inactive components get -inf.
  MatrixD LogJoint(const MatrixD& logits, const MatrixD& embeddings) const;
  // Sum over rows of log sum_j exp(LogJoint).
  double LogLikelihood(const MatrixD& logits, const MatrixD& embeddings) const;
};

// Initial hard partition: samples sharing a predicted label share a
// component; the largest groups are then split at the median of their
// principal logit direction until k_hat components exist (some may stay empty
// when every group is a singleton). Returns the component of each sample.
std::vector<int> InitSlices(const MatrixD& logits, const std::vector<int>& predictions,
                            int k_hat);

// EM on l(phi) = sum_i log sum_j p_j N(z_i; mu_c, Sigma_c) N(b_i; mu_p, Sigma_p)^alpha.
// Starts from InitSlices with predictions = argmax of the logits.
SliceMixture FitMixture(const MatrixD& logits, const MatrixD& embeddings,
                        const SliceHyper& hyper, int class_label = 0);
SliceMixture FitMixtureFrom(const MatrixD& logits, const MatrixD& embeddings,
                            const SliceHyper& hyper, const std::vector<int>& init,
                            int class_label = 0);

struct ClassAssignment {
  std::vector<int> slice_of_row;
  std::vector<double> log_density_of_row;
};

// Hard assignment: argmax of LogJoint (lowest component on ties).
ClassAssignment AssignRows(const SliceMixture& mixture, const MatrixD& logits,
                           const MatrixD& embeddings);

struct SliceKey {
  int class_label = 0;
  int slice_id = 0;
  auto operator<=>(const SliceKey&) const = default;
};

struct SliceAssignment {
  struct Entry {
    std::string id;
    int class_label = 0;
    int slice_id = 0;
    double log_density = 0.0;
  };
  std::vector<Entry> entries;
  // Members of each nonempty slice by decreasing density, ties by id.
  std::map<SliceKey, std::vector<std::string>> members;
};

// Fits one mixture per class present in `fit` (needs logits and embedding
// blocks). `threads` > 1 fits classes concurrently.
std::vector<SliceMixture> FitPerClass(const Dataset& fit, const SliceHyper& hyper,
                                      int threads = 1);

// Assigns every row of `data` using the mixture of its label.
SliceAssignment Assign(const std::vector<SliceMixture>& mixtures, const Dataset& data);

struct ReportedSlice {
  int class_label = 0;
  int slice_id = 0;
  double accuracy = 0.0;
  size_t size = 0;
  std::vector<std::string> members;
  std::vector<std::string> top_k;
  bool predicted_bias_conflicting = false;
};

struct SliceReport {
  int top_k = 10;
  // Ascending accuracy, then descending size, then (class, slice id).
  std::vector<ReportedSlice> slices;
};

inline constexpr int kDefaultReportDepth = 6;
inline constexpr int kDefaultTopK = 10;

// `correct` maps sample id to whether the model predicted it correctly.
SliceReport RankAndReport(const SliceAssignment& assignment,
                          const std::map<std::string, bool>& correct, int top_k = kDefaultTopK);

nlohmann::json ToJson(const SliceReport& report);
SliceReport SliceReportFromJson(const nlohmann::json& j);
// class,slice_id,rank,accuracy,size,member_ids_topk (ids joined by ';').
std::string ToCsv(const SliceReport& report);

struct TuneResult {
  size_t chosen = 0;
  std::vector<double> scores;  // NaN for skipped points
  std::vector<std::string> warnings;
};

// Per-class mean silhouette of the slice assignment of `fit`, averaged over
// the embedding view and the logit view. Classes whose rows fall in a single
// slice score 0.
double SliceSilhouette(const std::vector<SliceMixture>& mixtures, const Dataset& fit);

// Fits every grid point on `fit` and returns the one with the highest
// SliceSilhouette (first on ties). Failing points are skipped with a warning.
TuneResult SilhouetteTune(const Dataset& fit, const std::vector<SliceHyper>& grid,
                          int threads = 1);

// JSON header + MatrixFile blocks (weights, means, covariances).
void SaveMixture(const SliceMixture& mixture, const std::filesystem::path& directory,
                 const std::string& stem);
SliceMixture LoadMixture(const std::filesystem::path& directory, const std::string& stem);

}  // namespace facts::slicing

#endif  // FACTS_CORE_SLICING_HPP_
