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

#ifndef FACTS_CORE_AMPLIFY_HPP_
#define FACTS_CORE_AMPLIFY_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/dataset.hpp"
#include "core/rng.hpp"
#include "json.hpp"

namespace facts::amplify {

enum class Arch { kLinear, kMlp };

struct TrainHyper {
  double lambda = 0.0;
  double learning_rate = 1e-5;
  double momentum = 0.9;
  int batch_size = 64;
  int max_epochs = 30;
  Arch arch = Arch::kLinear;
  int hidden_width = 0;  // mlp only
  uint64_t seed = 0;

  void Validate() const;
};

nlohmann::json ToJson(const TrainHyper& hyper);
TrainHyper TrainHyperFromJson(const nlohmann::json& j, TrainHyper base = {});
// "linear" or "mlp:<width>".
void ParseArch(const std::string& text, TrainHyper& hyper);
std::string ArchString(const TrainHyper& hyper);

inline const std::vector<double> kDefaultLambdaGrid = {1e-3, 1e-2, 1e-1, 1.0, 2.0};

// Linear softmax classifier or one-hidden-layer ReLU MLP.
//   linear: logits = x W1^T + b1            (W1: K x d)
//   mlp   : logits = relu(x W1^T + b1) W2^T + b2   (W1: H x d, W2: K x H)
struct Model {
  Arch arch = Arch::kLinear;
  int input_dim = 0;
  int num_classes = 0;
  MatrixD w1;
  VectorD b1;
  MatrixD w2;
  VectorD b2;

  MatrixD Logits(const MatrixD& x) const;
  // L2 norm of the decayed parameters (everything but the output bias).
  double PenalizedNorm() const;
  // Same model with every parameter rounded to binary32, the on-disk
  // precision.
  Model RoundedToFloat() const;
};

struct ModelSnapshot {
  Model model;
  double lambda = 0.0;
  int epoch = 0;
  double train_accuracy = 0.0;
  std::optional<double> sigma_amco;
};

struct SweepEntry {
  double lambda = 0.0;
  int epoch = 0;
  double train_accuracy = 0.0;
  double sigma_amco = 0.0;
};

struct AmplifiedModel {
  ModelSnapshot snapshot;
  double lambda_star = 0.0;
  std::vector<SweepEntry> sweep_log;
  // Peak snapshot for every successful sweep entry, parallel to sweep_log.
  std::vector<ModelSnapshot> candidates;
  std::vector<std::string> failures;
};

// Draws mini-batches in which every class is equally likely: a class is
// picked uniformly, then a member uniformly within it (with replacement).
class ClassBalancedSampler {
 public:
  ClassBalancedSampler(std::vector<std::vector<size_t>> members_by_class, uint64_t seed);
  std::vector<size_t> NextBatch(int batch_size);
  const std::vector<int>& present_classes() const { return present_; }

 private:
  std::vector<std::vector<size_t>> members_;
  std::vector<int> present_;
  Rng rng_;
};

// Cross-entropy + lambda * ||W||^2 by SGD with momentum over class-balanced
// mini-batches. Returns the epoch snapshot with the highest full-train
// accuracy (earliest on ties). Uses every row of `train`.
ModelSnapshot TrainRegularized(const Dataset& train, const TrainHyper& hyper);

// Softmax probability of class `label` for a single feature vector.
double Likelihood(const Model& model, const VectorD& x, int label);

// Likelihood of each row's own label under the model.
VectorD LabelLikelihoods(const Model& model, const Dataset& data);

// Mean over classes of the population variance of the label likelihood.
double SigmaAmco(const Model& model, const Dataset& data);
double SigmaFromLikelihoods(const std::vector<int>& labels, const VectorD& likelihoods,
                            int num_classes);

// Trains one snapshot per lambda and selects the one maximizing sigma on
// `train` (first in grid order on ties). `threads` > 1 runs lambdas
// concurrently; results do not depend on it.
AmplifiedModel SweepLambda(const Dataset& train, const TrainHyper& base,
                           const std::vector<double>& lambdas, int threads = 1);

// Ids of `class_label` rows, by ascending label likelihood, ties by id.
std::vector<std::string> RankBiasConflicting(const Model& model, const Dataset& data,
                                             int class_label);

// Weight decay used at epoch `epoch` (0-based) of `epochs` when decaying
// exponentially from `from` to `to`.
double ScheduledLambda(int epoch, int epochs, double from, double to);

// Single run with the decaying schedule; returns the epoch snapshot with the
// highest sigma on `train`.
ModelSnapshot TrainWdSchedule(const Dataset& train, const TrainHyper& hyper,
                              double wd_from = 2.0, double wd_to = 1e-3);

// Mean over classes of (accuracy on bias-aligned) - (accuracy on
// bias-conflicting). Classes lacking either population are skipped.
double GtAccGap(const Model& model, const Dataset& data);

double Accuracy(const Model& model, const Dataset& data);

// Snapshot directory: model.json header plus one MatrixFile per tensor.
void SaveAmplified(const AmplifiedModel& amplified, const TrainHyper& hyper,
                   const std::filesystem::path& directory);
AmplifiedModel LoadAmplified(const std::filesystem::path& directory);

}  // namespace facts::amplify

#endif  // FACTS_CORE_AMPLIFY_HPP_
