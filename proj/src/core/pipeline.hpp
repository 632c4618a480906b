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

#ifndef FACTS_CORE_PIPELINE_HPP_
#define FACTS_CORE_PIPELINE_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "core/amplify.hpp"
#include "core/dataset.hpp"
#include "core/slicing.hpp"
#include "core/synthgen.hpp"
#include "json.hpp"

namespace facts::pipeline {

inline constexpr const char* kVersion = "0.1.0";

using Logger = std::function<void(const std::string&)>;

struct AmplifyConfig {
  amplify::TrainHyper hyper;
  std::vector<double> lambdas = amplify::kDefaultLambdaGrid;
  // Single run with an exponentially decaying weight decay instead of the
  // lambda sweep.
  bool wd_schedule = false;
  double wd_from = 2.0;
  double wd_to = 1e-3;
};

struct SliceConfig {
  slicing::SliceHyper hyper;
  Split fit_split = Split::kVal;
  Split assign_split = Split::kTest;
  int top_k = slicing::kDefaultTopK;
  // When nonempty the pipeline runs silhouette tuning over these points
  // and slices with the winner.
  std::vector<slicing::SliceHyper> grid;
};

struct EvalConfig {
  int k = 10;
  std::vector<int> curve_ks = {1, 5, 10, 20, 50, 100};
  // Split whose per-class likelihood rankings feed avg_ap, the precision
  // curves and gt_acc_gap.
  Split ranking_split = Split::kTrain;
  int report_depth = slicing::kDefaultReportDepth;
};

struct PipelineConfig {
  uint64_t seed = 0;
  int threads = 1;
  std::optional<synth::SynthConfig> synth;
  std::optional<std::filesystem::path> manifest;
  AmplifyConfig amplify;
  SliceConfig slice;
  EvalConfig eval;
};

// Flat JSON objects: training / slicing hyperparameters sit next to the
// stage options. Missing keys keep `base` values.
nlohmann::json ToJson(const AmplifyConfig& config);
AmplifyConfig AmplifyConfigFromJson(const nlohmann::json& j, AmplifyConfig base = {});
nlohmann::json ToJson(const SliceConfig& config);
SliceConfig SliceConfigFromJson(const nlohmann::json& j, SliceConfig base = {});
nlohmann::json ToJson(const EvalConfig& config);
EvalConfig EvalConfigFromJson(const nlohmann::json& j, EvalConfig base = {});
nlohmann::json ToJson(const PipelineConfig& config);
PipelineConfig PipelineConfigFromJson(const nlohmann::json& j);

// Stage seed derived from the root seed; stable under edits to other stages.
uint64_t StageSeed(uint64_t root, const std::string& stage);

// Fills per-stage seeds from the root seed and defaults the input to the
// synthetic generator when no manifest is given.
PipelineConfig Resolve(PipelineConfig config);

// Each stage reads the previous stage's artifacts from disk.

// Writes <out_dir>/manifest.json and its blocks; returns the manifest path.
std::filesystem::path RunSynth(const synth::SynthConfig& config,
                               const std::filesystem::path& out_dir,
                               const Logger& log = {});

// Writes the model directory (model.json + tensors) and rankings.json.
amplify::AmplifiedModel RunAmplify(const std::filesystem::path& manifest,
                                   const AmplifyConfig& config, int threads,
                                   const std::filesystem::path& out_dir,
                                   const Logger& log = {});

// Logits come from `model_dir` when given, else from the manifest's logits
// block. Writes mixtures/, report.json, report.csv and assignments.csv.
slicing::SliceReport RunSlice(const std::filesystem::path& manifest,
                              const std::optional<std::filesystem::path>& model_dir,
                              const SliceConfig& config, int threads,
                              const std::filesystem::path& out_dir, const Logger& log = {});

// Writes tune.json; returns the chosen hyperparameters.
slicing::SliceHyper RunTune(const std::filesystem::path& manifest,
                            const std::optional<std::filesystem::path>& model_dir,
                            const SliceConfig& config, int threads,
                            const std::filesystem::path& out_dir, const Logger& log = {});

// Scores a slice report against the manifest's ground truth. Ranking-based
// metrics need `model_dir` and are null otherwise. Writes `out_json`.
nlohmann::json RunEval(const std::filesystem::path& manifest,
                       const std::filesystem::path& report_json,
                       const std::optional<std::filesystem::path>& model_dir,
                       const EvalConfig& config, const std::filesystem::path& out_json,
                       const Logger& log = {});

// Per class, the first `depth` slices of the report with their top members,
// followed by the metric block when given.
std::string RenderReport(const slicing::SliceReport& report, int num_classes,
                         const nlohmann::json* metrics, int depth);

std::string RunReport(const std::filesystem::path& report_json,
                      const std::optional<std::filesystem::path>& metrics_json,
                      std::optional<int> num_classes, int depth);

struct PipelineResult {
  std::filesystem::path manifest;
  std::filesystem::path model_dir;
  std::filesystem::path slice_dir;
  std::filesystem::path metrics;
  std::filesystem::path report_text;
  std::filesystem::path run_json;
  nlohmann::json metrics_json;
};

// Full run under `out_dir`. A failing stage raises an Error whose message
// starts with "stage <name>:"; artifacts written so far are kept.
PipelineResult RunPipeline(const PipelineConfig& config, const std::filesystem::path& out_dir,
                           const Logger& log = {});

}  // namespace facts::pipeline

#endif  // FACTS_CORE_PIPELINE_HPP_
