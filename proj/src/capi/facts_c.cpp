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

#include "facts/facts.h"

#include <cstring>
#include <exception>
#include <memory>
#include <mutex>
#include <new>
#include <optional>
#include <string>

#include "core/amplify.hpp"
#include "core/dataio.hpp"
#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/pipeline.hpp"

struct facts_dataset {
  facts::Dataset data;
};

struct facts_model {
  facts::amplify::AmplifiedModel amplified;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_report_text;

std::mutex g_log_mutex;
facts_log_fn g_log_sink = nullptr;
void* g_log_user = nullptr;

void Emit(const std::string& line) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  if (g_log_sink != nullptr) g_log_sink(line.c_str(), g_log_user);
}

const facts::pipeline::Logger kLogger = Emit;

template <typename Fn>
facts_status_t Guard(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return FACTS_OK;
  } catch (const facts::Error& e) {
    g_last_error = e.what();
    return static_cast<facts_status_t>(e.code());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("json: ") + e.what();
    return FACTS_ERR_FORMAT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return FACTS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return FACTS_ERR_INTERNAL;
  }
}

void NotNull(const void* p, const char* what) {
  if (p == nullptr) facts::Fail(facts::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

nlohmann::json ParseOptions(const char* json) {
  if (json == nullptr || *json == '\0') return nlohmann::json::object();
  try {
    nlohmann::json j = nlohmann::json::parse(json);
    if (!j.is_object()) facts::Fail(facts::ErrorCode::kFormat, "options must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    facts::Fail(facts::ErrorCode::kFormat, std::string("options: ") + e.what());
  }
}

std::optional<std::filesystem::path> OptionalPath(const char* path) {
  if (path == nullptr || *path == '\0') return std::nullopt;
  return std::filesystem::path(path);
}

const facts::MatrixF* Block(const facts::Dataset& d, const char* name) {
  NotNull(name, "block name");
  const std::string n = name;
  const std::optional<facts::MatrixF>* block = nullptr;
  if (n == "features") {
    block = &d.features;
  } else if (n == "embedding") {
    block = &d.embedding;
  } else if (n == "logits") {
    block = &d.logits;
  } else {
    facts::Fail(facts::ErrorCode::kInvalidArgument, "unknown block '" + n + "'");
  }
  if (!*block) facts::Fail(facts::ErrorCode::kMissingBlock, "dataset has no " + n + " block");
  return &**block;
}

std::string IdString(int64_t id) { return std::to_string(id); }

facts::metrics::IdSet IdSetOf(const int64_t* ids, size_t n) {
  facts::metrics::IdSet out;
  for (size_t i = 0; i < n; ++i) out.insert(IdString(ids[i]));
  return out;
}

facts::metrics::Ranking RankingOf(const int64_t* ids, size_t n) {
  facts::metrics::Ranking out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) out.push_back(IdString(ids[i]));
  return out;
}

}  // namespace

extern "C" {

const char* facts_version(void) { return facts::pipeline::kVersion; }

const char* facts_status_name(facts_status_t status) {
  if (status == FACTS_OK) return "ok";
  return facts::ErrorCodeName(static_cast<facts::ErrorCode>(status));
}

const char* facts_last_error(void) { return g_last_error.c_str(); }

void facts_set_log_sink(facts_log_fn sink, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_sink = sink;
  g_log_user = user;
}

facts_status_t facts_dataset_load(const char* manifest_path, facts_dataset_t** out) {
  return Guard([&] {
    NotNull(manifest_path, "manifest path");
    NotNull(out, "output handle");
    *out = nullptr;
    auto handle = std::make_unique<facts_dataset>();
    handle->data = facts::io::LoadDataset(manifest_path);
    *out = handle.release();
  });
}

void facts_dataset_free(facts_dataset_t* dataset) { delete dataset; }

size_t facts_dataset_num_rows(const facts_dataset_t* dataset) {
  return dataset == nullptr ? 0 : dataset->data.size();
}

int facts_dataset_num_classes(const facts_dataset_t* dataset) {
  return dataset == nullptr ? 0 : dataset->data.NumClasses();
}

const char* facts_dataset_id(const facts_dataset_t* dataset, size_t row) {
  if (dataset == nullptr || row >= dataset->data.size()) return nullptr;
  return dataset->data.samples[row].id.c_str();
}

facts_status_t facts_dataset_label(const facts_dataset_t* dataset, size_t row, int* label) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    NotNull(label, "label output");
    facts::Require(row < dataset->data.size(), "row out of range");
    *label = dataset->data.samples[row].label;
  });
}

facts_status_t facts_dataset_block_shape(const facts_dataset_t* dataset, const char* block,
                                         size_t* rows, size_t* cols) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    NotNull(rows, "rows output");
    NotNull(cols, "cols output");
    const facts::MatrixF* m = Block(dataset->data, block);
    *rows = static_cast<size_t>(m->rows());
    *cols = static_cast<size_t>(m->cols());
  });
}

facts_status_t facts_dataset_block_copy(const facts_dataset_t* dataset, const char* block,
                                        float* buffer, size_t capacity) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    NotNull(buffer, "buffer");
    const facts::MatrixF* m = Block(dataset->data, block);
    const auto n = static_cast<size_t>(m->size());
    facts::Require(capacity >= n, "buffer holds " + std::to_string(capacity) + " floats, need " +
                                      std::to_string(n));
    std::memcpy(buffer, m->data(), n * sizeof(float));
  });
}

facts_status_t facts_dataset_save(const facts_dataset_t* dataset, const char* directory) {
  return Guard([&] {
    NotNull(dataset, "dataset");
    NotNull(directory, "directory");
    facts::io::SaveDataset(dataset->data, directory);
  });
}

facts_status_t facts_model_load(const char* model_dir, facts_model_t** out) {
  return Guard([&] {
    NotNull(model_dir, "model directory");
    NotNull(out, "output handle");
    *out = nullptr;
    auto handle = std::make_unique<facts_model>();
    handle->amplified = facts::amplify::LoadAmplified(model_dir);
    *out = handle.release();
  });
}

void facts_model_free(facts_model_t* model) { delete model; }

int facts_model_num_classes(const facts_model_t* model) {
  return model == nullptr ? 0 : model->amplified.snapshot.model.num_classes;
}

int facts_model_input_dim(const facts_model_t* model) {
  return model == nullptr ? 0 : model->amplified.snapshot.model.input_dim;
}

double facts_model_lambda(const facts_model_t* model) {
  return model == nullptr ? 0.0 : model->amplified.lambda_star;
}

facts_status_t facts_model_logits(const facts_model_t* model, const float* features, size_t rows,
                                  size_t cols, float* logits_out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(features, "features");
    NotNull(logits_out, "logits output");
    const auto& m = model->amplified.snapshot.model;
    facts::Require(cols == static_cast<size_t>(m.input_dim),
                   "feature width " + std::to_string(cols) + " does not match model input " +
                       std::to_string(m.input_dim));
    const Eigen::Map<const facts::MatrixF> x(features, static_cast<Eigen::Index>(rows),
                                             static_cast<Eigen::Index>(cols));
    const facts::MatrixF logits = m.Logits(x.cast<double>()).cast<float>();
    std::memcpy(logits_out, logits.data(), static_cast<size_t>(logits.size()) * sizeof(float));
  });
}

facts_status_t facts_model_likelihoods(const facts_model_t* model, const facts_dataset_t* dataset,
                                       double* out, size_t capacity) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(dataset, "dataset");
    NotNull(out, "output");
    const facts::VectorD l =
        facts::amplify::LabelLikelihoods(model->amplified.snapshot.model, dataset->data);
    facts::Require(capacity >= static_cast<size_t>(l.size()), "output buffer too small");
    std::memcpy(out, l.data(), static_cast<size_t>(l.size()) * sizeof(double));
  });
}

facts_status_t facts_model_sigma_amco(const facts_model_t* model, const facts_dataset_t* dataset,
                                      double* out) {
  return Guard([&] {
    NotNull(model, "model");
    NotNull(dataset, "dataset");
    NotNull(out, "output");
    *out = facts::amplify::SigmaAmco(model->amplified.snapshot.model, dataset->data);
  });
}

facts_status_t facts_synth(const char* config_json, const char* out_dir) {
  return Guard([&] {
    NotNull(out_dir, "output directory");
    const auto config = facts::synth::SynthConfigFromJson(ParseOptions(config_json));
    facts::pipeline::RunSynth(config, out_dir, kLogger);
  });
}

facts_status_t facts_amplify(const char* manifest_path, const char* options_json, int threads,
                             const char* out_dir) {
  return Guard([&] {
    NotNull(manifest_path, "manifest path");
    NotNull(out_dir, "output directory");
    const auto config = facts::pipeline::AmplifyConfigFromJson(ParseOptions(options_json));
    facts::pipeline::RunAmplify(manifest_path, config, threads, out_dir, kLogger);
  });
}

facts_status_t facts_slice(const char* manifest_path, const char* model_dir,
                           const char* options_json, int threads, const char* out_dir) {
  return Guard([&] {
    NotNull(manifest_path, "manifest path");
    NotNull(out_dir, "output directory");
    const auto config = facts::pipeline::SliceConfigFromJson(ParseOptions(options_json));
    facts::pipeline::RunSlice(manifest_path, OptionalPath(model_dir), config, threads, out_dir,
                              kLogger);
  });
}

facts_status_t facts_tune(const char* manifest_path, const char* model_dir,
                          const char* options_json, int threads, const char* out_dir) {
  return Guard([&] {
    NotNull(manifest_path, "manifest path");
    NotNull(out_dir, "output directory");
    const auto config = facts::pipeline::SliceConfigFromJson(ParseOptions(options_json));
    facts::pipeline::RunTune(manifest_path, OptionalPath(model_dir), config, threads, out_dir,
                             kLogger);
  });
}

facts_status_t facts_eval(const char* manifest_path, const char* report_json,
                          const char* model_dir, const char* options_json,
                          const char* out_json) {
  return Guard([&] {
    NotNull(manifest_path, "manifest path");
    NotNull(report_json, "report path");
    NotNull(out_json, "output path");
    const auto config = facts::pipeline::EvalConfigFromJson(ParseOptions(options_json));
    facts::pipeline::RunEval(manifest_path, report_json, OptionalPath(model_dir), config,
                             out_json, kLogger);
  });
}

facts_status_t facts_report(const char* report_json, const char* metrics_json, int num_classes,
                            int depth, const char* out_path) {
  return Guard([&] {
    NotNull(report_json, "report path");
    std::optional<int> classes;
    if (num_classes >= 0) classes = num_classes;
    std::string text =
        facts::pipeline::RunReport(report_json, OptionalPath(metrics_json), classes, depth);
    if (out_path != nullptr && *out_path != '\0') {
      facts::io::WriteTextFile(out_path, text);
    } else {
      g_report_text = std::move(text);
    }
  });
}

const char* facts_report_text(void) { return g_report_text.c_str(); }

facts_status_t facts_pipeline(const char* config_json, const char* out_dir) {
  return Guard([&] {
    NotNull(out_dir, "output directory");
    const auto config = facts::pipeline::PipelineConfigFromJson(ParseOptions(config_json));
    facts::pipeline::RunPipeline(config, out_dir, kLogger);
  });
}

facts_status_t facts_average_precision(const int64_t* ranking, size_t ranking_len,
                                       const int64_t* positives, size_t positives_len,
                                       double* out) {
  return Guard([&] {
    NotNull(out, "output");
    if (ranking_len > 0) NotNull(ranking, "ranking");
    if (positives_len > 0) NotNull(positives, "positives");
    *out = facts::metrics::AveragePrecision(RankingOf(ranking, ranking_len),
                                            IdSetOf(positives, positives_len));
  });
}

facts_status_t facts_precision_at_k(const int64_t* gt_ids, const size_t* gt_offsets,
                                    size_t gt_count, const int64_t* pred_ids,
                                    const size_t* pred_offsets, size_t pred_count, int k,
                                    double* out) {
  return Guard([&] {
    NotNull(out, "output");
    NotNull(gt_offsets, "ground-truth offsets");
    NotNull(pred_offsets, "prediction offsets");
    std::vector<facts::metrics::GroundTruthSlice> gt;
    for (size_t i = 0; i < gt_count; ++i) {
      gt.push_back({std::to_string(i), IdSetOf(gt_ids + gt_offsets[i],
                                               gt_offsets[i + 1] - gt_offsets[i])});
    }
    std::vector<facts::metrics::PredictedSlice> pred;
    for (size_t i = 0; i < pred_count; ++i) {
      pred.push_back({std::to_string(i), RankingOf(pred_ids + pred_offsets[i],
                                                   pred_offsets[i + 1] - pred_offsets[i])});
    }
    *out = facts::metrics::PrecisionAtK(gt, pred, k);
  });
}

facts_status_t facts_slice_ranking_ap(const int64_t* top_ids, const size_t* top_offsets,
                                      size_t slice_count, const int64_t* conflicting,
                                      size_t conflicting_len, double* out) {
  return Guard([&] {
    NotNull(out, "output");
    NotNull(top_offsets, "offsets");
    std::vector<facts::metrics::Ranking> tops;
    for (size_t i = 0; i < slice_count; ++i) {
      tops.push_back(RankingOf(top_ids + top_offsets[i], top_offsets[i + 1] - top_offsets[i]));
    }
    *out = facts::metrics::SliceRankingAp(tops, IdSetOf(conflicting, conflicting_len));
  });
}

facts_status_t facts_silhouette(const double* points, size_t rows, size_t cols,
                                const int* labels, double* out) {
  return Guard([&] {
    NotNull(out, "output");
    NotNull(points, "points");
    NotNull(labels, "labels");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::Map<const RowMajor> p(points, static_cast<Eigen::Index>(rows),
                                       static_cast<Eigen::Index>(cols));
    *out = facts::metrics::Silhouette(p, std::vector<int>(labels, labels + rows));
  });
}

}  // extern "C"
