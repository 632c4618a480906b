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

#ifndef FACTS_FACTS_H_
#define FACTS_FACTS_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(FACTS_BUILDING_LIBRARY)
#define FACTS_API __declspec(dllexport)
#else
#define FACTS_API __declspec(dllimport)
#endif
#else
#define FACTS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum facts_status {
  FACTS_OK = 0,
  FACTS_ERR_INVALID_ARGUMENT = 1,
  FACTS_ERR_IO = 2,
  FACTS_ERR_FORMAT = 3,
  FACTS_ERR_BAD_MAGIC = 4,
  FACTS_ERR_DTYPE_MISMATCH = 5,
  FACTS_ERR_ROW_MISMATCH = 6,
  FACTS_ERR_NON_FINITE = 7,
  FACTS_ERR_UNDEFINED_METRIC = 8,
  FACTS_ERR_DIVERGENCE = 9,
  FACTS_ERR_MISSING_BLOCK = 10,
  FACTS_ERR_EMPTY_CLASS = 11,
  FACTS_ERR_FIT_FAILED = 12,
  FACTS_ERR_INTERNAL = 99
} facts_status_t;

typedef struct facts_dataset facts_dataset_t;
typedef struct facts_model facts_model_t;

FACTS_API const char* facts_version(void);
FACTS_API const char* facts_status_name(facts_status_t status);

/* Message of the last failing call on the calling thread ("" if none). */
FACTS_API const char* facts_last_error(void);

/* Log lines from the stage functions go to `sink` (NULL disables). */
typedef void (*facts_log_fn)(const char* line, void* user);
FACTS_API void facts_set_log_sink(facts_log_fn sink, void* user);

/* ---- datasets ------------------------------------------------------- */

FACTS_API facts_status_t facts_dataset_load(const char* manifest_path, facts_dataset_t** out);
FACTS_API void facts_dataset_free(facts_dataset_t* dataset);
FACTS_API size_t facts_dataset_num_rows(const facts_dataset_t* dataset);
FACTS_API int facts_dataset_num_classes(const facts_dataset_t* dataset);
/* Row id, valid until the dataset is freed. NULL when out of range. */
FACTS_API const char* facts_dataset_id(const facts_dataset_t* dataset, size_t row);
FACTS_API facts_status_t facts_dataset_label(const facts_dataset_t* dataset, size_t row,
                                             int* label);
/* Block names: "features", "embedding", "logits". */
FACTS_API facts_status_t facts_dataset_block_shape(const facts_dataset_t* dataset,
                                                   const char* block, size_t* rows,
                                                   size_t* cols);
/* Copies the block row-major into `buffer` of `capacity` floats. */
FACTS_API facts_status_t facts_dataset_block_copy(const facts_dataset_t* dataset,
                                                  const char* block, float* buffer,
                                                  size_t capacity);
FACTS_API facts_status_t facts_dataset_save(const facts_dataset_t* dataset,
                                            const char* directory);

/* ---- amplified models ----------------------------------------------- */

FACTS_API facts_status_t facts_model_load(const char* model_dir, facts_model_t** out);
FACTS_API void facts_model_free(facts_model_t* model);
FACTS_API int facts_model_num_classes(const facts_model_t* model);
FACTS_API int facts_model_input_dim(const facts_model_t* model);
FACTS_API double facts_model_lambda(const facts_model_t* model);
/* logits_out holds rows * num_classes values. */
FACTS_API facts_status_t facts_model_logits(const facts_model_t* model, const float* features,
                                            size_t rows, size_t cols, float* logits_out);
/* Softmax probability of each row's own label. */
FACTS_API facts_status_t facts_model_likelihoods(const facts_model_t* model,
                                                 const facts_dataset_t* dataset,
                                                 double* out, size_t capacity);
FACTS_API facts_status_t facts_model_sigma_amco(const facts_model_t* model,
                                                const facts_dataset_t* dataset,
                                                double* out);

/* ---- pipeline stages -------------------------------------------------
 * Options are JSON objects (NULL or "" for defaults); every stage reads its
 * inputs from disk and writes its artifacts under the given directory. */

FACTS_API facts_status_t facts_synth(const char* config_json, const char* out_dir);
FACTS_API facts_status_t facts_amplify(const char* manifest_path, const char* options_json,
                                       int threads, const char* out_dir);
/* model_dir may be NULL to use the manifest's logits block. */
FACTS_API facts_status_t facts_slice(const char* manifest_path, const char* model_dir,
                                     const char* options_json, int threads,
                                     const char* out_dir);
FACTS_API facts_status_t facts_tune(const char* manifest_path, const char* model_dir,
                                    const char* options_json, int threads, const char* out_dir);
FACTS_API facts_status_t facts_eval(const char* manifest_path, const char* report_json,
                                    const char* model_dir, const char* options_json,
                                    const char* out_json);
/* Renders to `out_path`, or returns the text through facts_report_text when
 * out_path is NULL. metrics_json and num_classes (< 0) are optional. */
FACTS_API facts_status_t facts_report(const char* report_json, const char* metrics_json,
                                      int num_classes, int depth, const char* out_path);
/* Text of the last facts_report call with out_path == NULL on this thread. */
FACTS_API const char* facts_report_text(void);
FACTS_API facts_status_t facts_pipeline(const char* config_json, const char* out_dir);

/* ---- metrics ---------------------------------------------------------
 * Ids are integers; rankings are ordered arrays, positive sets unordered. */

FACTS_API facts_status_t facts_average_precision(const int64_t* ranking, size_t ranking_len,
                                                 const int64_t* positives, size_t positives_len,
                                                 double* out);
/* Ground-truth slice i holds gt_ids[gt_offsets[i] .. gt_offsets[i+1]), and
 * likewise for predicted orderings. */
FACTS_API facts_status_t facts_precision_at_k(const int64_t* gt_ids, const size_t* gt_offsets,
                                              size_t gt_count, const int64_t* pred_ids,
                                              const size_t* pred_offsets, size_t pred_count,
                                              int k, double* out);
FACTS_API facts_status_t facts_slice_ranking_ap(const int64_t* top_ids,
                                                const size_t* top_offsets, size_t slice_count,
                                                const int64_t* conflicting,
                                                size_t conflicting_len, double* out);
FACTS_API facts_status_t facts_silhouette(const double* points, size_t rows, size_t cols,
                                          const int* labels, double* out);

#ifdef __cplusplus
}
#endif

#endif  // FACTS_FACTS_H_
