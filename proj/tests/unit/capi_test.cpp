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

// Uses the shared library through its public header only.
#include "facts/facts.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support/temp_dir.hpp"

namespace {

namespace fs = std::filesystem;
using facts::testing::FixtureDir;
using facts::testing::TempDir;

std::string Fixture(const std::string& name) {
  return (FixtureDir() / "dataio" / name / "manifest.json").string();
}

TEST(CApi, VersionAndNames) {
  EXPECT_STREQ(facts_version(), "0.1.0");
  EXPECT_STREQ(facts_status_name(FACTS_ERR_BAD_MAGIC), "bad magic");
  EXPECT_STREQ(facts_status_name(FACTS_OK), "ok");
}

TEST(CApi, DatasetAccessors) {
  facts_dataset_t* ds = nullptr;
  ASSERT_EQ(facts_dataset_load(Fixture("good").c_str(), &ds), FACTS_OK);
  EXPECT_EQ(facts_dataset_num_rows(ds), 3u);
  EXPECT_EQ(facts_dataset_num_classes(ds), 2);
  EXPECT_STREQ(facts_dataset_id(ds, 2), "r2");
  EXPECT_EQ(facts_dataset_id(ds, 3), nullptr);
  int label = -1;
  EXPECT_EQ(facts_dataset_label(ds, 1, &label), FACTS_OK);
  EXPECT_EQ(label, 1);

  size_t rows = 0, cols = 0;
  ASSERT_EQ(facts_dataset_block_shape(ds, "features", &rows, &cols), FACTS_OK);
  EXPECT_EQ(rows, 3u);
  EXPECT_EQ(cols, 2u);
  std::vector<float> buf(6);
  ASSERT_EQ(facts_dataset_block_copy(ds, "features", buf.data(), buf.size()), FACTS_OK);
  EXPECT_EQ(buf, (std::vector<float>{0.5f, -1.0f, 2.0f, 0.25f, -3.5f, 4.0f}));
  EXPECT_EQ(facts_dataset_block_copy(ds, "features", buf.data(), 5), FACTS_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(facts_dataset_block_shape(ds, "logits", &rows, &cols), FACTS_ERR_MISSING_BLOCK);
  EXPECT_EQ(facts_dataset_block_shape(ds, "weights", &rows, &cols), FACTS_ERR_INVALID_ARGUMENT);

  TempDir dir("capi");
  ASSERT_EQ(facts_dataset_save(ds, dir.path().c_str()), FACTS_OK);
  EXPECT_EQ(fs::file_size(dir / "features.fsmx"), 48u);
  facts_dataset_free(ds);
  facts_dataset_free(nullptr);
}

TEST(CApi, LoaderErrorCodes) {
  facts_dataset_t* ds = nullptr;
  EXPECT_EQ(facts_dataset_load(Fixture("bad_magic").c_str(), &ds), FACTS_ERR_BAD_MAGIC);
  EXPECT_EQ(ds, nullptr);
  EXPECT_NE(std::string(facts_last_error()).find("bad magic"), std::string::npos);
  EXPECT_EQ(facts_dataset_load(Fixture("bad_dtype").c_str(), &ds), FACTS_ERR_DTYPE_MISMATCH);
  EXPECT_EQ(facts_dataset_load(Fixture("row_mismatch").c_str(), &ds), FACTS_ERR_ROW_MISMATCH);
  EXPECT_EQ(facts_dataset_load(Fixture("non_finite").c_str(), &ds), FACTS_ERR_NON_FINITE);
  EXPECT_EQ(facts_dataset_load(Fixture("empty_split").c_str(), &ds), FACTS_ERR_FORMAT);
  EXPECT_EQ(facts_dataset_load(nullptr, &ds), FACTS_ERR_INVALID_ARGUMENT);
  EXPECT_EQ(facts_dataset_load(Fixture("good").c_str(), nullptr), FACTS_ERR_INVALID_ARGUMENT);
}

TEST(CApi, ExportContractFixture) {
  facts_dataset_t* ds = nullptr;
  const std::string path = (FixtureDir() / "export_contract" / "manifest.json").string();
  ASSERT_EQ(facts_dataset_load(path.c_str(), &ds), FACTS_OK) << facts_last_error();
  size_t rows = 0, cols = 0;
  ASSERT_EQ(facts_dataset_block_shape(ds, "embedding", &rows, &cols), FACTS_OK);
  EXPECT_EQ(rows, 10u);
  EXPECT_EQ(fs::file_size(FixtureDir() / "export_contract" / "embedding.fsmx"),
            24u + 4u * rows * cols);
  facts_dataset_free(ds);
}

TEST(CApi, Metrics) {
  double out = 0.0;
  const int64_t ranking[] = {10, 11, 12};
  const int64_t positives[] = {10, 12};
  ASSERT_EQ(facts_average_precision(ranking, 3, positives, 2, &out), FACTS_OK);
  EXPECT_EQ(out, 0.5 * (1.0 + 2.0 / 3.0));
  EXPECT_EQ(facts_average_precision(ranking, 3, positives, 0, &out), FACTS_ERR_UNDEFINED_METRIC);

  const int64_t gt[] = {1, 2, 3};
  const size_t gt_off[] = {0, 3};
  const int64_t pred[] = {1, 4, 2, 5, 6, 7};
  const size_t pred_off[] = {0, 3, 6};
  ASSERT_EQ(facts_precision_at_k(gt, gt_off, 1, pred, pred_off, 2, 3, &out), FACTS_OK);
  EXPECT_EQ(out, 2.0 / 3.0);

  std::vector<int64_t> tops;
  std::vector<size_t> top_off = {0};
  std::vector<int64_t> conflicting;
  for (int s = 0; s < 3; ++s) {
    for (int i = 0; i < 10; ++i) {
      const int64_t id = 100 * s + i;
      tops.push_back(id);
      if (s != 1) conflicting.push_back(id);
    }
    top_off.push_back(tops.size());
  }
  ASSERT_EQ(facts_slice_ranking_ap(tops.data(), top_off.data(), 3, conflicting.data(),
                                   conflicting.size(), &out),
            FACTS_OK);
  EXPECT_EQ(out, 0.5 * (1.0 + 2.0 / 3.0));

  const double pts[] = {0, 0, 0, 1, 50, 50, 50, 51};
  const int labels[] = {0, 0, 1, 1};
  ASSERT_EQ(facts_silhouette(pts, 4, 2, labels, &out), FACTS_OK);
  EXPECT_GT(out, 0.9);
}

std::vector<std::string> g_log;
void Collect(const char* line, void*) { g_log.emplace_back(line); }

TEST(CApi, StagesEndToEnd) {
  TempDir dir("capi");
  const std::string data = (dir / "data").string();
  const std::string model = (dir / "model").string();
  const std::string slices = (dir / "slices").string();
  const std::string manifest = data + "/manifest.json";

  g_log.clear();
  facts_set_log_sink(Collect, nullptr);
  ASSERT_EQ(facts_synth(R"({"seed": 3, "class_sizes": [800, 600, 480, 400, 320, 250]})",
                        data.c_str()),
            FACTS_OK)
      << facts_last_error();
  EXPECT_EQ(facts_slice(manifest.c_str(), nullptr, nullptr, 1, slices.c_str()),
            FACTS_ERR_MISSING_BLOCK);
  EXPECT_NE(std::string(facts_last_error()).find("logits"), std::string::npos);

  ASSERT_EQ(facts_amplify(manifest.c_str(),
                          R"({"learning_rate": 0.01, "max_epochs": 10, "lambdas": [0.1, 1.0]})",
                          1, model.c_str()),
            FACTS_OK)
      << facts_last_error();
  ASSERT_EQ(facts_slice(manifest.c_str(), model.c_str(), R"({"k_hat": 12})", 1, slices.c_str()),
            FACTS_OK)
      << facts_last_error();
  const std::string metrics = (dir / "metrics.json").string();
  ASSERT_EQ(facts_eval(manifest.c_str(), (slices + "/report.json").c_str(), model.c_str(), "{}",
                       metrics.c_str()),
            FACTS_OK)
      << facts_last_error();
  ASSERT_EQ(facts_report((slices + "/report.json").c_str(), metrics.c_str(), -1, 6, nullptr),
            FACTS_OK);
  const std::string text = facts_report_text();
  EXPECT_EQ(text.rfind("Class 0\n", 0), 0u);
  EXPECT_NE(text.find("precision_at_k"), std::string::npos);
  facts_set_log_sink(nullptr, nullptr);
  EXPECT_FALSE(g_log.empty());

  facts_model_t* m = nullptr;
  ASSERT_EQ(facts_model_load(model.c_str(), &m), FACTS_OK);
  EXPECT_EQ(facts_model_num_classes(m), 6);
  EXPECT_EQ(facts_model_input_dim(m), 16);
  facts_dataset_t* ds = nullptr;
  ASSERT_EQ(facts_dataset_load(manifest.c_str(), &ds), FACTS_OK);
  std::vector<double> lik(facts_dataset_num_rows(ds));
  ASSERT_EQ(facts_model_likelihoods(m, ds, lik.data(), lik.size()), FACTS_OK);
  for (double v : lik) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  double sigma = -1.0;
  EXPECT_EQ(facts_model_sigma_amco(m, ds, &sigma), FACTS_OK);
  EXPECT_GE(sigma, 0.0);
  std::vector<float> x(16, 0.0f), logits(6);
  EXPECT_EQ(facts_model_logits(m, x.data(), 1, 16, logits.data()), FACTS_OK);
  EXPECT_EQ(facts_model_logits(m, x.data(), 1, 15, logits.data()), FACTS_ERR_INVALID_ARGUMENT);
  facts_model_free(m);
  facts_dataset_free(ds);
}

TEST(CApi, BadOptions) {
  TempDir dir("capi");
  EXPECT_EQ(facts_synth("{not json", dir.path().c_str()), FACTS_ERR_FORMAT);
  EXPECT_EQ(facts_synth("[1, 2]", dir.path().c_str()), FACTS_ERR_FORMAT);
  EXPECT_EQ(facts_synth(R"({"correlation": 2.0})", dir.path().c_str()),
            FACTS_ERR_INVALID_ARGUMENT);
  EXPECT_NE(std::string(facts_last_error()).find("correlation"), std::string::npos);
}

}  // namespace
