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

#include "core/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "core/error.hpp"

namespace facts {

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  Fail(ErrorCode::kInvalidArgument, "unknown split '" + std::string(name) + "'");
}

int Dataset::NumClasses() const {
  int n = static_cast<int>(mapping.size());
  for (const auto& s : samples) n = std::max(n, s.label + 1);
  return n;
}

bool Dataset::HasAttributes() const {
  if (samples.empty()) return false;
  return std::all_of(samples.begin(), samples.end(),
                     [](const Sample& s) { return s.attribute.has_value(); });
}

std::vector<size_t> Dataset::IndicesOf(Split split) const {
  std::vector<size_t> out;
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

std::vector<std::vector<size_t>> Dataset::IndicesByClass(Split split) const {
  std::vector<std::vector<size_t>> out(NumClasses());
  for (size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out[samples[i].label].push_back(i);
  }
  return out;
}

namespace {

std::optional<MatrixF> TakeRows(const std::optional<MatrixF>& block,
                                const std::vector<size_t>& rows) {
  if (!block) return std::nullopt;
  MatrixF out(static_cast<Eigen::Index>(rows.size()), block->cols());
  for (size_t r = 0; r < rows.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        block->row(static_cast<Eigen::Index>(rows[r]));
  }
  return out;
}

void CheckBlock(const std::optional<MatrixF>& block, const char* name,
                size_t rows) {
  if (!block) return;
  if (static_cast<size_t>(block->rows()) != rows) {
    Fail(ErrorCode::kRowMismatch,
         std::string(name) + " block has " + std::to_string(block->rows()) +
             " rows but metadata has " + std::to_string(rows));
  }
  if (!block->allFinite()) {
    Fail(ErrorCode::kNonFinite, std::string(name) + " block has non-finite values");
  }
}

}  // namespace

Dataset Dataset::Subset(const std::vector<size_t>& rows) const {
  Dataset out;
  out.samples.reserve(rows.size());
  for (size_t r : rows) out.samples.push_back(samples.at(r));
  out.features = TakeRows(features, rows);
  out.embedding = TakeRows(embedding, rows);
  out.logits = TakeRows(logits, rows);
  out.mapping = mapping;
  out.provenance = provenance;
  return out;
}

void Dataset::Validate() const {
  std::unordered_set<std::string> ids;
  const int num_classes = NumClasses();
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    if (s.id.empty()) {
      Fail(ErrorCode::kFormat, "row " + std::to_string(i) + ": empty id");
    }
    if (!ids.insert(s.id).second) {
      Fail(ErrorCode::kFormat, "duplicate sample id '" + s.id + "'");
    }
    if (s.label < 0 || s.label >= num_classes) {
      Fail(ErrorCode::kFormat, "row " + std::to_string(i) + ": label out of range");
    }
    if (s.attribute && !mapping.empty()) {
      if (*s.attribute < 0 || *s.attribute >= static_cast<int>(mapping.size())) {
        Fail(ErrorCode::kFormat,
             "row " + std::to_string(i) + ": attribute outside mapping");
      }
      const bool conflicting = mapping[*s.attribute] != s.label;
      if (!s.bias_conflicting || *s.bias_conflicting != conflicting) {
        Fail(ErrorCode::kFormat, "row " + std::to_string(i) +
                                     ": bias_conflicting inconsistent with mapping");
      }
    }
  }
  CheckBlock(features, "features", samples.size());
  CheckBlock(embedding, "embedding", samples.size());
  CheckBlock(logits, "logits", samples.size());
}

bool Dataset::operator==(const Dataset& other) const {
  auto same_block = [](const std::optional<MatrixF>& a,
                       const std::optional<MatrixF>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    if (a->rows() != b->rows() || a->cols() != b->cols()) return false;
    return std::equal(a->data(), a->data() + a->size(), b->data());
  };
  return samples == other.samples && mapping == other.mapping &&
         same_block(features, other.features) &&
         same_block(embedding, other.embedding) &&
         same_block(logits, other.logits) && provenance == other.provenance;
}

MatrixD ToDouble(const MatrixF& block) { return block.cast<double>(); }

}  // namespace facts
