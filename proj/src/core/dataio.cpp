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

#include "core/dataio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "core/error.hpp"

namespace facts::io {
namespace fs = std::filesystem;

namespace {

void PutLe(std::string& out, uint64_t value, int bytes) {
  for (int i = 0; i < bytes; ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xFF));
  }
}

uint64_t GetLe(const std::string& in, size_t offset, int bytes) {
  uint64_t value = 0;
  for (int i = 0; i < bytes; ++i) {
    value |= static_cast<uint64_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  }
  return value;
}

std::string ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void WriteBytes(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) Fail(ErrorCode::kIo, "write failed for " + path.string());
}

std::vector<std::string> SplitCsvLine(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

int ParseInt(const std::string& text, size_t row, const char* column) {
  try {
    size_t used = 0;
    const int value = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return value;
  } catch (const std::exception&) {
    Fail(ErrorCode::kFormat, "metadata row " + std::to_string(row) + ": bad " +
                                 column + " field '" + text + "'");
  }
}

}  // namespace

std::string EncodeMatrix(const MatrixF& matrix) {
  if (!matrix.allFinite()) {
    Fail(ErrorCode::kNonFinite, "refusing to write matrix with non-finite values");
  }
  std::string out;
  out.reserve(kMatrixHeaderBytes + 4 * static_cast<size_t>(matrix.size()));
  out.append(kMatrixMagic, 4);
  PutLe(out, kMatrixVersion, 2);
  PutLe(out, kDtypeFloat32, 1);
  PutLe(out, 0, 1);
  PutLe(out, static_cast<uint64_t>(matrix.rows()), 8);
  PutLe(out, static_cast<uint64_t>(matrix.cols()), 8);
  for (Eigen::Index i = 0; i < matrix.size(); ++i) {
    PutLe(out, std::bit_cast<uint32_t>(matrix.data()[i]), 4);
  }
  return out;
}

MatrixF DecodeMatrix(const std::string& bytes, const std::string& origin) {
  if (bytes.size() < kMatrixHeaderBytes) {
    Fail(ErrorCode::kFormat, origin + ": truncated header");
  }
  if (std::memcmp(bytes.data(), kMatrixMagic, 4) != 0) {
    Fail(ErrorCode::kBadMagic, origin + ": bad magic");
  }
  const auto version = GetLe(bytes, 4, 2);
  if (version != kMatrixVersion) {
    Fail(ErrorCode::kFormat, origin + ": unsupported version " + std::to_string(version));
  }
  const auto dtype = GetLe(bytes, 6, 1);
  if (dtype != kDtypeFloat32) {
    Fail(ErrorCode::kDtypeMismatch,
         origin + ": dtype mismatch (expected 1, got " + std::to_string(dtype) + ")");
  }
  if (GetLe(bytes, 7, 1) != 0) Fail(ErrorCode::kFormat, origin + ": nonzero reserved byte");
  const uint64_t rows = GetLe(bytes, 8, 8);
  const uint64_t cols = GetLe(bytes, 16, 8);
  if (cols != 0 && rows > (bytes.size() / 4) / cols) {
    Fail(ErrorCode::kFormat, origin + ": payload length does not match header");
  }
  if (bytes.size() != kMatrixHeaderBytes + 4 * rows * cols) {
    Fail(ErrorCode::kFormat, origin + ": payload length does not match header");
  }
  MatrixF out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (uint64_t i = 0; i < rows * cols; ++i) {
    const auto raw = static_cast<uint32_t>(GetLe(bytes, kMatrixHeaderBytes + 4 * i, 4));
    const float value = std::bit_cast<float>(raw);
    if (!std::isfinite(value)) {
      Fail(ErrorCode::kNonFinite, origin + ": non-finite payload value at element " +
                                      std::to_string(i));
    }
    out.data()[i] = value;
  }
  return out;
}

void WriteMatrix(const fs::path& path, const MatrixF& matrix) {
  WriteBytes(path, EncodeMatrix(matrix));
}

MatrixF ReadMatrix(const fs::path& path) {
  return DecodeMatrix(ReadBytes(path), path.string());
}

nlohmann::json Manifest::ToJson() const {
  nlohmann::json blocks = nlohmann::json::object();
  for (const auto& [name, ref] : matrix_blocks) {
    blocks[name] = {{"path", ref.path}, {"rows", ref.rows}, {"cols", ref.cols}};
  }
  nlohmann::json j = {
      {"version", version},
      {"metadata_path", metadata_path},
      {"matrix_blocks", blocks},
  };
  j["mapping"] = mapping.empty() ? nlohmann::json() : nlohmann::json(mapping);
  j["config_echo"] = config_echo;
  return j;
}

Manifest Manifest::FromJson(const nlohmann::json& j) {
  Manifest m;
  try {
    m.version = j.at("version").get<int>();
    m.metadata_path = j.at("metadata_path").get<std::string>();
    for (const auto& [name, ref] : j.at("matrix_blocks").items()) {
      if (name != "features" && name != "embedding" && name != "logits") {
        Fail(ErrorCode::kFormat, "manifest: unknown matrix block '" + name + "'");
      }
      m.matrix_blocks[name] = {ref.at("path").get<std::string>(),
                               ref.at("rows").get<uint64_t>(),
                               ref.at("cols").get<uint64_t>()};
    }
    if (j.contains("mapping") && !j["mapping"].is_null()) {
      m.mapping = j["mapping"].get<std::vector<int>>();
    }
    if (j.contains("config_echo")) m.config_echo = j["config_echo"];
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("manifest: ") + e.what());
  }
  if (m.version != kManifestVersion) {
    Fail(ErrorCode::kFormat, "manifest: unsupported version " + std::to_string(m.version));
  }
  return m;
}

nlohmann::json ReadJsonFile(const fs::path& path) {
  const std::string text = ReadBytes(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
}

void WriteJsonFile(const fs::path& path, const nlohmann::json& j) {
  WriteBytes(path, j.dump(2) + "\n");
}

void WriteTextFile(const fs::path& path, const std::string& text) {
  WriteBytes(path, text);
}

Manifest SaveDataset(const Dataset& dataset, const fs::path& directory) {
  dataset.Validate();
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + directory.string() + ": " + ec.message());

  Manifest manifest;
  manifest.mapping = dataset.mapping;
  manifest.config_echo = dataset.provenance;

  std::string csv = std::string(kMetadataHeader) + "\n";
  for (const auto& s : dataset.samples) {
    if (s.id.find_first_of(",\n\r") != std::string::npos) {
      Fail(ErrorCode::kFormat, "sample id '" + s.id + "' contains a CSV delimiter");
    }
    csv += s.id;
    csv += ',';
    csv += SplitName(s.split);
    csv += ',' + std::to_string(s.label);
    csv += ',' + std::to_string(s.attribute.value_or(-1));
    csv += ',' + std::to_string(s.bias_conflicting ? (*s.bias_conflicting ? 1 : 0) : -1);
    csv += '\n';
  }
  WriteBytes(directory / manifest.metadata_path, csv);

  auto save_block = [&](const std::optional<MatrixF>& block, const std::string& name) {
    if (!block) return;
    const std::string file = name + ".fsmx";
    WriteMatrix(directory / file, *block);
    manifest.matrix_blocks[name] = {file, static_cast<uint64_t>(block->rows()),
                                    static_cast<uint64_t>(block->cols())};
  };
  save_block(dataset.features, "features");
  save_block(dataset.embedding, "embedding");
  save_block(dataset.logits, "logits");

  WriteJsonFile(directory / "manifest.json", manifest.ToJson());
  return manifest;
}

Dataset LoadDataset(const fs::path& manifest_path) {
  const Manifest manifest = Manifest::FromJson(ReadJsonFile(manifest_path));
  const fs::path base = manifest_path.parent_path();

  Dataset ds;
  ds.mapping = manifest.mapping;
  ds.provenance = manifest.config_echo;

  std::istringstream csv(ReadBytes(base / manifest.metadata_path));
  std::string line;
  if (!std::getline(csv, line)) Fail(ErrorCode::kFormat, "metadata: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kMetadataHeader) {
    Fail(ErrorCode::kFormat, "metadata: expected header '" + std::string(kMetadataHeader) + "'");
  }
  size_t row = 0;
  while (std::getline(csv, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = SplitCsvLine(line);
    if (fields.size() != 5) {
      Fail(ErrorCode::kFormat, "metadata row " + std::to_string(row) + ": expected 5 fields");
    }
    Sample s;
    s.id = fields[0];
    if (s.id.empty())
      Fail(ErrorCode::kFormat, "metadata row " + std::to_string(row) + ": empty id field");
    if (fields[1].empty()) {
      Fail(ErrorCode::kFormat, "metadata row " + std::to_string(row) + " (id " + s.id +
                                   "): empty split field");
    }
    try {
      s.split = ParseSplit(fields[1]);
    } catch (const Error&) {
      Fail(ErrorCode::kFormat, "metadata row " + std::to_string(row) + " (id " + s.id +
                                   "): unknown split '" + fields[1] + "'");
    }
    s.label = ParseInt(fields[2], row, "label");
    const int attribute = ParseInt(fields[3], row, "attribute");
    if (attribute >= 0) s.attribute = attribute;
    const int conflicting = ParseInt(fields[4], row, "bias_conflicting");
    if (conflicting >= 0) s.bias_conflicting = conflicting == 1;
    ds.samples.push_back(std::move(s));
    ++row;
  }

  for (const auto& [name, ref] : manifest.matrix_blocks) {
    MatrixF block = ReadMatrix(base / ref.path);
    if (static_cast<uint64_t>(block.rows()) != ref.rows ||
        static_cast<uint64_t>(block.cols()) != ref.cols) {
      Fail(ErrorCode::kFormat, name + " block shape disagrees with manifest");
    }
    if (ref.rows != ds.samples.size()) {
      Fail(ErrorCode::kRowMismatch, name + " block has " + std::to_string(ref.rows) +
                                        " rows but metadata has " +
                                        std::to_string(ds.samples.size()));
    }
    if (name == "features") ds.features = std::move(block);
    if (name == "embedding") ds.embedding = std::move(block);
    if (name == "logits") ds.logits = std::move(block);
  }
  ds.Validate();
  return ds;
}

}  // namespace facts::io
