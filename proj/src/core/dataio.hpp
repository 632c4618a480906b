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

#ifndef FACTS_CORE_DATAIO_HPP_
#define FACTS_CORE_DATAIO_HPP_

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "core/dataset.hpp"
#include "json.hpp"

namespace facts::io {

// MatrixFile layout (all integers little-endian):
//   offset 0   4 bytes  magic "FSMX"
//   offset 4   u16      version (1)
//   offset 6   u8       dtype (1 = IEEE-754 binary32)
//   offset 7   u8       reserved (0)
//   offset 8   u64      rows
//   offset 16  u64      cols
//   offset 24  rows*cols binary32 values, row-major
inline constexpr char kMatrixMagic[4] = {'F', 'S', 'M', 'X'};
inline constexpr uint16_t kMatrixVersion = 1;
inline constexpr uint8_t kDtypeFloat32 = 1;
inline constexpr size_t kMatrixHeaderBytes = 24;

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kMetadataHeader = "id,split,label,attribute,bias_conflicting";

void WriteMatrix(const std::filesystem::path& path, const MatrixF& matrix);
MatrixF ReadMatrix(const std::filesystem::path& path);

// Encodes/decodes a matrix to the byte layout above without touching disk.
std::string EncodeMatrix(const MatrixF& matrix);
MatrixF DecodeMatrix(const std::string& bytes, const std::string& origin);

struct BlockRef {
  std::string path;
  uint64_t rows = 0;
  uint64_t cols = 0;
};

struct Manifest {
  int version = kManifestVersion;
  std::string metadata_path = "metadata.csv";
  std::map<std::string, BlockRef> matrix_blocks;
  std::vector<int> mapping;
  nlohmann::json config_echo;

  nlohmann::json ToJson() const;
  static Manifest FromJson(const nlohmann::json& j);
};

// Writes manifest.json, metadata.csv and one MatrixFile per present block.
Manifest SaveDataset(const Dataset& dataset, const std::filesystem::path& directory);

// Loads and validates a dataset from its manifest.json path.
Dataset LoadDataset(const std::filesystem::path& manifest_path);

nlohmann::json ReadJsonFile(const std::filesystem::path& path);
void WriteJsonFile(const std::filesystem::path& path, const nlohmann::json& j);
void WriteTextFile(const std::filesystem::path& path, const std::string& text);

}  // namespace facts::io

#endif  // FACTS_CORE_DATAIO_HPP_
