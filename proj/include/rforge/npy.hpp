// Copyright 2026 The refusal-forge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "rforge/linalg.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace rforge {

enum class Dtype { f32, f64 };

std::string_view to_string(Dtype dtype);
Dtype dtype_from_string(std::string_view name);

/// Default cap on the size of any file the readers will touch.
inline constexpr std::uintmax_t kDefaultMaxFileBytes = std::uintmax_t{4} << 30;

struct ReadOptions {
    std::uintmax_t max_bytes = kDefaultMaxFileBytes;
};

/// A decoded NPY array. Rank-1 payloads are held as a 1 x n matrix; `shape`
/// keeps the on-disk rank.
struct NpyArray {
    std::vector<std::size_t> shape;
    Dtype dtype = Dtype::f64;
    Matrix data;
};

/// Reads an NPY v1.0 little-endian C-order array of rank 1 or 2 holding
/// '<f4' or '<f8'. Payloads are widened to double.
NpyArray read_npy(const std::filesystem::path& path, const ReadOptions& opts = {});

/// read_npy(...).data
Matrix read_tensor(const std::filesystem::path& path, const ReadOptions& opts = {});

/// Reads a rank-1 array, or a rank-2 array with a single row or column.
Vector read_vector(const std::filesystem::path& path, const ReadOptions& opts = {});

/// Writes `m` as a rank-2 array. The bytes match what numpy.save produces for
/// the same array. f64 -> f32 narrowing rounds to nearest-even. The file is
/// written to a temporary sibling and renamed into place.
void write_tensor(const std::filesystem::path& path, const Matrix& m, Dtype dtype = Dtype::f64);

/// Writes `v` as a rank-1 array.
void write_vector(const std::filesystem::path& path, const Vector& v, Dtype dtype = Dtype::f64);

/// Encodes an array into NPY bytes.
std::vector<char> encode_npy(const std::vector<std::size_t>& shape, const double* data, Dtype dtype);

/// Writes `bytes` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

} // namespace rforge
