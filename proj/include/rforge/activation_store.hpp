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
#include "rforge/npy.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rforge {

enum class Role { unsafe, safe, neutral };
enum class Modality { text, image, fused };

std::string_view to_string(Role role);
std::string_view to_string(Modality modality);
Modality modality_from_string(std::string_view name);

/// One activation vector per prompt, stacked as rows.
class ActivationSet {
public:
    ActivationSet(Matrix activations, Role role, int layer_id, Modality modality,
                  std::vector<std::string> prompt_ids);

    const Matrix& activations() const { return activations_; }
    Role role() const { return role_; }
    int layer_id() const { return layer_id_; }
    Modality modality() const { return modality_; }
    const std::vector<std::string>& prompt_ids() const { return prompt_ids_; }

    Index size() const { return activations_.rows(); }
    Index dim() const { return activations_.cols(); }

private:
    Matrix activations_;
    Role role_;
    int layer_id_;
    Modality modality_;
    std::vector<std::string> prompt_ids_;
};

/// Throws DomainError("unpaired sets: ...") unless the two sets can be
/// matched element-wise: same size, dimension, layer, modality and prompt ids.
void check_pairing(const ActivationSet& unsafe, const ActivationSet& safe);

struct PairEntry {
    std::filesystem::path unsafe;
    std::filesystem::path safe;
    std::string prompt_id;
};

/// Paths are stored as written in the JSON; relative paths resolve against
/// `base_dir` (the manifest's directory).
struct SetManifest {
    int layer_id = 0;
    Modality modality = Modality::text;
    std::vector<PairEntry> pairs;
    std::vector<std::filesystem::path> neutral;
    std::filesystem::path base_dir;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
};

struct LoadedSets {
    SetManifest manifest;
    ActivationSet unsafe;
    ActivationSet safe;
    std::optional<ActivationSet> neutral;

    Index dim() const { return unsafe.dim(); }
};

/// Parses a manifest file without touching the tensors it references.
SetManifest parse_manifest(const std::filesystem::path& path);

/// Parses a manifest and loads every referenced tensor. Each pair file holds
/// exactly one vector; a neutral file may hold one vector or an m x H block.
LoadedSets load_manifest(const std::filesystem::path& path, const ReadOptions& opts = {});

/// Writes `m` as manifest JSON (paths written as given).
void save_manifest(const std::filesystem::path& path, const SetManifest& m);

} // namespace rforge
