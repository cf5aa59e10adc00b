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

#include "rforge/activation_store.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace rforge {

/// Norms at or below this are treated as zero.
inline constexpr double kDegenerateNorm = 1e-12;

/// Default concept suppression factor.
inline constexpr double kDefaultLambda = 1.0;

/// Mean difference of paired unsafe and safe activations at one layer.
struct RefusalVector {
    Vector direction;
    int layer_id = 0;
    Modality modality = Modality::text;
    Index n_pairs = 0;
    double norm = 0.0;

    bool degenerate() const { return norm <= kDegenerateNorm; }
    Index dim() const { return direction.size(); }

    /// Builds a vector from a raw direction; `norm` is computed.
    static RefusalVector from_direction(Vector direction, int layer_id = 0, Modality modality = Modality::text,
                                        Index n_pairs = 1);
};

/// (1/n) * sum_i (unsafe_i - safe_i). A zero result is returned, not
/// thrown; check degenerate().
RefusalVector extract_refusal(const ActivationSet& unsafe, const ActivationSet& safe);

/// x - lambda * <x, r/|r|> r/|r|.
Vector project_edit(const Vector& x, const RefusalVector& r, double lambda = kDefaultLambda);

/// Cosine of the angle between x and r.
double refusal_alignment(const Vector& x, const RefusalVector& r);

/// Rejects negative or non-finite lambda. Returns a warning for lambda > 2,
/// where the edit overshoots and starts to amplify the reflected component.
std::optional<std::string> check_lambda(double lambda);

/// Writes `<dir>/direction.npy` and `<dir>/meta.json`.
void save_refusal(const std::filesystem::path& dir, const RefusalVector& r);
RefusalVector load_refusal(const std::filesystem::path& dir, const ReadOptions& opts = {});

} // namespace rforge
