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

#include "rforge/refusal.hpp"
#include "rforge/subspace.hpp"

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rforge {

/// A closed-form edit of one linear layer, kept factored as (lambda, U_k,
/// r_hat). The implied edit matrix I - lambda U_k r_hat r_hat^T U_k^T / |r_hat|^2
/// is never formed by the patching routines.
struct WeightPatch {
    double lambda = kDefaultLambda;
    std::shared_ptr<const ConceptSubspace> subspace;
    std::string target_tensor;
    std::string concept_label;
};

enum class CompositionMode { sequential, summed };

std::string_view to_string(CompositionMode mode);
CompositionMode composition_mode_from_string(std::string_view name);

/// W - lambda (W U_k r_hat)(U_k r_hat)^T / |r_hat|^2, as a rank-1 update.
/// For every x: apply_patch(W, p) x == W subspace_edit(x, *p.subspace, p.lambda).
Matrix apply_patch(const Matrix& w, const WeightPatch& p);

/// The same update written against the full-space refusal vector:
/// W (I - lambda P_k r r^T P_k / (r^T P_k r)) with P_k = U_k U_k^T.
Matrix apply_patch_fullspace(const Matrix& w, const RefusalVector& r, const Matrix& basis, double lambda);

/// W (I - lambda v v^T / |v|^2). Used for refusal-only (full-space) patches.
Matrix apply_direction_patch(const Matrix& w, const Vector& direction, double lambda);

struct CompositionResult {
    Matrix weights;
    /// Spectral norm of sum_k lambda_k v_k v_k^T / |v_k|^2 (summed mode only; 0 otherwise).
    double summed_edit_norm = 0.0;
    std::vector<std::string> warnings;
};

/// sequential: W (I - P_1)(I - P_2)...; summed: W (I - sum_k P_k).
CompositionResult compose_patches(const Matrix& w, std::span<const WeightPatch> patches,
                                  CompositionMode mode = CompositionMode::sequential);

/// Applies the input-space edits that `patches` encode, in the order that
/// makes compose_patches(W, ...) x == W edit_input(x, ...).
Vector edit_input(const Vector& x, std::span<const WeightPatch> patches,
                  CompositionMode mode = CompositionMode::sequential);

/// Dense H x H edit matrix of one patch. Diagnostics and tests only.
Matrix edit_matrix(const ConceptSubspace& s, double lambda);

struct EquivalenceReport {
    Index trials = 0;
    double tolerance = 0.0;
    /// max over trials of |W_patched x - W edit(x)| / (|W|_F |x|)
    double max_relative_deviation = 0.0;
    bool pass = false;
};

/// Compares a patched weight matrix against the input-space edit on
/// standard-normal probes drawn from `seed`.
EquivalenceReport verify_patched(const Matrix& w, const Matrix& patched, std::span<const WeightPatch> patches,
                                 CompositionMode mode, Index trials, double tol, std::uint64_t seed);

/// verify_patched(w, apply_patch(w, p), {p}, ...)
EquivalenceReport verify_equivalence(const Matrix& w, const WeightPatch& p, Index trials, double tol,
                                     std::uint64_t seed);

struct PatchRecord {
    std::string target_tensor;
    std::string concept_label;
    double lambda = kDefaultLambda;
    std::filesystem::path subspace_dir;
};

/// On-disk description of a patch bundle.
struct PatchManifest {
    std::string model_label;
    CompositionMode composition_mode = CompositionMode::sequential;
    std::vector<PatchRecord> patches;
};

/// Throws DomainError if two records share (target_tensor, concept_label).
void validate_manifest(const PatchManifest& m);

void save_patch_manifest(const std::filesystem::path& path, const PatchManifest& m);
PatchManifest load_patch_manifest(const std::filesystem::path& path);

} // namespace rforge
