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
#include "rforge/linalg.hpp"
#include "rforge/refusal.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace rforge {

/// Default subspace rank, capped at the activation dimension.
inline constexpr Index kDefaultRank = 100;

/// Default neutral-suppression weight for contrastive PCA.
inline constexpr double kDefaultAlpha = 1.0;

/// min(kDefaultRank, dim)
Index default_rank(Index dim);

/// Rank-k concept subspace: orthonormal basis U_k and the refusal direction
/// expressed in that basis, r_hat = U_k^T r.
struct ConceptSubspace {
    Matrix basis;       ///< H x k, orthonormal columns
    Vector r_hat;       ///< k
    Vector eigenvalues; ///< full spectrum of the decomposed matrix, in basis order
    double alpha = 0.0; ///< 0 for plain PCA
    EigenOrder ordering = EigenOrder::signed_descending;

    int layer_id = 0;
    Modality modality = Modality::text;
    Index n_pairs = 0;
    double refusal_norm = 0.0;

    std::vector<std::string> warnings;

    Index rank() const { return basis.cols(); }
    Index dim() const { return basis.rows(); }

    /// The refusal direction re-projected to the full space, U_k r_hat.
    Vector concept_direction() const { return basis * r_hat; }
};

/// Throws DomainError if the basis is not orthonormal to `tol` (max-abs of
/// U^T U - I) or if r_hat / eigenvalues have inconsistent sizes.
void validate_subspace(const ConceptSubspace& s, double tol = 1e-10);

/// PCA on the centred pair differences. rank 0 selects default_rank(H).
ConceptSubspace build_pca_subspace(const ActivationSet& unsafe, const ActivationSet& safe, Index rank = 0,
                                   EigenOrder ordering = EigenOrder::signed_descending);

/// Contrastive PCA: eigenvectors of C_r - alpha * C_e, where C_e is the
/// centred covariance of the neutral set.
ConceptSubspace build_cpca_subspace(const ActivationSet& unsafe, const ActivationSet& safe,
                                    const ActivationSet& neutral, Index rank = 0, double alpha = kDefaultAlpha,
                                    EigenOrder ordering = EigenOrder::signed_descending);

/// Lower-level entry point shared by both builders. `differences` holds one
/// pair difference per row; `neutral` may be null for plain PCA.
ConceptSubspace build_subspace(const Matrix& differences, const RefusalVector& refusal, const Matrix* neutral,
                               Index rank, double alpha, EigenOrder ordering);

/// The full-space refusal edit written as a rank-1 subspace: basis r/|r|,
/// r_hat = |r|. subspace_edit on it equals project_edit.
ConceptSubspace rank_one_subspace(const RefusalVector& r);

/// x - lambda * <U_k^T x, r_hat/|r_hat|> * (U_k r_hat)/|U_k r_hat|
Vector subspace_edit(const Vector& x, const ConceptSubspace& s, double lambda = kDefaultLambda);

enum class Validation { strict, lenient };

/// Writes basis.npy, r_hat.npy, eigenvalues.npy and meta.json into `dir`.
void save_subspace(const std::filesystem::path& dir, const ConceptSubspace& s);

/// Lenient loading skips the orthonormality check, for tools that need to
/// report on a damaged subspace instead of refusing it.
ConceptSubspace load_subspace(const std::filesystem::path& dir, Validation validation = Validation::strict,
                              const ReadOptions& opts = {});

} // namespace rforge
