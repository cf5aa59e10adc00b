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

#include <Eigen/Core>

#include <string_view>

namespace rforge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Ordering applied to eigenpairs returned by sym_eig.
enum class EigenOrder {
    signed_descending,    ///< largest signed eigenvalue first (contrastive PCA convention)
    magnitude_descending, ///< largest |eigenvalue| first (literal SVD reading)
};

std::string_view to_string(EigenOrder order);
EigenOrder eigen_order_from_string(std::string_view name);

/// Eigenpairs of a symmetric matrix. Column i of `eigenvectors` belongs to
/// `eigenvalues[i]`; columns are orthonormal and sign-normalised so that the
/// entry of largest magnitude is positive.
struct Spectrum {
    Vector eigenvalues;
    Matrix eigenvectors;
    EigenOrder order = EigenOrder::signed_descending;
};

/// Eigenvalues below -reject * max(1, largest |eigenvalue|) mean the input is
/// not PSD; anything between that and zero is rounding noise and clamped.
/// Eigenvalues within n * eps * max|eigenvalue| of zero are set to exactly 0.
struct PsdTolerance {
    double reject = 1e-6;
};

/// Throws DomainError naming `what` if any entry is NaN or infinite.
void require_finite(const Matrix& m, std::string_view what);
void require_finite(const Vector& v, std::string_view what);

/// Sum of (centred) outer products of the rows of `samples`: an H x H matrix
/// for n x H input. No 1/n normalisation.
Matrix covariance(const Matrix& samples, bool center);

/// Symmetric eigendecomposition. The input is symmetrised as (m + m^T) / 2.
/// Ties in the requested ordering keep the solver's column order.
Spectrum sym_eig(const Matrix& m, EigenOrder order = EigenOrder::signed_descending);

/// First k eigenvector columns of `s`.
Matrix truncate_basis(const Spectrum& s, Index k);

/// Eigenvalues of a symmetric PSD matrix with tiny negatives clamped to zero.
Vector psd_eigenvalues(const Matrix& m, const PsdTolerance& tol = {});

/// Principal square root S of a symmetric PSD matrix, S * S = m.
Matrix psd_sqrt(const Matrix& m, const PsdTolerance& tol = {});

/// Largest principal angle (radians) between the column spans of two
/// matrices with orthonormal columns, computed from the sine so that angles
/// near zero keep full precision.
double max_principal_angle(const Matrix& a, const Matrix& b);

} // namespace rforge
