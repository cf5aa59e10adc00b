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

#include "rforge/linalg.hpp"

#include "rforge/error.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace rforge {

std::string_view to_string(EigenOrder order)
{
    switch (order) {
    case EigenOrder::signed_descending:
        return "signed";
    case EigenOrder::magnitude_descending:
        return "magnitude";
    }
    return "signed";
}

EigenOrder eigen_order_from_string(std::string_view name)
{
    if (name == "signed") {
        return EigenOrder::signed_descending;
    }
    if (name == "magnitude") {
        return EigenOrder::magnitude_descending;
    }
    throw DomainError("unknown eigenvalue ordering '" + std::string(name) + "' (expected signed|magnitude)");
}

void require_finite(const Matrix& m, std::string_view what)
{
    if (!m.allFinite()) {
        throw DomainError(std::string(what) + ": non-finite entry");
    }
}

void require_finite(const Vector& v, std::string_view what)
{
    if (!v.allFinite()) {
        throw DomainError(std::string(what) + ": non-finite entry");
    }
}

Matrix covariance(const Matrix& samples, bool center)
{
    if (samples.rows() == 0 || samples.cols() == 0) {
        throw DomainError("covariance: no samples");
    }
    require_finite(samples, "covariance");

    Matrix c;
    if (center) {
        const Eigen::RowVectorXd mean = samples.colwise().mean();
        const Matrix centred = samples.rowwise() - mean;
        c = centred.transpose() * centred;
    } else {
        c = samples.transpose() * samples;
    }
    return 0.5 * (c + c.transpose());
}

namespace {

void normalise_sign(Eigen::Ref<Vector> v)
{
    Index arg = 0;
    double best = -1.0;
    for (Index i = 0; i < v.size(); ++i) {
        // strict comparison: first index wins among equal magnitudes
        if (std::abs(v[i]) > best) {
            best = std::abs(v[i]);
            arg = i;
        }
    }
    if (v[arg] < 0.0) {
        v = -v;
    }
}

} // namespace

Spectrum sym_eig(const Matrix& m, EigenOrder order)
{
    if (m.rows() != m.cols()) {
        throw DomainError("sym_eig: matrix is not square (" + std::to_string(m.rows()) + "x" +
                          std::to_string(m.cols()) + ")");
    }
    if (m.rows() == 0) {
        throw DomainError("sym_eig: empty matrix");
    }
    require_finite(m, "sym_eig");

    const Matrix sym = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::ComputeEigenvectors);
    if (solver.info() != Eigen::Success) {
        throw DomainError("sym_eig: eigensolver did not converge");
    }

    const Vector& values = solver.eigenvalues();
    const Matrix& vectors = solver.eigenvectors();
    const Index n = values.size();

    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    if (order == EigenOrder::signed_descending) {
        std::stable_sort(perm.begin(), perm.end(), [&](Index a, Index b) { return values[a] > values[b]; });
    } else {
        std::stable_sort(perm.begin(), perm.end(),
                         [&](Index a, Index b) { return std::abs(values[a]) > std::abs(values[b]); });
    }

    Spectrum out;
    out.order = order;
    out.eigenvalues.resize(n);
    out.eigenvectors.resize(n, n);
    for (Index i = 0; i < n; ++i) {
        const Index src = perm[static_cast<std::size_t>(i)];
        out.eigenvalues[i] = values[src];
        out.eigenvectors.col(i) = vectors.col(src);
        normalise_sign(out.eigenvectors.col(i));
    }
    return out;
}

Matrix truncate_basis(const Spectrum& s, Index k)
{
    const Index h = s.eigenvectors.cols();
    if (k < 1 || k > h) {
        throw DomainError("truncate_basis: k=" + std::to_string(k) + " outside [1, " + std::to_string(h) + "]");
    }
    return s.eigenvectors.leftCols(k);
}

namespace {

// Rejects clearly negative eigenvalues and zeroes everything inside the
// numerical-rank floor, n * eps * max|lambda|. Below that floor an eigenvalue
// is rounding noise, and its square root (~1e-8 relative) would dominate
// downstream traces.
void clamp_psd(Vector& eigenvalues, const PsdTolerance& tol)
{
    if (eigenvalues.size() == 0) {
        return;
    }
    const double top = eigenvalues.cwiseAbs().maxCoeff();
    const double reject = tol.reject * std::max(1.0, top);
    const double floor = static_cast<double>(eigenvalues.size()) * std::numeric_limits<double>::epsilon() * top;
    for (Index i = 0; i < eigenvalues.size(); ++i) {
        double& v = eigenvalues[i];
        if (v < -reject) {
            throw DomainError("not PSD: eigenvalue " + std::to_string(v));
        }
        if (v <= floor) {
            v = 0.0;
        }
    }
}

} // namespace

Vector psd_eigenvalues(const Matrix& m, const PsdTolerance& tol)
{
    Spectrum s = sym_eig(m);
    clamp_psd(s.eigenvalues, tol);
    return s.eigenvalues;
}

Matrix psd_sqrt(const Matrix& m, const PsdTolerance& tol)
{
    Spectrum s = sym_eig(m);
    clamp_psd(s.eigenvalues, tol);
    const Vector root = s.eigenvalues.cwiseSqrt();
    const Matrix& v = s.eigenvectors;
    Matrix out = v * root.asDiagonal() * v.transpose();
    return 0.5 * (out + out.transpose());
}

double max_principal_angle(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows()) {
        throw DomainError("max_principal_angle: ambient dimensions differ");
    }
    if (a.cols() != b.cols()) {
        throw DomainError("max_principal_angle: subspace dimensions differ");
    }
    const Matrix residual = b - a * (a.transpose() * b);
    Eigen::JacobiSVD<Matrix> svd(residual);
    const double sine = std::clamp(svd.singularValues()(0), 0.0, 1.0);
    return std::asin(sine);
}

} // namespace rforge
