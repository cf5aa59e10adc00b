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

#include "rforge/subspace.hpp"

#include "rforge/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rforge {

namespace fs = std::filesystem;
using nlohmann::json;

Index default_rank(Index dim)
{
    return std::min(kDefaultRank, dim);
}

void validate_subspace(const ConceptSubspace& s, double tol)
{
    const Index k = s.rank();
    if (k < 1 || s.dim() < k) {
        throw DomainError("subspace: basis must be H x k with 1 <= k <= H");
    }
    if (s.r_hat.size() != k) {
        throw DomainError("subspace: r_hat has " + std::to_string(s.r_hat.size()) + " entries for rank " +
                          std::to_string(k));
    }
    if (s.eigenvalues.size() < k) {
        throw DomainError("subspace: fewer eigenvalues than basis columns");
    }
    require_finite(s.basis, "subspace basis");
    require_finite(s.r_hat, "subspace r_hat");
    const double err = (s.basis.transpose() * s.basis - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
    if (err > tol) {
        throw DomainError("subspace: basis columns are not orthonormal (max |U^T U - I| = " + std::to_string(err) + ")");
    }
}

ConceptSubspace build_subspace(const Matrix& differences, const RefusalVector& refusal, const Matrix* neutral,
                               Index rank, double alpha, EigenOrder ordering)
{
    const Index h = differences.cols();
    if (refusal.dim() != h) {
        throw DomainError("shape: refusal vector and differences disagree on H");
    }
    if (rank == 0) {
        rank = default_rank(h);
    }
    if (rank < 1 || rank > h) {
        throw DomainError("rank k=" + std::to_string(rank) + " outside [1, H=" + std::to_string(h) + "]");
    }
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) {
        throw DomainError("alpha must be a finite value >= 0");
    }

    ConceptSubspace s;
    if (differences.rows() < 2) {
        s.warnings.emplace_back("degenerate covariance: fewer than 2 pairs, centred differences are all zero");
    }

    Matrix c = covariance(differences, /*center=*/true);
    const double scale = std::max(1.0, differences.squaredNorm());
    if (differences.rows() >= 2 && c.norm() <= kDegenerateNorm * scale) {
        s.warnings.emplace_back("degenerate covariance: all pair differences are identical; basis comes from tie-breaking");
    }
    if (neutral != nullptr) {
        if (neutral->cols() != h) {
            throw DomainError("dimension mismatch: neutral set has H=" + std::to_string(neutral->cols()));
        }
        c -= alpha * covariance(*neutral, /*center=*/true);
    }

    const Spectrum spec = sym_eig(c, ordering);
    s.basis = truncate_basis(spec, rank);
    s.eigenvalues = spec.eigenvalues;
    s.r_hat = s.basis.transpose() * refusal.direction;
    s.alpha = neutral != nullptr ? alpha : 0.0;
    s.ordering = ordering;
    s.layer_id = refusal.layer_id;
    s.modality = refusal.modality;
    s.n_pairs = refusal.n_pairs;
    s.refusal_norm = refusal.norm;
    if (s.r_hat.norm() <= kDegenerateNorm) {
        s.warnings.emplace_back("concept not in subspace: |r_hat| is zero, edits will be refused");
    }
    return s;
}

ConceptSubspace build_pca_subspace(const ActivationSet& unsafe, const ActivationSet& safe, Index rank,
                                   EigenOrder ordering)
{
    const RefusalVector r = extract_refusal(unsafe, safe);
    const Matrix diffs = unsafe.activations() - safe.activations();
    return build_subspace(diffs, r, nullptr, rank, 0.0, ordering);
}

ConceptSubspace build_cpca_subspace(const ActivationSet& unsafe, const ActivationSet& safe,
                                    const ActivationSet& neutral, Index rank, double alpha, EigenOrder ordering)
{
    if (neutral.size() == 0) {
        throw DomainError("empty neutral set: use build_pca_subspace");
    }
    const RefusalVector r = extract_refusal(unsafe, safe);
    const Matrix diffs = unsafe.activations() - safe.activations();
    return build_subspace(diffs, r, &neutral.activations(), rank, alpha, ordering);
}

ConceptSubspace rank_one_subspace(const RefusalVector& r)
{
    if (r.degenerate()) {
        throw DomainError("degenerate refusal vector (norm " + std::to_string(r.norm) + ")");
    }
    ConceptSubspace s;
    s.basis = r.direction / r.norm;
    s.r_hat = Vector::Constant(1, r.norm);
    s.eigenvalues = Vector::Constant(1, r.norm * r.norm);
    s.layer_id = r.layer_id;
    s.modality = r.modality;
    s.n_pairs = r.n_pairs;
    s.refusal_norm = r.norm;
    return s;
}

Vector subspace_edit(const Vector& x, const ConceptSubspace& s, double lambda)
{
    check_lambda(lambda);
    if (x.size() != s.dim()) {
        throw DomainError("shape: input has H=" + std::to_string(x.size()) + ", subspace H=" + std::to_string(s.dim()));
    }
    const double rn = s.r_hat.norm();
    if (rn <= kDegenerateNorm) {
        throw DomainError("concept not in subspace: |r_hat| = " + std::to_string(rn));
    }
    const Vector x_hat = s.basis.transpose() * x;
    const Vector r_star = s.basis * s.r_hat;
    const double coef = x_hat.dot(s.r_hat) / rn;
    return x - (lambda * coef / r_star.norm()) * r_star;
}

void save_subspace(const fs::path& dir, const ConceptSubspace& s)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(dir.string() + ": cannot create directory: " + ec.message());
    }
    write_tensor(dir / "basis.npy", s.basis, Dtype::f64);
    write_vector(dir / "r_hat.npy", s.r_hat, Dtype::f64);
    write_vector(dir / "eigenvalues.npy", s.eigenvalues, Dtype::f64);
    const json meta = {
        {"alpha", s.alpha},
        {"rank", s.rank()},
        {"layer_id", s.layer_id},
        {"modality", std::string(to_string(s.modality))},
        {"ordering", std::string(to_string(s.ordering))},
        {"n_pairs", s.n_pairs},
        {"refusal_norm", s.refusal_norm},
        {"warnings", s.warnings},
    };
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

ConceptSubspace load_subspace(const fs::path& dir, Validation validation, const ReadOptions& opts)
{
    const fs::path meta_path = dir / "meta.json";
    std::ifstream in(meta_path);
    if (!in) {
        throw IoError(meta_path.string() + ": cannot open");
    }
    ConceptSubspace s;
    try {
        const json meta = json::parse(in);
        s.alpha = meta.at("alpha").get<double>();
        s.layer_id = meta.at("layer_id").get<int>();
        s.modality = modality_from_string(meta.at("modality").get<std::string>());
        s.ordering = eigen_order_from_string(meta.at("ordering").get<std::string>());
        s.n_pairs = meta.value("n_pairs", Index{0});
        s.refusal_norm = meta.value("refusal_norm", 0.0);
        s.warnings = meta.value("warnings", std::vector<std::string>{});
        s.basis = read_tensor(dir / "basis.npy", opts);
        s.r_hat = read_vector(dir / "r_hat.npy", opts);
        s.eigenvalues = read_vector(dir / "eigenvalues.npy", opts);
        if (meta.at("rank").get<Index>() != s.basis.cols()) {
            throw FormatError(meta_path.string() + ": rank disagrees with basis.npy");
        }
    } catch (const json::exception& e) {
        throw FormatError(meta_path.string() + ": " + e.what());
    }
    if (validation == Validation::strict) {
        validate_subspace(s);
    } else if (s.r_hat.size() != s.rank()) {
        throw DomainError("subspace: r_hat has " + std::to_string(s.r_hat.size()) + " entries for rank " +
                          std::to_string(s.rank()));
    }
    return s;
}

} // namespace rforge
