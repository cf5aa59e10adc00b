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

#include "rforge/patch.hpp"

#include "rforge/error.hpp"

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <utility>

namespace rforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(CompositionMode mode)
{
    return mode == CompositionMode::sequential ? "sequential" : "summed";
}

CompositionMode composition_mode_from_string(std::string_view name)
{
    if (name == "sequential") {
        return CompositionMode::sequential;
    }
    if (name == "summed") {
        return CompositionMode::summed;
    }
    throw DomainError("unknown composition mode '" + std::string(name) + "' (expected sequential|summed)");
}

namespace {

void check_columns(const Matrix& w, Index dim, const std::string& target)
{
    if (w.cols() != dim) {
        throw DomainError("shape: tensor '" + target + "' has " + std::to_string(w.cols()) + " columns, subspace H=" +
                          std::to_string(dim));
    }
}

const ConceptSubspace& subspace_of(const WeightPatch& p)
{
    if (!p.subspace) {
        throw DomainError("patch '" + p.concept_label + "' has no subspace");
    }
    return *p.subspace;
}

// The rank-1 factor of one patch: the update is W - coef * (W v) v^T.
struct RankOne {
    Vector v;
    double coef = 0.0;
};

RankOne factor(const WeightPatch& p)
{
    const ConceptSubspace& s = subspace_of(p);
    check_lambda(p.lambda);
    const double rn2 = s.r_hat.squaredNorm();
    if (std::sqrt(rn2) <= kDegenerateNorm) {
        throw DomainError("concept not in subspace: refusing to patch with |r_hat| = 0");
    }
    return {s.basis * s.r_hat, p.lambda / rn2};
}

Matrix rank_one_update(const Matrix& w, const Vector& v, double coef)
{
    if (coef == 0.0) {
        return w;
    }
    const Vector wv = w * v;
    return w - coef * wv * v.transpose();
}

} // namespace

Matrix apply_patch(const Matrix& w, const WeightPatch& p)
{
    check_columns(w, subspace_of(p).dim(), p.target_tensor);
    const RankOne f = factor(p);
    return rank_one_update(w, f.v, f.coef);
}

Matrix apply_patch_fullspace(const Matrix& w, const RefusalVector& r, const Matrix& basis, double lambda)
{
    check_lambda(lambda);
    check_columns(w, basis.rows(), "weights");
    if (r.dim() != basis.rows()) {
        throw DomainError("shape: refusal vector H=" + std::to_string(r.dim()) + ", basis H=" +
                          std::to_string(basis.rows()));
    }
    const Vector pr = basis * (basis.transpose() * r.direction);
    const double denom = r.direction.dot(pr);
    if (denom <= kDegenerateNorm) {
        throw DomainError("concept not in subspace: r^T P_k r = " + std::to_string(denom));
    }
    return rank_one_update(w, pr, lambda / denom);
}

Matrix apply_direction_patch(const Matrix& w, const Vector& direction, double lambda)
{
    check_lambda(lambda);
    check_columns(w, direction.size(), "weights");
    const double n2 = direction.squaredNorm();
    if (std::sqrt(n2) <= kDegenerateNorm) {
        throw DomainError("degenerate refusal vector: cannot patch along a zero direction");
    }
    return rank_one_update(w, direction, lambda / n2);
}

CompositionResult compose_patches(const Matrix& w, std::span<const WeightPatch> patches, CompositionMode mode)
{
    CompositionResult out;
    for (const auto& p : patches) {
        check_columns(w, subspace_of(p).dim(), p.target_tensor);
    }
    if (mode == CompositionMode::sequential) {
        out.weights = w;
        for (const auto& p : patches) {
            out.weights = apply_patch(out.weights, p);
        }
        return out;
    }

    const auto n = static_cast<Index>(patches.size());
    std::vector<RankOne> factors;
    factors.reserve(patches.size());
    for (const auto& p : patches) {
        factors.push_back(factor(p));
    }
    out.weights = w;
    for (const auto& f : factors) {
        if (f.coef != 0.0) {
            out.weights.noalias() -= f.coef * (w * f.v) * f.v.transpose();
        }
    }

    if (n > 0) {
        // The nonzero spectrum of sum_k c_k v_k v_k^T equals that of the Gram
        // matrix G_ij = sqrt(c_i c_j) v_i . v_j.
        Matrix gram(n, n);
        for (Index i = 0; i < n; ++i) {
            for (Index j = 0; j < n; ++j) {
                const auto& a = factors[static_cast<std::size_t>(i)];
                const auto& b = factors[static_cast<std::size_t>(j)];
                gram(i, j) = std::sqrt(a.coef * b.coef) * a.v.dot(b.v);
            }
        }
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
        out.summed_edit_norm = es.eigenvalues().cwiseAbs().maxCoeff();
        if (out.summed_edit_norm > 1.0 + 1e-12) {
            out.warnings.push_back("over-suppression: summed edit has spectral norm " +
                                   std::to_string(out.summed_edit_norm) + " > 1; overlapping directions are removed more than once");
        }
    }
    return out;
}

Vector edit_input(const Vector& x, std::span<const WeightPatch> patches, CompositionMode mode)
{
    if (mode == CompositionMode::sequential) {
        Vector y = x;
        for (auto it = patches.rbegin(); it != patches.rend(); ++it) {
            y = subspace_edit(y, subspace_of(*it), it->lambda);
        }
        return y;
    }
    Vector y = x;
    for (const auto& p : patches) {
        y -= x - subspace_edit(x, subspace_of(p), p.lambda);
    }
    return y;
}

Matrix edit_matrix(const ConceptSubspace& s, double lambda)
{
    const Vector v = s.concept_direction();
    const Index h = s.dim();
    return Matrix::Identity(h, h) - (lambda / s.r_hat.squaredNorm()) * v * v.transpose();
}

EquivalenceReport verify_patched(const Matrix& w, const Matrix& patched, std::span<const WeightPatch> patches,
                                 CompositionMode mode, Index trials, double tol, std::uint64_t seed)
{
    if (trials < 1) {
        throw DomainError("trials must be >= 1");
    }
    if (w.rows() != patched.rows() || w.cols() != patched.cols()) {
        throw DomainError("shape: patched tensor is " + std::to_string(patched.rows()) + "x" +
                          std::to_string(patched.cols()) + ", original " + std::to_string(w.rows()) + "x" +
                          std::to_string(w.cols()));
    }
    for (const auto& p : patches) {
        check_columns(w, subspace_of(p).dim(), p.target_tensor);
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    const double w_norm = w.norm();

    EquivalenceReport report;
    report.trials = trials;
    report.tolerance = tol;
    Vector x(w.cols());
    for (Index t = 0; t < trials; ++t) {
        for (Index i = 0; i < x.size(); ++i) {
            x[i] = normal(rng);
        }
        const Vector lhs = patched * x;
        const Vector rhs = w * edit_input(x, patches, mode);
        const double scale = w_norm * x.norm();
        const double dev = scale > 0.0 ? (lhs - rhs).norm() / scale : (lhs - rhs).norm();
        report.max_relative_deviation = std::max(report.max_relative_deviation, dev);
    }
    report.pass = report.max_relative_deviation <= tol;
    return report;
}

EquivalenceReport verify_equivalence(const Matrix& w, const WeightPatch& p, Index trials, double tol,
                                     std::uint64_t seed)
{
    const Matrix patched = apply_patch(w, p);
    return verify_patched(w, patched, std::span<const WeightPatch>(&p, 1), CompositionMode::sequential, trials, tol,
                          seed);
}

void validate_manifest(const PatchManifest& m)
{
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& r : m.patches) {
        if (!seen.emplace(r.target_tensor, r.concept_label).second) {
            throw DomainError("patch manifest lists ('" + r.target_tensor + "', '" + r.concept_label + "') twice");
        }
        check_lambda(r.lambda);
    }
}

void save_patch_manifest(const fs::path& path, const PatchManifest& m)
{
    validate_manifest(m);
    json doc;
    doc["model_label"] = m.model_label;
    doc["composition_mode"] = std::string(to_string(m.composition_mode));
    doc["patches"] = json::array();
    for (const auto& r : m.patches) {
        doc["patches"].push_back({
            {"target_tensor", r.target_tensor},
            {"concept_label", r.concept_label},
            {"lambda", r.lambda},
            {"subspace_dir", r.subspace_dir.string()},
        });
    }
    write_file_atomic(path, doc.dump(2) + "\n");
}

PatchManifest load_patch_manifest(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError(path.string() + ": cannot open patch manifest");
    }
    PatchManifest m;
    try {
        const json doc = json::parse(in);
        m.model_label = doc.value("model_label", std::string{});
        m.composition_mode = composition_mode_from_string(doc.value("composition_mode", std::string{"sequential"}));
        for (const auto& p : doc.at("patches")) {
            m.patches.push_back(PatchRecord{
                p.at("target_tensor").get<std::string>(),
                p.at("concept_label").get<std::string>(),
                p.at("lambda").get<double>(),
                p.at("subspace_dir").get<std::string>(),
            });
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": patch manifest schema: " + e.what());
    }
    validate_manifest(m);
    return m;
}

} // namespace rforge
