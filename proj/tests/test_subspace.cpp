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

#include "rforge/error.hpp"
#include "rforge/refusal.hpp"
#include "rforge/subspace.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace rforge;
using rforge::test::make_set;
using rforge::test::Rng;
using rforge::test::TempDir;

namespace {

struct Pairs {
    ActivationSet unsafe;
    ActivationSet safe;
};

Pairs random_pairs(Rng& rng, Index n, Index h)
{
    const Matrix s = rng.matrix(n, h);
    return {make_set(s + rng.matrix(n, h), Role::unsafe), make_set(s, Role::safe)};
}

} // namespace

TEST_CASE("default rank caps at H")
{
    CHECK(default_rank(64) == 64);
    CHECK(default_rank(100) == 100);
    CHECK(default_rank(4096) == 100);
}

TEST_CASE("PCA subspace structure")
{
    Rng rng(51);
    const Pairs p = random_pairs(rng, 8, 12);
    const ConceptSubspace s = build_pca_subspace(p.unsafe, p.safe, 4);
    CHECK(s.rank() == 4);
    CHECK(s.dim() == 12);
    CHECK(s.alpha == 0.0);
    CHECK((s.basis.transpose() * s.basis - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10);
    const RefusalVector r = extract_refusal(p.unsafe, p.safe);
    CHECK((s.r_hat - s.basis.transpose() * r.direction).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(s.eigenvalues.size() == 12);
    CHECK_NOTHROW(validate_subspace(s));

    // Oracle: top-4 eigenvectors of the by-hand centred difference covariance.
    const Matrix diffs = p.unsafe.activations() - p.safe.activations();
    Eigen::SelfAdjointEigenSolver<Matrix> es(test::naive_covariance(diffs, true));
    const Matrix top = es.eigenvectors().rightCols(4);
    CHECK(test::projector_gap(s.basis, top) <= 1e-8);
}

TEST_CASE("PCA with identical differences warns")
{
    Rng rng(52);
    const Matrix safe = rng.matrix(4, 6);
    const Matrix unsafe = safe.rowwise() + rng.vector(6).transpose();
    const ConceptSubspace s = build_pca_subspace(make_set(unsafe, Role::unsafe), make_set(safe, Role::safe), 2);
    REQUIRE(!s.warnings.empty());
    CHECK(s.warnings[0].find("degenerate covariance") != std::string::npos);
    CHECK_NOTHROW(validate_subspace(s));
}

TEST_CASE("PCA with one pair warns")
{
    Rng rng(53);
    const Pairs p = random_pairs(rng, 1, 5);
    const ConceptSubspace s = build_pca_subspace(p.unsafe, p.safe, 3);
    REQUIRE(!s.warnings.empty());
    CHECK(s.warnings[0].find("degenerate covariance") != std::string::npos);
}

TEST_CASE("PCA recovers a planted axis")
{
    Rng rng(54);
    const Index n = 20, h = 10;
    Matrix safe = rng.matrix(n, h);
    Matrix unsafe = safe;
    for (Index i = 0; i < n; ++i) {
        unsafe(i, 0) += 3.0 * rng.normal();
        unsafe.row(i) += 1e-3 * rng.vector(h).transpose();
    }
    const ConceptSubspace s = build_pca_subspace(make_set(unsafe, Role::unsafe), make_set(safe, Role::safe), 1);
    CHECK(std::abs(s.basis(0, 0)) >= 0.999);
}

TEST_CASE("rank out of range")
{
    Rng rng(55);
    const Pairs p = random_pairs(rng, 5, 6);
    CHECK_THROWS_AS(build_pca_subspace(p.unsafe, p.safe, 7), DomainError);
    CHECK(build_pca_subspace(p.unsafe, p.safe).rank() == 6);
}

TEST_CASE("cPCA with alpha = 0 spans the PCA subspace")
{
    Rng rng(56);
    for (int t = 0; t < 10; ++t) {
        const Pairs p = random_pairs(rng, 12, 9);
        const auto neutral = make_set(rng.matrix(30, 9), Role::neutral);
        const Index k = rng.index(1, 8);
        const ConceptSubspace a = build_pca_subspace(p.unsafe, p.safe, k);
        const ConceptSubspace b = build_cpca_subspace(p.unsafe, p.safe, neutral, k, 0.0);
        CHECK(test::projector_gap(a.basis, b.basis) <= 1e-8);
    }
}

TEST_CASE("cPCA separates the concept from a shared confound")
{
    // Differences vary along c and d; neutrals vary strongly along d only.
    Rng rng(57);
    const Index h = 16, n = 40;
    const Matrix q = rng.orthonormal(h, 2);
    const Vector c = q.col(0), d = q.col(1);
    Matrix safe = rng.matrix(n, h) * 0.01;
    Matrix unsafe = safe;
    for (Index i = 0; i < n; ++i) {
        unsafe.row(i) += (2.0 * rng.normal() * c + 2.0 * rng.normal() * d).transpose();
    }
    Matrix neutral(200, h);
    for (Index i = 0; i < 200; ++i) {
        neutral.row(i) = (3.0 * rng.normal() * d + 0.01 * rng.vector(h)).transpose();
    }
    const auto u = make_set(unsafe, Role::unsafe), s = make_set(safe, Role::safe);
    const auto e = make_set(neutral, Role::neutral);

    const ConceptSubspace cpca = build_cpca_subspace(u, s, e, 1, 1.0);
    CHECK(std::abs(cpca.basis.col(0).dot(c)) >= 0.95);
    // alpha = 0 keeps a mixture: the top two directions are c and d in some order.
    const ConceptSubspace pca2 = build_cpca_subspace(u, s, e, 2, 0.0);
    CHECK(test::projector_gap(pca2.basis, q) <= 0.2);

    for (double alpha : {0.5, 1.0, 1.5}) {
        CHECK_NOTHROW(build_cpca_subspace(u, s, e, 3, alpha));
    }
    CHECK(build_cpca_subspace(u, s, e, 3).alpha == 1.0);
    CHECK_THROWS_AS(build_cpca_subspace(u, s, e, 3, -1.0), DomainError);
}

TEST_CASE("cPCA orders by signed eigenvalue by default")
{
    Rng rng(58);
    const Pairs p = random_pairs(rng, 6, 8);
    const auto neutral = make_set(rng.matrix(20, 8) * 3.0, Role::neutral);
    const ConceptSubspace s = build_cpca_subspace(p.unsafe, p.safe, neutral, 8, 1.0);
    CHECK(s.eigenvalues.minCoeff() < 0.0);
    for (Index i = 1; i < s.eigenvalues.size(); ++i) {
        CHECK(s.eigenvalues(i - 1) >= s.eigenvalues(i));
    }
    const ConceptSubspace m = build_cpca_subspace(p.unsafe, p.safe, neutral, 8, 1.0, EigenOrder::magnitude_descending);
    for (Index i = 1; i < m.eigenvalues.size(); ++i) {
        CHECK(std::abs(m.eigenvalues(i - 1)) >= std::abs(m.eigenvalues(i)));
    }
}

TEST_CASE("cPCA rejects a neutral set of different H")
{
    Rng rng(59);
    const Pairs p = random_pairs(rng, 4, 6);
    CHECK_THROWS_WITH(build_cpca_subspace(p.unsafe, p.safe, make_set(rng.matrix(5, 7), Role::neutral), 2),
                      doctest::Contains("dimension mismatch"));
}

TEST_CASE("subspace_edit examples")
{
    Rng rng(60);
    const ConceptSubspace s = test::random_subspace(rng, 10, 4);
    SUBCASE("outside the subspace")
    {
        Vector x = rng.vector(10);
        x -= s.basis * (s.basis.transpose() * x);
        CHECK((subspace_edit(x, s, 1.0) - x).norm() <= 1e-15 * 10);
    }
    SUBCASE("pure concept vanishes")
    {
        CHECK(subspace_edit(s.concept_direction(), s, 1.0).norm() <= 1e-14);
    }
    SUBCASE("full rank equals the full-space edit")
    {
        const Pairs p = random_pairs(rng, 6, 7);
        const ConceptSubspace full = build_pca_subspace(p.unsafe, p.safe, 7);
        const RefusalVector r = extract_refusal(p.unsafe, p.safe);
        for (int t = 0; t < 20; ++t) {
            const Vector x = rng.vector(7);
            const double lambda = rng.uniform(0, 2);
            CHECK((subspace_edit(x, full, lambda) - project_edit(x, r, lambda)).norm() <= 1e-12 * x.norm());
        }
    }
    SUBCASE("degenerate r_hat is refused")
    {
        ConceptSubspace z = s;
        z.r_hat.setZero();
        CHECK_THROWS_WITH(subspace_edit(rng.vector(10), z, 1.0), doctest::Contains("concept not in subspace"));
    }
    SUBCASE("shape mismatch")
    {
        CHECK_THROWS_WITH(subspace_edit(rng.vector(9), s, 1.0), doctest::Contains("shape"));
    }
}

TEST_CASE("subspace_edit properties")
{
    Rng rng(61);
    for (int t = 0; t < 100; ++t) {
        const Index h = rng.index(2, 24);
        const ConceptSubspace s = test::random_subspace(rng, h, rng.index(1, h));
        const Vector x = rng.vector(h);
        const Vector once = subspace_edit(x, s, 1.0);
        const Vector v = s.concept_direction();

        // Isometry of the basis.
        const Vector coeffs = rng.vector(s.rank());
        CHECK(std::abs((s.basis * coeffs).norm() / coeffs.norm() - 1.0) <= 1e-12);
        // Concept nullified at lambda = 1.
        CHECK(std::abs((s.basis.transpose() * once).dot(s.r_hat)) <= 1e-10 * x.norm() * s.r_hat.norm());
        // Change is parallel to U_k r_hat.
        const Vector delta = subspace_edit(x, s, rng.uniform(0, 2)) - x;
        CHECK((delta - delta.dot(v) / v.squaredNorm() * v).norm() <= 1e-12 * x.norm());
        // Idempotent.
        CHECK((subspace_edit(once, s, 1.0) - once).norm() <= 1e-12 * x.norm());
        // lambda = 0 is the identity.
        CHECK(subspace_edit(x, s, 0.0) == x);
    }
}

TEST_CASE("rank_one_subspace reproduces the full-space edit")
{
    Rng rng(62);
    const RefusalVector r = RefusalVector::from_direction(rng.vector(9), 2, Modality::text, 5);
    const ConceptSubspace s = rank_one_subspace(r);
    CHECK(s.rank() == 1);
    for (int t = 0; t < 20; ++t) {
        const Vector x = rng.vector(9);
        CHECK((subspace_edit(x, s, 0.8) - project_edit(x, r, 0.8)).norm() <= 1e-12 * x.norm());
    }
}

TEST_CASE("validate_subspace rejects broken bases")
{
    Rng rng(63);
    ConceptSubspace s = test::random_subspace(rng, 6, 3);
    CHECK_NOTHROW(validate_subspace(s));
    ConceptSubspace scaled = s;
    scaled.basis.col(1) *= 1.01;
    CHECK_THROWS_AS(validate_subspace(scaled), DomainError);
    ConceptSubspace short_r = s;
    short_r.r_hat.resize(2);
    CHECK_THROWS_AS(validate_subspace(short_r), DomainError);
}

TEST_CASE("subspace directory round trip")
{
    TempDir dir;
    Rng rng(64);
    const Pairs p = random_pairs(rng, 5, 8);
    const auto neutral = make_set(rng.matrix(10, 8), Role::neutral);
    const ConceptSubspace s = build_cpca_subspace(p.unsafe, p.safe, neutral, 3, 1.5, EigenOrder::magnitude_descending);
    save_subspace(dir / "s", s);
    for (const char* f : {"basis.npy", "r_hat.npy", "eigenvalues.npy", "meta.json"}) {
        CHECK(std::filesystem::exists(dir / "s" / f));
    }
    const ConceptSubspace back = load_subspace(dir / "s");
    CHECK(back.basis == s.basis);
    CHECK(back.r_hat == s.r_hat);
    CHECK(back.eigenvalues == s.eigenvalues);
    CHECK(back.alpha == 1.5);
    CHECK(back.ordering == EigenOrder::magnitude_descending);
    CHECK(back.layer_id == s.layer_id);
    CHECK(back.warnings == s.warnings);

    // A tampered basis loads only in lenient mode.
    Matrix bad = s.basis;
    bad.col(0) *= 1.01;
    write_tensor(dir / "s/basis.npy", bad);
    CHECK_THROWS_AS(load_subspace(dir / "s"), DomainError);
    CHECK(load_subspace(dir / "s", Validation::lenient).basis == bad);
}
