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
#include "rforge/linalg.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace rforge;
using rforge::test::Rng;

TEST_CASE("covariance of a symmetric pair")
{
    Matrix x(2, 2);
    x << 1, 0, -1, 0;
    Matrix want(2, 2);
    want << 2, 0, 0, 0;
    CHECK(covariance(x, true) == want);
}

TEST_CASE("covariance of a single centred sample is zero")
{
    Matrix x(1, 4);
    x << 1, 2, 3, 4;
    CHECK(covariance(x, true).isZero(0.0));
    CHECK(covariance(x, false) == x.transpose() * x);
}

TEST_CASE("covariance matches outer-product accumulation")
{
    Rng rng(11);
    for (bool center : {true, false}) {
        const Matrix x = rng.matrix(5, 3);
        const Matrix c = covariance(x, center);
        CHECK((c - test::naive_covariance(x, center)).cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(c == c.transpose());
    }
}

TEST_CASE("covariance is PSD on random inputs")
{
    Rng rng(12);
    for (int t = 0; t < 20; ++t) {
        const Matrix x = rng.matrix(rng.index(1, 12), rng.index(1, 9));
        const Matrix c = covariance(x, t % 2 == 0);
        CHECK(c == c.transpose());
        const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(c).eigenvalues();
        CHECK(ev.minCoeff() >= -1e-10 * std::max(1.0, c.norm()));
    }
}

TEST_CASE("covariance rejects empty and non-finite input")
{
    CHECK_THROWS_WITH_AS(covariance(Matrix(0, 3), true), doctest::Contains("no samples"), DomainError);
    Matrix x = Matrix::Ones(2, 2);
    x(1, 1) = std::nan("");
    CHECK_THROWS_AS(covariance(x, true), DomainError);
}

TEST_CASE("sym_eig on the identity")
{
    const Spectrum s = sym_eig(Matrix::Identity(3, 3));
    CHECK(s.eigenvalues == Vector::Ones(3));
    CHECK((s.eigenvectors.transpose() * s.eigenvectors - Matrix::Identity(3, 3)).norm() <= 1e-14);
}

TEST_CASE("sym_eig orders a diagonal by signed value")
{
    const Vector d = (Vector(3) << 3, -1, 2).finished();
    const Spectrum s = sym_eig(d.asDiagonal().toDenseMatrix());
    CHECK(s.eigenvalues == (Vector(3) << 3, 2, -1).finished());
    CHECK(s.eigenvectors == (Matrix(3, 3) << 1, 0, 0, 0, 0, 1, 0, 1, 0).finished());

    const Spectrum m = sym_eig((Vector(3) << 3, -5, 2).finished().asDiagonal().toDenseMatrix(),
                               EigenOrder::magnitude_descending);
    CHECK(m.eigenvalues == (Vector(3) << -5, 3, 2).finished());
}

TEST_CASE("sym_eig residuals and reconstruction")
{
    Rng rng(13);
    for (Index n : {1, 2, 8, 20}) {
        const Matrix a = rng.symmetric(n);
        const Spectrum s = sym_eig(a);
        for (Index i = 0; i < n; ++i) {
            const Vector v = s.eigenvectors.col(i);
            CHECK((a * v - s.eigenvalues(i) * v).norm() <= 1e-9);
            CHECK(std::abs(v.norm() - 1.0) <= 1e-12);
            if (i > 0) {
                CHECK(s.eigenvalues(i - 1) >= s.eigenvalues(i));
            }
        }
        const Matrix back = s.eigenvectors * s.eigenvalues.asDiagonal() * s.eigenvectors.transpose();
        CHECK((back - a).norm() / a.norm() <= 1e-8);
    }
}

TEST_CASE("sym_eig sign convention makes the largest entry positive")
{
    Rng rng(14);
    const Spectrum s = sym_eig(rng.symmetric(10));
    for (Index j = 0; j < 10; ++j) {
        Index at = 0;
        s.eigenvectors.col(j).cwiseAbs().maxCoeff(&at);
        CHECK(s.eigenvectors(at, j) > 0.0);
    }
}

TEST_CASE("sym_eig is deterministic")
{
    Rng rng(15);
    const Matrix a = rng.symmetric(12);
    const Spectrum s1 = sym_eig(a);
    const Spectrum s2 = sym_eig(a);
    CHECK(s1.eigenvalues == s2.eigenvalues);
    CHECK(s1.eigenvectors == s2.eigenvectors);
}

TEST_CASE("sym_eig rejects non-square input")
{
    CHECK_THROWS_AS(sym_eig(Matrix::Zero(2, 3)), DomainError);
}

TEST_CASE("truncate_basis")
{
    SUBCASE("k = H gives an orthonormal full basis")
    {
        Rng rng(16);
        const Matrix u = truncate_basis(sym_eig(rng.symmetric(7)), 7);
        CHECK((u.transpose() * u - Matrix::Identity(7, 7)).cwiseAbs().maxCoeff() <= 1e-10);
    }
    SUBCASE("k = 1 on diag(3,2,1) picks the first axis")
    {
        const Matrix u = truncate_basis(sym_eig((Vector(3) << 3, 2, 1).finished().asDiagonal().toDenseMatrix()), 1);
        CHECK(std::abs(std::abs(u(0, 0)) - 1.0) <= 1e-15);
    }
    SUBCASE("k = 2 spans the oracle's top plane")
    {
        // Planted spectrum: known eigenvectors with eigenvalues 9, 5, then <= 1.
        Rng rng(17);
        const Matrix q = rng.orthonormal(6, 6);
        const Vector lam = (Vector(6) << 9, 5, 1, 0.5, 0.25, 0).finished();
        const Matrix a = q * lam.asDiagonal() * q.transpose();
        const Matrix u = truncate_basis(sym_eig(a), 2);
        CHECK(test::projector_gap(u, q.leftCols(2)) <= 1e-8);
        CHECK(max_principal_angle(u, q.leftCols(2)) <= 1e-8);
    }
    SUBCASE("out of range")
    {
        const Spectrum s = sym_eig(Matrix::Identity(3, 3));
        CHECK_THROWS_AS(truncate_basis(s, 0), DomainError);
        CHECK_THROWS_AS(truncate_basis(s, 4), DomainError);
    }
}

TEST_CASE("psd_sqrt")
{
    CHECK(psd_sqrt(Matrix::Identity(4, 4)).isApprox(Matrix::Identity(4, 4), 1e-15));
    const Matrix d = psd_sqrt((Vector(2) << 4, 9).finished().asDiagonal().toDenseMatrix());
    CHECK((d - (Vector(2) << 2, 3).finished().asDiagonal().toDenseMatrix()).norm() <= 1e-14);

    Rng rng(18);
    for (Index rank : {5, 3}) {
        const Matrix a = rng.psd(5, rank);
        const Matrix s = psd_sqrt(a);
        CHECK((s * s - a).norm() <= 1e-9 * std::max(1.0, a.norm()));
        CHECK(s == s.transpose());
    }
}

TEST_CASE("psd_sqrt clamps round-off but rejects negative spectra")
{
    Matrix tiny = Matrix::Zero(2, 2);
    tiny(0, 0) = 1.0;
    tiny(1, 1) = -1e-11;
    CHECK(psd_sqrt(tiny)(1, 1) == 0.0);

    Matrix neg = Matrix::Identity(2, 2);
    neg(1, 1) = -1e-3;
    CHECK_THROWS_WITH_AS(psd_sqrt(neg), doctest::Contains("not PSD"), DomainError);
}

TEST_CASE("max_principal_angle")
{
    Matrix e1 = Matrix::Zero(3, 1);
    e1(0, 0) = 1;
    Matrix e2 = Matrix::Zero(3, 1);
    e2(1, 0) = 1;
    Matrix diag = Matrix::Zero(3, 1);
    diag(0, 0) = diag(1, 0) = 1 / std::sqrt(2.0);
    CHECK(max_principal_angle(e1, e1) <= 1e-15);
    CHECK(std::abs(max_principal_angle(e1, e2) - M_PI / 2) <= 1e-12);
    CHECK(std::abs(max_principal_angle(e1, diag) - M_PI / 4) <= 1e-12);

    Rng rng(19);
    const Matrix a = rng.orthonormal(8, 3);
    const Matrix rot = rng.orthonormal(3, 3);
    CHECK(max_principal_angle(a, a * rot) <= 1e-12);
}
