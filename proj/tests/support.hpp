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

// Test helpers: seeded random inputs and brute-force oracles written without
// the library's own routines.
#pragma once

#include "rforge/activation_store.hpp"
#include "rforge/linalg.hpp"
#include "rforge/subspace.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace rforge::test {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double normal() { return normal_(gen_); }
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
    Index index(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(gen_); }

    Matrix matrix(Index rows, Index cols)
    {
        Matrix m(rows, cols);
        for (Index i = 0; i < rows; ++i) {
            for (Index j = 0; j < cols; ++j) {
                m(i, j) = normal();
            }
        }
        return m;
    }

    Vector vector(Index n) { return matrix(n, 1).col(0); }

    Matrix symmetric(Index n)
    {
        const Matrix a = matrix(n, n);
        return (a + a.transpose()) / 2.0;
    }

    Matrix psd(Index n, Index rank)
    {
        const Matrix a = matrix(n, rank);
        return a * a.transpose();
    }

    /// n x k with orthonormal columns, by modified Gram-Schmidt.
    Matrix orthonormal(Index n, Index k) { return gram_schmidt(matrix(n, k)); }

    std::mt19937_64& engine() { return gen_; }

    static Matrix gram_schmidt(Matrix a)
    {
        for (Index j = 0; j < a.cols(); ++j) {
            for (int pass = 0; pass < 2; ++pass) {
                for (Index i = 0; i < j; ++i) {
                    a.col(j) -= a.col(i).dot(a.col(j)) * a.col(i);
                }
            }
            a.col(j) /= a.col(j).norm();
        }
        return a;
    }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Sum of outer products of (optionally centred) rows, by explicit loops.
inline Matrix naive_covariance(const Matrix& x, bool center)
{
    const Index n = x.rows();
    const Index h = x.cols();
    std::vector<double> mean(static_cast<std::size_t>(h), 0.0);
    if (center) {
        for (Index j = 0; j < h; ++j) {
            for (Index i = 0; i < n; ++i) {
                mean[static_cast<std::size_t>(j)] += x(i, j);
            }
            mean[static_cast<std::size_t>(j)] /= static_cast<double>(n);
        }
    }
    Matrix c = Matrix::Zero(h, h);
    for (Index i = 0; i < n; ++i) {
        for (Index a = 0; a < h; ++a) {
            for (Index b = 0; b < h; ++b) {
                c(a, b) += (x(i, a) - mean[static_cast<std::size_t>(a)]) * (x(i, b) - mean[static_cast<std::size_t>(b)]);
            }
        }
    }
    return c;
}

/// Frobenius distance between the orthogonal projectors onto span(a) and
/// span(b). Bounds sin of the largest principal angle from above.
inline double projector_gap(const Matrix& a, const Matrix& b)
{
    return (a * a.transpose() - b * b.transpose()).norm();
}

inline double rel(double got, double want)
{
    return std::abs(got - want) / std::max(1.0, std::abs(want));
}

inline ActivationSet make_set(const Matrix& rows, Role role, int layer = 3, Modality modality = Modality::text)
{
    std::vector<std::string> ids;
    for (Index i = 0; i < rows.rows(); ++i) {
        ids.push_back("p" + std::to_string(i));
    }
    return ActivationSet(rows, role, layer, modality, ids);
}

/// A hand-built subspace: random orthonormal basis and random coordinates.
inline ConceptSubspace random_subspace(Rng& rng, Index h, Index k)
{
    ConceptSubspace s;
    s.basis = rng.orthonormal(h, k);
    s.r_hat = rng.vector(k);
    s.eigenvalues = Vector::LinSpaced(k, static_cast<double>(k), 1.0);
    s.alpha = 1.0;
    s.n_pairs = 5;
    s.refusal_norm = s.r_hat.norm();
    return s;
}

class TempDir {
public:
    TempDir()
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("rforge_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::filesystem::path fixture(const std::string& rel_path)
{
    return std::filesystem::path(RFORGE_FIXTURE_DIR) / rel_path;
}

} // namespace rforge::test
