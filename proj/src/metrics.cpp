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

#include "rforge/metrics.hpp"

#include "rforge/error.hpp"

#include <algorithm>
#include <string>

namespace rforge {

namespace {

// Eigenvalues of the covariances may dip this far below zero (relative to
// the largest) before the input is rejected.
constexpr PsdTolerance kCovTolerance{1e-8};

void require_same_dim(Index a, Index b)
{
    if (a != b) {
        throw DomainError("shape: dimensions " + std::to_string(a) + " and " + std::to_string(b) + " differ");
    }
}

} // namespace

GaussianStats fit_gaussian(const Matrix& features)
{
    if (features.rows() < 2) {
        throw DomainError("insufficient samples: need at least 2 feature rows, got " + std::to_string(features.rows()));
    }
    require_finite(features, "features");
    GaussianStats g;
    g.n = features.rows();
    g.mean = features.colwise().mean().transpose();
    g.cov = covariance(features, /*center=*/true) / static_cast<double>(g.n - 1);
    return g;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b)
{
    require_same_dim(a.mean.size(), b.mean.size());
    require_same_dim(a.cov.rows(), b.cov.rows());
    require_same_dim(a.mean.size(), a.cov.rows());

    const double mean_term = (a.mean - b.mean).squaredNorm();
    const Matrix root_a = psd_sqrt(a.cov, kCovTolerance);
    (void)psd_eigenvalues(b.cov, kCovTolerance);
    const Matrix inner = root_a * b.cov * root_a;
    const Vector inner_eigs = psd_eigenvalues(inner, kCovTolerance);
    const double tr_cross = inner_eigs.cwiseSqrt().sum();

    const double d = mean_term + a.cov.trace() + b.cov.trace() - 2.0 * tr_cross;
    return std::max(d, 0.0);
}

double mm_notox(const Vector& video, const Vector& text)
{
    require_same_dim(video.size(), text.size());
    return (video - text).squaredNorm();
}

NotoxReport mm_notox_check(std::span<const NotoxTriple> triples)
{
    if (triples.empty()) {
        throw DomainError("mm_notox_check: no triples");
    }
    NotoxReport report;
    Index satisfied = 0;
    for (const auto& t : triples) {
        const double margin = mm_notox(t.original, t.prompt) - mm_notox(t.censored, t.prompt);
        report.margins.push_back(margin);
        if (margin >= 0.0) {
            ++satisfied;
        }
    }
    report.fraction_satisfied = static_cast<double>(satisfied) / static_cast<double>(triples.size());
    return report;
}

} // namespace rforge
