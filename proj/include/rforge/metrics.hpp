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

#include "rforge/linalg.hpp"

#include <span>
#include <vector>

namespace rforge {

/// Gaussian fit of a feature set: sample mean and unbiased covariance.
struct GaussianStats {
    Vector mean;
    Matrix cov;
    Index n = 0;
};

/// Throws DomainError("insufficient samples") for fewer than two rows.
GaussianStats fit_gaussian(const Matrix& features);

/// Squared Wasserstein-2 distance between two Gaussians:
/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}), clamped at zero.
/// The product root's trace is taken as Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}).
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Squared Euclidean distance between a video and a text embedding.
double mm_notox(const Vector& video, const Vector& text);

struct NotoxTriple {
    Vector original; ///< embedding of the uncensored generation v
    Vector censored; ///< embedding of the censored generation v~
    Vector prompt;   ///< embedding of the sanitised prompt t~
};

struct NotoxReport {
    double fraction_satisfied = 0.0;
    /// mm_notox(v, t~) - mm_notox(v~, t~); satisfied when >= 0
    std::vector<double> margins;
};

NotoxReport mm_notox_check(std::span<const NotoxTriple> triples);

} // namespace rforge
