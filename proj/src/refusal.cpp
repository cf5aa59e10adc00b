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

#include "rforge/refusal.hpp"

#include "rforge/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace rforge {

namespace fs = std::filesystem;
using nlohmann::json;

RefusalVector RefusalVector::from_direction(Vector direction, int layer_id, Modality modality, Index n_pairs)
{
    require_finite(direction, "refusal direction");
    RefusalVector r;
    r.norm = direction.norm();
    r.direction = std::move(direction);
    r.layer_id = layer_id;
    r.modality = modality;
    r.n_pairs = n_pairs;
    return r;
}

RefusalVector extract_refusal(const ActivationSet& unsafe, const ActivationSet& safe)
{
    check_pairing(unsafe, safe);
    const Vector mean = (unsafe.activations() - safe.activations()).colwise().mean().transpose();
    return RefusalVector::from_direction(mean, unsafe.layer_id(), unsafe.modality(), unsafe.size());
}

std::optional<std::string> check_lambda(double lambda)
{
    if (!std::isfinite(lambda) || lambda < 0.0) {
        throw DomainError("lambda must be a finite value >= 0, got " + std::to_string(lambda));
    }
    if (lambda > 2.0) {
        return "lambda " + std::to_string(lambda) + " > 2 over-suppresses: the concept component is reflected and amplified";
    }
    return std::nullopt;
}

Vector project_edit(const Vector& x, const RefusalVector& r, double lambda)
{
    check_lambda(lambda);
    if (r.degenerate()) {
        throw DomainError("degenerate refusal vector (norm " + std::to_string(r.norm) + ")");
    }
    if (x.size() != r.dim()) {
        throw DomainError("shape: input has H=" + std::to_string(x.size()) + ", refusal vector H=" +
                          std::to_string(r.dim()));
    }
    const Vector unit = r.direction / r.norm;
    return x - lambda * x.dot(unit) * unit;
}

double refusal_alignment(const Vector& x, const RefusalVector& r)
{
    if (r.degenerate()) {
        throw DomainError("degenerate refusal vector (norm " + std::to_string(r.norm) + ")");
    }
    if (x.size() != r.dim()) {
        throw DomainError("shape: input has H=" + std::to_string(x.size()) + ", refusal vector H=" +
                          std::to_string(r.dim()));
    }
    const double xn = x.norm();
    if (xn <= kDegenerateNorm) {
        throw DomainError("degenerate input: zero-norm vector");
    }
    return std::clamp(x.dot(r.direction) / (xn * r.norm), -1.0, 1.0);
}

void save_refusal(const fs::path& dir, const RefusalVector& r)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(dir.string() + ": cannot create directory: " + ec.message());
    }
    write_vector(dir / "direction.npy", r.direction, Dtype::f64);
    const json meta = {
        {"layer_id", r.layer_id},
        {"modality", std::string(to_string(r.modality))},
        {"n_pairs", r.n_pairs},
        {"norm", r.norm},
        {"degenerate", r.degenerate()},
    };
    write_file_atomic(dir / "meta.json", meta.dump(2) + "\n");
}

RefusalVector load_refusal(const fs::path& dir, const ReadOptions& opts)
{
    std::ifstream in(dir / "meta.json");
    if (!in) {
        throw IoError((dir / "meta.json").string() + ": cannot open");
    }
    json meta;
    try {
        meta = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError((dir / "meta.json").string() + ": invalid JSON: " + e.what());
    }
    try {
        return RefusalVector::from_direction(read_vector(dir / "direction.npy", opts), meta.at("layer_id").get<int>(),
                                             modality_from_string(meta.at("modality").get<std::string>()),
                                             meta.at("n_pairs").get<Index>());
    } catch (const json::exception& e) {
        throw FormatError((dir / "meta.json").string() + ": " + e.what());
    }
}

} // namespace rforge
