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

#include "rforge/activation_store.hpp"

#include "rforge/error.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace rforge {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Role role)
{
    switch (role) {
    case Role::unsafe:
        return "unsafe";
    case Role::safe:
        return "safe";
    case Role::neutral:
        return "neutral";
    }
    return "unsafe";
}

std::string_view to_string(Modality modality)
{
    switch (modality) {
    case Modality::text:
        return "text";
    case Modality::image:
        return "image";
    case Modality::fused:
        return "fused";
    }
    return "text";
}

Modality modality_from_string(std::string_view name)
{
    if (name == "text") {
        return Modality::text;
    }
    if (name == "image") {
        return Modality::image;
    }
    if (name == "fused") {
        return Modality::fused;
    }
    throw FormatError("unknown modality '" + std::string(name) + "' (expected text|image|fused)");
}

ActivationSet::ActivationSet(Matrix activations, Role role, int layer_id, Modality modality,
                             std::vector<std::string> prompt_ids)
    : activations_(std::move(activations)), role_(role), layer_id_(layer_id), modality_(modality),
      prompt_ids_(std::move(prompt_ids))
{
    if (activations_.rows() < 1 || activations_.cols() < 1) {
        throw DomainError("activation set is empty");
    }
    if (static_cast<Index>(prompt_ids_.size()) != activations_.rows()) {
        throw DomainError("activation set has " + std::to_string(activations_.rows()) + " rows but " +
                          std::to_string(prompt_ids_.size()) + " prompt ids");
    }
    require_finite(activations_, "activation set");
}

void check_pairing(const ActivationSet& unsafe, const ActivationSet& safe)
{
    if (unsafe.size() != safe.size()) {
        throw DomainError("unpaired sets: " + std::to_string(unsafe.size()) + " unsafe vs " +
                          std::to_string(safe.size()) + " safe");
    }
    if (unsafe.dim() != safe.dim()) {
        throw DomainError("unpaired sets: dimension " + std::to_string(unsafe.dim()) + " vs " +
                          std::to_string(safe.dim()));
    }
    if (unsafe.layer_id() != safe.layer_id() || unsafe.modality() != safe.modality()) {
        throw DomainError("unpaired sets: layer or modality differ");
    }
    if (unsafe.prompt_ids() != safe.prompt_ids()) {
        throw DomainError("unpaired sets: prompt ids are not aligned");
    }
}

fs::path SetManifest::resolve(const fs::path& p) const
{
    return p.is_absolute() ? p : base_dir / p;
}

namespace {

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError(path.string() + ": cannot open manifest");
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
}

Matrix load_checked(const SetManifest& m, const fs::path& p, const ReadOptions& opts)
{
    const fs::path full = m.resolve(p);
    if (!fs::exists(full)) {
        throw IoError("missing tensor: " + full.string());
    }
    return read_tensor(full, opts);
}

} // namespace

SetManifest parse_manifest(const fs::path& path)
{
    const json doc = read_json(path);
    SetManifest m;
    m.base_dir = path.parent_path();
    try {
        m.layer_id = doc.at("layer_id").get<int>();
        m.modality = modality_from_string(doc.at("modality").get<std::string>());
        for (const auto& p : doc.at("pairs")) {
            if (!p.contains("unsafe") || !p.contains("safe")) {
                throw FormatError(path.string() + ": unpaired entry (needs both 'unsafe' and 'safe')");
            }
            PairEntry e;
            e.unsafe = p.at("unsafe").get<std::string>();
            e.safe = p.at("safe").get<std::string>();
            e.prompt_id = p.value("prompt_id", std::to_string(m.pairs.size()));
            m.pairs.push_back(std::move(e));
        }
        if (doc.contains("neutral")) {
            for (const auto& n : doc.at("neutral")) {
                m.neutral.emplace_back(n.get<std::string>());
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": manifest schema: " + e.what());
    }
    return m;
}

LoadedSets load_manifest(const fs::path& path, const ReadOptions& opts)
{
    SetManifest m = parse_manifest(path);
    if (m.pairs.empty()) {
        throw FormatError(path.string() + ": unpaired: manifest lists no pairs");
    }

    Index dim = -1;
    auto check_dim = [&](const Matrix& t, const fs::path& p) {
        if (dim < 0) {
            dim = t.cols();
        } else if (t.cols() != dim) {
            throw DomainError("dimension mismatch: " + m.resolve(p).string() + " has H=" + std::to_string(t.cols()) +
                              ", expected H=" + std::to_string(dim));
        }
    };
    auto single_row = [&](const Matrix& t, const fs::path& p) {
        if (t.rows() != 1) {
            throw FormatError(m.resolve(p).string() + ": pair tensors hold one vector, found " +
                              std::to_string(t.rows()) + " rows");
        }
    };

    const Index n = static_cast<Index>(m.pairs.size());
    Matrix unsafe;
    Matrix safe;
    std::vector<std::string> ids;
    for (Index i = 0; i < n; ++i) {
        const PairEntry& e = m.pairs[static_cast<std::size_t>(i)];
        const Matrix u = load_checked(m, e.unsafe, opts);
        const Matrix s = load_checked(m, e.safe, opts);
        check_dim(u, e.unsafe);
        check_dim(s, e.safe);
        single_row(u, e.unsafe);
        single_row(s, e.safe);
        if (i == 0) {
            unsafe.resize(n, dim);
            safe.resize(n, dim);
        }
        unsafe.row(i) = u.row(0);
        safe.row(i) = s.row(0);
        ids.push_back(e.prompt_id);
    }

    std::optional<ActivationSet> neutral;
    if (!m.neutral.empty()) {
        std::vector<Matrix> blocks;
        std::vector<std::string> neutral_ids;
        Index rows = 0;
        for (const auto& p : m.neutral) {
            Matrix t = load_checked(m, p, opts);
            check_dim(t, p);
            for (Index r = 0; r < t.rows(); ++r) {
                neutral_ids.push_back(p.string() + "#" + std::to_string(r));
            }
            rows += t.rows();
            blocks.push_back(std::move(t));
        }
        Matrix all(rows, dim);
        Index at = 0;
        for (const auto& b : blocks) {
            all.middleRows(at, b.rows()) = b;
            at += b.rows();
        }
        neutral.emplace(std::move(all), Role::neutral, m.layer_id, m.modality, std::move(neutral_ids));
    }

    ActivationSet u(std::move(unsafe), Role::unsafe, m.layer_id, m.modality, ids);
    ActivationSet s(std::move(safe), Role::safe, m.layer_id, m.modality, std::move(ids));
    return LoadedSets{std::move(m), std::move(u), std::move(s), std::move(neutral)};
}

void save_manifest(const fs::path& path, const SetManifest& m)
{
    json doc;
    doc["layer_id"] = m.layer_id;
    doc["modality"] = std::string(to_string(m.modality));
    doc["pairs"] = json::array();
    for (const auto& p : m.pairs) {
        doc["pairs"].push_back({{"unsafe", p.unsafe.string()}, {"safe", p.safe.string()}, {"prompt_id", p.prompt_id}});
    }
    doc["neutral"] = json::array();
    for (const auto& p : m.neutral) {
        doc["neutral"].push_back(p.string());
    }
    write_file_atomic(path, doc.dump(2) + "\n");
}

} // namespace rforge
