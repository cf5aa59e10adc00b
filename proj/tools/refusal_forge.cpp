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

// refusal-forge: extract -> subspace -> patch -> verify -> bench -> metrics.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or input error.
// Machine-readable output goes to stdout, progress and warnings to stderr.

#include "rforge/activation_store.hpp"
#include "rforge/error.hpp"
#include "rforge/metrics.hpp"
#include "rforge/npy.hpp"
#include "rforge/parallel.hpp"
#include "rforge/patch.hpp"
#include "rforge/refusal.hpp"
#include "rforge/subspace.hpp"
#include "rforge/synth_bench.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;

void warn(const std::string& msg)
{
    std::cerr << "warning: " << msg << "\n";
}

void info(const std::string& msg)
{
    std::cerr << msg << "\n";
}

void ensure_dir(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw IoError(dir.string() + ": cannot create directory: " + ec.message());
    }
}

std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// ---------------------------------------------------------------- extract

struct ExtractArgs {
    std::string manifest;
    std::string out;
};

int cmd_extract(const ExtractArgs& a)
{
    const LoadedSets sets = load_manifest(a.manifest);
    const RefusalVector r = extract_refusal(sets.unsafe, sets.safe);
    if (r.degenerate()) {
        warn("refusal vector is degenerate (norm " + std::to_string(r.norm) + "); editing with it will be refused");
    }
    const fs::path bundle = fs::path(a.out) / ("layer" + std::to_string(r.layer_id) + "_" +
                                               std::string(to_string(r.modality)) + ".rv");
    save_refusal(bundle, r);
    info("extracted refusal vector from " + std::to_string(r.n_pairs) + " pairs, H=" + std::to_string(r.dim()));
    std::cout << json{{"bundle", bundle.string()},
                      {"layer_id", r.layer_id},
                      {"modality", std::string(to_string(r.modality))},
                      {"n_pairs", r.n_pairs},
                      {"norm", r.norm},
                      {"degenerate", r.degenerate()}}
                     .dump()
              << "\n";
    return kExitOk;
}

// --------------------------------------------------------------- subspace

struct SubspaceArgs {
    std::string manifest;
    std::string out;
    Index rank = 0;
    double alpha = kDefaultAlpha;
    std::string ordering = "signed";
    std::string planted;
};

int cmd_subspace(const SubspaceArgs& a)
{
    const LoadedSets sets = load_manifest(a.manifest);
    const EigenOrder order = eigen_order_from_string(a.ordering);
    const Index rank = a.rank == 0 ? default_rank(sets.dim()) : a.rank;

    ConceptSubspace s = sets.neutral ? build_cpca_subspace(sets.unsafe, sets.safe, *sets.neutral, rank, a.alpha, order)
                                     : build_pca_subspace(sets.unsafe, sets.safe, rank, order);
    for (const auto& w : s.warnings) {
        warn(w);
    }
    save_subspace(a.out, s);
    info(std::string(sets.neutral ? "cPCA" : "PCA") + " subspace of rank " + std::to_string(s.rank()) + " written to " +
         a.out);

    json report = {
        {"subspace_dir", a.out},
        {"method", sets.neutral ? "cpca" : "pca"},
        {"rank", s.rank()},
        {"alpha", s.alpha},
        {"r_hat_norm", s.r_hat.norm()},
        {"top_eigenvalues", std::vector<double>(s.eigenvalues.data(),
                                                s.eigenvalues.data() + std::min<Index>(s.eigenvalues.size(), 10))},
    };
    if (!a.planted.empty()) {
        const Vector planted = read_vector(a.planted);
        if (planted.size() != s.dim()) {
            throw DomainError("shape: planted direction has H=" + std::to_string(planted.size()));
        }
        const Vector dir = s.concept_direction();
        report["recovery_cosine"] = std::abs(dir.dot(planted)) / (dir.norm() * planted.norm());
    }
    std::cout << report.dump() << "\n";
    return kExitOk;
}

// ------------------------------------------------------------------ patch

struct PatchArgs {
    std::vector<std::string> weights;
    std::vector<std::string> subspaces;
    double lambda = kDefaultLambda;
    std::string mode = "sequential";
    std::string model_label = "model";
    std::string out;
    std::optional<unsigned> jobs;
};

std::vector<WeightPatch> load_patches(const std::vector<std::string>& dirs, double lambda, const std::string& target,
                                      Validation validation)
{
    std::vector<WeightPatch> patches;
    for (const auto& d : dirs) {
        WeightPatch p;
        p.lambda = lambda;
        p.subspace = std::make_shared<const ConceptSubspace>(load_subspace(d, validation));
        p.target_tensor = target;
        p.concept_label = fs::path(d).filename().empty() ? fs::path(d).parent_path().filename().string()
                                                          : fs::path(d).filename().string();
        patches.push_back(std::move(p));
    }
    return patches;
}

int cmd_patch(const PatchArgs& a)
{
    if (auto w = check_lambda(a.lambda)) {
        warn(*w);
    }
    const CompositionMode mode = composition_mode_from_string(a.mode);
    const fs::path out_dir(a.out);
    ensure_dir(out_dir);

    std::vector<std::string> targets;
    for (const auto& w : a.weights) {
        const fs::path in(w);
        const fs::path dst = out_dir / in.filename();
        if (fs::exists(dst) && fs::equivalent(dst, in)) {
            throw DomainError("output " + dst.string() + " would overwrite its input");
        }
        targets.push_back(in.stem().string());
    }

    // Subspaces are shared by every tensor; load them once.
    const std::vector<WeightPatch> shared = load_patches(a.subspaces, a.lambda, "", Validation::strict);

    std::vector<std::vector<std::string>> warnings(a.weights.size());
    parallel_for(a.weights.size(), resolve_jobs(a.jobs), [&](std::size_t i) {
        const NpyArray in = read_npy(a.weights[i]);
        if (in.shape.size() != 2) {
            throw DomainError("shape: tensor '" + targets[i] + "' is not a rank-2 weight matrix");
        }
        std::vector<WeightPatch> patches = shared;
        for (auto& p : patches) {
            p.target_tensor = targets[i];
        }
        CompositionResult r = compose_patches(in.data, patches, mode);
        warnings[i] = std::move(r.warnings);
        write_tensor(out_dir / fs::path(a.weights[i]).filename(), r.weights, in.dtype);
    });
    for (std::size_t i = 0; i < warnings.size(); ++i) {
        for (const auto& w : warnings[i]) {
            warn(targets[i] + ": " + w);
        }
    }

    PatchManifest manifest;
    manifest.model_label = a.model_label;
    manifest.composition_mode = mode;
    for (const auto& t : targets) {
        for (std::size_t k = 0; k < a.subspaces.size(); ++k) {
            manifest.patches.push_back(
                PatchRecord{t, shared[k].concept_label, a.lambda, fs::absolute(a.subspaces[k]).lexically_normal()});
        }
    }
    save_patch_manifest(out_dir / "manifest.json", manifest);
    info("patched " + std::to_string(targets.size()) + " tensor(s) with " + std::to_string(a.subspaces.size()) +
         " subspace(s), mode " + std::string(to_string(mode)));
    std::cout << json{{"bundle", out_dir.string()}, {"tensors", targets}}.dump() << "\n";
    return kExitOk;
}

// ----------------------------------------------------------------- verify

struct VerifyArgs {
    std::string weights;
    std::string patched;
    std::vector<std::string> subspaces;
    double lambda = kDefaultLambda;
    std::string mode = "sequential";
    Index trials = 1000;
    double tol = 1e-9;
    std::uint64_t seed = 42;
};

int cmd_verify(const VerifyArgs& a)
{
    if (a.trials < 1) {
        throw DomainError("trials must be >= 1");
    }
    const Matrix w = read_tensor(a.weights);
    const Matrix patched = read_tensor(a.patched);
    const std::vector<WeightPatch> patches =
        load_patches(a.subspaces, a.lambda, fs::path(a.weights).stem().string(), Validation::lenient);
    const EquivalenceReport r =
        verify_patched(w, patched, patches, composition_mode_from_string(a.mode), a.trials, a.tol, a.seed);
    std::cout << json{{"trials", r.trials},
                      {"tolerance", r.tolerance},
                      {"max_relative_deviation", r.max_relative_deviation},
                      {"pass", r.pass}}
                     .dump()
              << "\n";
    if (!r.pass) {
        std::ostringstream msg;
        msg << "verification FAILED: max relative deviation " << r.max_relative_deviation << " > " << a.tol;
        info(msg.str());
        return kExitVerifyFailed;
    }
    return kExitOk;
}

// ------------------------------------------------------------------ bench

struct BenchArgs {
    std::string world = "default";
    std::optional<Index> dim;
    std::optional<Index> concepts;
    std::optional<Index> confounds;
    std::optional<double> strength;
    std::optional<double> jitter;
    std::optional<double> entanglement;
    std::optional<double> entanglement_jitter;
    std::optional<double> sigma;
    Index rank = 0;
    double alpha = kDefaultAlpha;
    double lambda = kDefaultLambda;
    Index pairs = 5;
    Index neutral = 1000;
    Index probes = 256;
    std::string sweep;
    std::uint64_t seed = 42;
    std::optional<unsigned> jobs;
    std::string out;
};

synth::WorldConfig world_config(const std::string& preset)
{
    if (preset == "default") {
        return synth::WorldConfig{};
    }
    if (preset == "confounded") {
        return synth::WorldConfig::confounded();
    }
    if (preset == "noiseless") {
        return synth::WorldConfig::noiseless();
    }
    throw DomainError("unknown world preset '" + preset + "' (expected default|confounded|noiseless)");
}

synth::WorldConfig apply_overrides(synth::WorldConfig c, const BenchArgs& a)
{
    c.dim = a.dim.value_or(c.dim);
    c.n_concepts = a.concepts.value_or(c.n_concepts);
    c.n_confounds = a.confounds.value_or(c.n_confounds);
    c.concept_strength = a.strength.value_or(c.concept_strength);
    c.strength_jitter = a.jitter.value_or(c.strength_jitter);
    c.entanglement = a.entanglement.value_or(c.entanglement);
    c.entanglement_jitter = a.entanglement_jitter.value_or(c.entanglement_jitter);
    c.noise_sigma = a.sigma.value_or(c.noise_sigma);
    c.seed = a.seed;
    return c;
}

int cmd_bench(const BenchArgs& a)
{
    const synth::SyntheticWorld world = synth::make_world(apply_overrides(world_config(a.world), a));
    synth::BenchParams p;
    p.rank = a.rank;
    p.alpha = a.alpha;
    p.lambda = a.lambda;
    p.n_pairs = a.pairs;
    p.m_neutral = a.neutral;
    p.n_probe = a.probes;

    std::vector<synth::BenchReport> reports;
    if (a.sweep.empty()) {
        reports.push_back(synth::run_bench(world, p));
    } else {
        const synth::SweepGrid grid = synth::parse_sweep(a.sweep);
        info("sweeping " + std::string(synth::to_string(grid.axis)) + " over " + std::to_string(grid.values.size()) +
             " point(s)");
        reports = synth::sweep(world, p, grid, resolve_jobs(a.jobs));
    }

    std::ostringstream lines;
    for (const auto& r : reports) {
        for (const auto& w : r.warnings) {
            warn(w);
        }
        lines << synth::to_json(r).dump() << "\n";
    }
    if (a.out.empty()) {
        std::cout << lines.str();
    } else {
        write_file_atomic(a.out, lines.str());
        info("wrote " + std::to_string(reports.size()) + " report(s) to " + a.out);
    }
    return kExitOk;
}

// ---------------------------------------------------------------- metrics

struct MetricsArgs {
    std::string kind;
    std::string first;
    std::string second;
    std::string censored;
    bool as_json = false;
};

int cmd_metrics(const MetricsArgs& a)
{
    const Matrix x = read_tensor(a.first);
    const Matrix y = read_tensor(a.second);
    if (x.cols() != y.cols()) {
        throw DomainError("shape: feature dimensions " + std::to_string(x.cols()) + " and " + std::to_string(y.cols()) +
                          " differ");
    }

    if (a.kind == "fvd") {
        const double d = frechet_distance(fit_gaussian(x), fit_gaussian(y));
        std::cout << (a.as_json ? json{{"frechet", d}}.dump() : fixed6(d)) << "\n";
        return kExitOk;
    }

    if (a.kind != "mmnotox") {
        throw DomainError("unknown metric '" + a.kind + "' (expected fvd|mmnotox)");
    }
    // Rows pair up one-to-one; a single text row is shared by every video row.
    auto text_row = [&](Index i) -> Vector { return y.row(y.rows() == 1 ? 0 : i).transpose(); };
    if (y.rows() != 1 && y.rows() != x.rows()) {
        throw DomainError("shape: " + std::to_string(x.rows()) + " video rows vs " + std::to_string(y.rows()) +
                          " text rows");
    }

    if (a.censored.empty()) {
        double total = 0.0;
        for (Index i = 0; i < x.rows(); ++i) {
            total += mm_notox(x.row(i).transpose(), text_row(i));
        }
        const double mean = total / static_cast<double>(x.rows());
        std::cout << (a.as_json ? json{{"mm_notox", mean}}.dump() : fixed6(mean)) << "\n";
        return kExitOk;
    }

    const Matrix c = read_tensor(a.censored);
    if (c.rows() != x.rows() || c.cols() != x.cols()) {
        throw DomainError("shape: censored embeddings must match the original embeddings");
    }
    std::vector<NotoxTriple> triples;
    for (Index i = 0; i < x.rows(); ++i) {
        triples.push_back({x.row(i).transpose(), c.row(i).transpose(), text_row(i)});
    }
    const NotoxReport r = mm_notox_check(triples);
    if (a.as_json) {
        std::cout << json{{"fraction_satisfied", r.fraction_satisfied}, {"margins", r.margins}}.dump() << "\n";
    } else {
        std::cout << fixed6(r.fraction_satisfied) << "\n";
    }
    return kExitOk;
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
    BenchArgs world;
    std::string out;
    std::string dtype = "f64";
    int layer_id = 17;
    std::string modality = "fused";
};

int cmd_synth(const SynthArgs& a)
{
    const synth::SyntheticWorld world = synth::make_world(apply_overrides(world_config(a.world.world), a.world));
    const Dtype dtype = dtype_from_string(a.dtype);
    const fs::path out(a.out);
    ensure_dir(out);

    const synth::PairSets pairs = synth::generate_pairs(world, a.world.pairs);
    SetManifest m;
    m.layer_id = a.layer_id;
    m.modality = modality_from_string(a.modality);
    for (Index i = 0; i < pairs.unsafe.size(); ++i) {
        const std::string id = pairs.unsafe.prompt_ids()[static_cast<std::size_t>(i)];
        const std::string u = "unsafe_" + std::to_string(i) + ".npy";
        const std::string s = "safe_" + std::to_string(i) + ".npy";
        write_vector(out / u, pairs.unsafe.activations().row(i).transpose(), dtype);
        write_vector(out / s, pairs.safe.activations().row(i).transpose(), dtype);
        m.pairs.push_back({u, s, id});
    }
    if (a.world.neutral > 0) {
        write_tensor(out / "neutral.npy", synth::generate_neutral(world, a.world.neutral).activations(), dtype);
        m.neutral.emplace_back("neutral.npy");
    }
    write_vector(out / "planted.npy", world.concept_dirs.col(0), Dtype::f64);
    save_manifest(out / "manifest.json", m);
    std::cout << json{{"manifest", (out / "manifest.json").string()}, {"pairs", a.world.pairs},
                      {"neutral", a.world.neutral}, {"dim", world.config.dim}}
                     .dump()
              << "\n";
    return kExitOk;
}

void add_world_options(CLI::App* cmd, BenchArgs& b)
{
    cmd->add_option("--world", b.world, "World preset: default|confounded|noiseless")->capture_default_str();
    cmd->add_option("--dim", b.dim, "Activation dimension H");
    cmd->add_option("--concepts", b.concepts, "Number of planted concepts");
    cmd->add_option("--confounds", b.confounds, "Number of confound directions");
    cmd->add_option("--strength", b.strength, "Planted concept amplitude");
    cmd->add_option("--jitter", b.jitter, "Relative amplitude spread across pairs, in [0, 1]");
    cmd->add_option("--entanglement", b.entanglement, "Mean confound leakage into pair differences");
    cmd->add_option("--entanglement-jitter", b.entanglement_jitter, "Per-pair confound leakage spread");
    cmd->add_option("--sigma", b.sigma, "Isotropic noise level");
    cmd->add_option("--pairs", b.pairs, "Number of unsafe/safe pairs")->capture_default_str();
    cmd->add_option("--neutral", b.neutral, "Number of neutral samples (0 disables cPCA)")->capture_default_str();
    cmd->add_option("--seed", b.seed, "Master seed")->capture_default_str();
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"refusal-forge: training-free concept erasure by closed-form weight patches"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "refusal-forge 0.1.0");

    ExtractArgs extract;
    auto* c_extract = app.add_subcommand("extract", "Compute the refusal vector of a paired manifest");
    c_extract->add_option("--manifest", extract.manifest, "Activation manifest JSON")->required();
    c_extract->add_option("--out", extract.out, "Output directory")->required();

    SubspaceArgs subspace;
    auto* c_subspace = app.add_subcommand("subspace", "Build a PCA / contrastive-PCA concept subspace");
    c_subspace->add_option("--manifest", subspace.manifest, "Activation manifest JSON")->required();
    c_subspace->add_option("--out", subspace.out, "Output subspace directory")->required();
    c_subspace->add_option("--rank,-k", subspace.rank, "Subspace rank (default min(100, H))");
    c_subspace->add_option("--alpha", subspace.alpha, "Neutral suppression weight")->capture_default_str();
    c_subspace->add_option("--ordering", subspace.ordering, "Eigenvalue ordering: signed|magnitude")
        ->capture_default_str();
    c_subspace->add_option("--planted", subspace.planted, "Known concept direction (NPY) to report recovery against");

    PatchArgs patch;
    auto* c_patch = app.add_subcommand("patch", "Fold concept subspaces into weight matrices");
    c_patch->add_option("--weights", patch.weights, "Weight tensors (NPY, H' x H)")->required();
    c_patch->add_option("--subspace", patch.subspaces, "Subspace directories, applied in order")->required();
    c_patch->add_option("--lambda", patch.lambda, "Concept suppression factor")->capture_default_str();
    c_patch->add_option("--mode", patch.mode, "Composition: sequential|summed")->capture_default_str();
    c_patch->add_option("--model-label", patch.model_label, "Label recorded in the bundle manifest");
    c_patch->add_option("--out", patch.out, "Output bundle directory")->required();
    c_patch->add_option("--jobs", patch.jobs, "Worker threads (default $REFUSAL_FORGE_JOBS or core count)");

    VerifyArgs verify;
    auto* c_verify = app.add_subcommand("verify", "Check patched weights against the input-space edit");
    c_verify->add_option("--weights", verify.weights, "Original weight tensor")->required();
    c_verify->add_option("--patched", verify.patched, "Patched weight tensor")->required();
    c_verify->add_option("--subspace", verify.subspaces, "Subspace directories, as given to patch")->required();
    c_verify->add_option("--lambda", verify.lambda, "Concept suppression factor")->capture_default_str();
    c_verify->add_option("--mode", verify.mode, "Composition: sequential|summed")->capture_default_str();
    c_verify->add_option("--trials", verify.trials, "Random probes")->capture_default_str();
    c_verify->add_option("--tol", verify.tol, "Maximum relative deviation")->capture_default_str();
    c_verify->add_option("--seed", verify.seed, "Probe seed")->capture_default_str();

    BenchArgs bench;
    auto* c_bench = app.add_subcommand("bench", "Run the planted-concept benchmark");
    add_world_options(c_bench, bench);
    c_bench->add_option("--rank,-k", bench.rank, "Subspace rank (default min(100, H))");
    c_bench->add_option("--alpha", bench.alpha, "Neutral suppression weight")->capture_default_str();
    c_bench->add_option("--lambda", bench.lambda, "Concept suppression factor")->capture_default_str();
    c_bench->add_option("--probes", bench.probes, "Fresh samples per evaluation")->capture_default_str();
    c_bench->add_option("--sweep", bench.sweep, "Grid name=start:stop:step over rank|lambda|alpha");
    c_bench->add_option("--jobs", bench.jobs, "Worker threads (default $REFUSAL_FORGE_JOBS or core count)");
    c_bench->add_option("--out", bench.out, "Write JSONL here instead of stdout");

    MetricsArgs metrics;
    auto* c_metrics = app.add_subcommand("metrics", "Frechet distance or MM-Notox over feature files");
    c_metrics->add_option("kind", metrics.kind, "fvd|mmnotox")->required();
    c_metrics->add_option("first", metrics.first, "fvd: reference features; mmnotox: video embeddings")->required();
    c_metrics->add_option("second", metrics.second, "fvd: generated features; mmnotox: prompt embeddings")->required();
    c_metrics->add_option("--censored", metrics.censored, "mmnotox: censored video embeddings for the inequality check");
    c_metrics->add_flag("--json", metrics.as_json, "Emit JSON");

    SynthArgs synth_args;
    synth_args.world.neutral = 200;
    synth_args.world.dim = 64;
    auto* c_synth = app.add_subcommand("synth", "Write a synthetic activation manifest");
    add_world_options(c_synth, synth_args.world);
    c_synth->add_option("--out", synth_args.out, "Output directory")->required();
    c_synth->add_option("--dtype", synth_args.dtype, "f32|f64")->capture_default_str();
    c_synth->add_option("--layer-id", synth_args.layer_id, "Layer id recorded in the manifest")->capture_default_str();
    c_synth->add_option("--modality", synth_args.modality, "text|image|fused")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (*c_extract) {
            return cmd_extract(extract);
        }
        if (*c_subspace) {
            return cmd_subspace(subspace);
        }
        if (*c_patch) {
            return cmd_patch(patch);
        }
        if (*c_verify) {
            return cmd_verify(verify);
        }
        if (*c_bench) {
            return cmd_bench(bench);
        }
        if (*c_metrics) {
            return cmd_metrics(metrics);
        }
        if (*c_synth) {
            return cmd_synth(synth_args);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
