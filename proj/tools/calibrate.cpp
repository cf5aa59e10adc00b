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

// Seed scan over the synthetic world: recovery and ablation-ordering rates.
//
//   rforge-calibrate [--world default|confounded] [--seeds N] [--first-seed S]
//                    [--strength X] [--jitter X] [--entanglement X]
//                    [--entanglement-jitter X] [--rank K]

#include "rforge/synth_bench.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

using namespace rforge;
using namespace rforge::synth;

int main(int argc, char** argv)
{
    CLI::App app{"rforge-calibrate"};
    std::string preset = "default";
    int seeds = 100;
    std::uint64_t first_seed = 7000;
    std::optional<double> strength, jitter, ent, ent_jitter;
    Index rank = 0;
    app.add_option("--world", preset)->check(CLI::IsMember({"default", "confounded"}));
    app.add_option("--seeds", seeds)->check(CLI::PositiveNumber);
    app.add_option("--first-seed", first_seed);
    app.add_option("--strength", strength);
    app.add_option("--jitter", jitter);
    app.add_option("--entanglement", ent);
    app.add_option("--entanglement-jitter", ent_jitter);
    app.add_option("--rank", rank);
    CLI11_PARSE(app, argc, argv);

    int recovered = 0, ordered = 0, suppressed = 0;
    std::vector<double> rec;
    double sup[3] = {0, 0, 0}, col[3] = {0, 0, 0};
    for (int i = 0; i < seeds; ++i) {
        WorldConfig c = preset == "confounded" ? WorldConfig::confounded() : WorldConfig{};
        c.concept_strength = strength.value_or(c.concept_strength);
        c.strength_jitter = jitter.value_or(c.strength_jitter);
        c.entanglement = ent.value_or(c.entanglement);
        c.entanglement_jitter = ent_jitter.value_or(c.entanglement_jitter);
        c.seed = first_seed + static_cast<std::uint64_t>(i);
        BenchParams p;
        p.rank = rank;
        const BenchReport r = run_bench(make_world(c), p);

        const double rc = r.pipeline().recovery_cosine[0];
        rec.push_back(rc);
        recovered += rc >= 0.99;
        const MethodResult* m[3] = {&r.refusal, &r.pca, &*r.cpca};
        bool all_suppressed = true;
        for (int j = 0; j < 3; ++j) {
            sup[j] += m[j]->suppression_ratio[0];
            col[j] += m[j]->collateral_rms;
            all_suppressed = all_suppressed && m[j]->suppression_ratio[0] <= 0.05;
        }
        suppressed += all_suppressed;
        ordered += all_suppressed && r.cpca->collateral_rms < r.pca.collateral_rms &&
                   r.pca.collateral_rms < r.refusal.collateral_rms;
    }
    std::sort(rec.begin(), rec.end());
    const double n = seeds;
    std::printf("world=%s seeds=%d recovery>=0.99: %d/%d (min %.4f)\n", preset.c_str(), seeds, recovered, seeds,
                rec.front());
    std::printf("all suppression<=0.05: %d/%d  ordering cpca<pca<refusal: %d/%d\n", suppressed, seeds, ordered,
                seeds);
    std::printf("mean suppression refusal/pca/cpca: %.4f %.4f %.4f\n", sup[0] / n, sup[1] / n, sup[2] / n);
    std::printf("mean collateral  refusal/pca/cpca: %.4f %.4f %.4f\n", col[0] / n, col[1] / n, col[2] / n);
    return 0;
}
