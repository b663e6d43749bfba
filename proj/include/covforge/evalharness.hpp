#pragma once

#include <optional>
#include <string>
#include <vector>

#include "covforge/genbridge.hpp"
#include "covforge/simbridge.hpp"

namespace covforge {

// ─── Evaluation protocol ─────────────────────────────────────

enum class EvalMode { Direct, Agentic };

std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(std::string_view s);

struct EvalConfig {
    EvalMode mode = EvalMode::Agentic;
    unsigned rounds = 3;   // N; forced to 1 in direct mode
    unsigned samples = 5;  // n
    PromptMode prompt_mode = PromptMode::Memoryless;
    GeneratorHandle generator;

    void validate() const;
};

struct RoundResult {
    std::string testbench_hash;
    FeedbackObservation observation;
    double coverage = 0.0;

    json to_json() const;
};

struct EpisodeResult {
    std::string repo_id;
    unsigned sample_index = 0;
    std::vector<RoundResult> rounds;
    double episode_cov = 0.0;  // max coverage over rounds
    bool sim_pass = false;
    bool cov_pass = false;

    json to_json() const;
};

// One generate/simulate episode; round t>1 conditions on the previous
// round's state (memoryless) or the full history (vanilla). Stops early on
// budget exhaustion.
EpisodeResult run_episode(RepositoryPtr repo, const EvalConfig& config,
                          const Simulator& simulator, Budget& budget,
                          std::uint64_t seed, unsigned sample_index = 0);

// Unbiased estimator 1 - C(n-c,k)/C(n,k); equals c/n at k=1.
double pass_at_k(unsigned n, unsigned c, unsigned k);

struct MetricsTable {
    unsigned k = 1;
    unsigned samples = 0;
    std::size_t repo_count = 0;
    double cov_pass = 0.0;
    double avg_cov = 0.0;
    double sim_pass = 0.0;

    json to_json() const;
    std::string render() const;  // aligned text table, 4 decimals
};

// Per-repo pass counts folded through pass_at_k, coverage averaged with
// failures counting as zero. Throws RaggedSamples (as ConfigError) when
// repos have unequal sample counts.
MetricsTable aggregate(const std::vector<EpisodeResult>& results, unsigned k);

struct EvalRunResult {
    std::vector<EpisodeResult> episodes;  // ordered by (repo_id, sample_index)
    MetricsTable metrics;
};

// Runs samples x repos episodes (parallel across episodes) and aggregates.
EvalRunResult run_evaluation(const std::vector<RepositoryPtr>& corpus,
                             const EvalConfig& config, const Simulator& simulator,
                             Budget& budget, std::uint64_t seed, unsigned k,
                             unsigned workers = 1);

}  // namespace covforge
