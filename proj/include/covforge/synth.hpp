#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "covforge/core.hpp"
#include "covforge/genbridge.hpp"
#include "covforge/simbridge.hpp"

namespace covforge {

// ─── Policies ────────────────────────────────────────────────

struct TraceConfig {
    GeneratorHandle intermediate_model;  // samples intermediate states
    GeneratorHandle transition_model;    // generates the final transition
    TraceType trace_type = TraceType::FullTeacher;
    unsigned trajectory_length = 2;     // N; 1 = direct inference
    unsigned candidates_per_state = 5;  // drafts sampled per source state
    unsigned transitions_per_state = 4; // transition candidates per selected state

    void validate() const;
};

enum class SelectionStrategy { Worst, Best, Uniform, Median };

std::string to_string(SelectionStrategy s);
SelectionStrategy selection_strategy_from_string(std::string_view s);

struct SelectionPolicy {
    SelectionStrategy strategy = SelectionStrategy::Worst;
    double median_gap_threshold = 0.2;
    bool include_failure_state = true;
    unsigned max_states_per_repo = 3;

    void validate() const;
};

struct RejectionPolicy {
    double min_delta = 0.01;
    std::optional<double> min_absolute_coverage;  // Stage-0: 0.5

    void validate() const;
};

// Test/audit tap into the synthesis pipeline. Also feeds the generation-time
// prompt log.
struct SynthObserver {
    std::function<void(const PromptBundle&)> on_prompt;
    std::function<void(const std::vector<State>&)> on_candidates;
    // every transition candidate for one source state, pre-filter
    std::function<void(const State&, const std::vector<TransitionRecord>&)> on_transitions;
};

// ─── Operations ──────────────────────────────────────────────

struct CandidateSet {
    std::vector<State> states;
    bool truncated = false;
};

// Samples candidate intermediate drafts from `base` with the intermediate
// model and simulates each. Partial sets are returned (truncated) when the
// budget runs dry; throws BudgetExhausted only if nothing could be produced.
CandidateSet sample_candidate_states(const State& base, const TraceConfig& config,
                                     const Simulator& simulator, Budget& budget,
                                     std::uint64_t seed,
                                     const SynthObserver* observer = nullptr);

// Returns indices into `candidates` in selection order. When
// `budget_match_target` is set, every strategy is padded/truncated to that
// many states so ablation arms consume identical simulator budgets.
std::vector<std::size_t> select_state_indices(
    const std::vector<State>& candidates, const SelectionPolicy& policy,
    std::uint64_t seed, std::optional<std::size_t> budget_match_target = {});

std::vector<State> select_states(const std::vector<State>& candidates,
                                 const SelectionPolicy& policy, std::uint64_t seed);

struct TransitionSet {
    std::vector<TransitionRecord> records;
    bool truncated = false;
};

// Generates up to n_trans transition candidates from `state` and simulates
// each. Empty extractions are recorded as compile errors without touching
// the budget.
TransitionSet generate_transitions(const State& state, const TraceConfig& config,
                                   const Simulator& simulator, Budget& budget,
                                   std::uint64_t seed, int stage_index,
                                   const std::optional<std::string>& specialist = {},
                                   const SynthObserver* observer = nullptr);

// Keeps candidates meeting the improvement threshold (and the absolute
// floor, when set) and returns the one with maximal delta_cov; earliest
// sampling order wins ties.
std::optional<TransitionRecord> rejection_filter(
    const std::vector<TransitionRecord>& records, const RejectionPolicy& policy);

struct SynthResult {
    std::vector<TransitionRecord> records;
    bool truncated = false;
};

// Full per-repo pipeline: candidate sampling, state selection, transition
// generation, rejection filtering. At most one accepted record per selected
// state. N=1 produces direct-inference records from the initial state.
SynthResult synthesize_repo(RepositoryPtr repo, const TraceConfig& config,
                            const SelectionPolicy& selection,
                            const RejectionPolicy& rejection,
                            const Simulator& simulator, Budget& budget,
                            std::uint64_t seed, int stage_index = 0,
                            const std::optional<std::string>& specialist = {},
                            const SynthObserver* observer = nullptr);

}  // namespace covforge
