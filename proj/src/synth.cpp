#include "covforge/synth.hpp"

#include <algorithm>
#include <set>

namespace covforge {

void TraceConfig::validate() const {
    intermediate_model.validate();
    transition_model.validate();
    if (trajectory_length == 0)
        throw ConfigError("TraceConfig: trajectory_length must be >= 1");
    if (candidates_per_state == 0)
        throw ConfigError("TraceConfig: candidates_per_state must be >= 1");
    if (transitions_per_state == 0)
        throw ConfigError("TraceConfig: transitions_per_state must be >= 1");
    const bool same = intermediate_model.id == transition_model.id;
    switch (trace_type) {
        case TraceType::FullTeacher:
        case TraceType::SelfSampling:
            if (!same)
                throw ConfigError("TraceConfig: " + to_string(trace_type) +
                                  " requires intermediate and transition models to match");
            break;
        case TraceType::Imitation:
            if (same)
                throw ConfigError(
                    "TraceConfig: imitation requires distinct student/teacher models");
            break;
    }
}

std::string to_string(SelectionStrategy s) {
    switch (s) {
        case SelectionStrategy::Worst: return "worst";
        case SelectionStrategy::Best: return "best";
        case SelectionStrategy::Uniform: return "uniform";
        case SelectionStrategy::Median: return "median";
    }
    throw InvariantError("unknown SelectionStrategy");
}

SelectionStrategy selection_strategy_from_string(std::string_view s) {
    if (s == "worst") return SelectionStrategy::Worst;
    if (s == "best") return SelectionStrategy::Best;
    if (s == "uniform") return SelectionStrategy::Uniform;
    if (s == "median") return SelectionStrategy::Median;
    throw ConfigError("unknown selection strategy: " + std::string(s));
}

void SelectionPolicy::validate() const {
    if (median_gap_threshold < 0.0 || median_gap_threshold > 1.0)
        throw ConfigError("SelectionPolicy: median_gap_threshold must be in [0,1]");
    if (max_states_per_repo < 1 || max_states_per_repo > 3)
        throw ConfigError("SelectionPolicy: max_states_per_repo must be in [1,3]");
}

void RejectionPolicy::validate() const {
    if (min_delta < 0.0 || min_delta > 1.0)
        throw ConfigError("RejectionPolicy: min_delta must be in [0,1]");
    if (min_absolute_coverage &&
        (*min_absolute_coverage < 0.0 || *min_absolute_coverage > 1.0))
        throw ConfigError("RejectionPolicy: min_absolute_coverage must be in [0,1]");
}

CandidateSet sample_candidate_states(const State& base, const TraceConfig& config,
                                     const Simulator& simulator, Budget& budget,
                                     std::uint64_t seed,
                                     const SynthObserver* observer) {
    CandidateSet out;
    for (unsigned i = 0; i < config.candidates_per_state; ++i) {
        const std::uint64_t draft_seed = derive_seed(seed, "candidate", i);
        PromptBundle bundle = render_memoryless(base);
        if (observer && observer->on_prompt) observer->on_prompt(bundle);
        std::string raw = generate(config.intermediate_model, bundle, draft_seed);
        Testbench tb = extract_testbench(raw);
        if (tb.empty()) continue;  // unparseable draft, no state
        FeedbackObservation obs;
        try {
            obs = simulator.simulate(*base.repo(), tb, budget);
        } catch (const BudgetExhausted&) {
            out.truncated = true;
            break;
        }
        out.states.push_back(State::make(base.repo(), std::move(tb), std::move(obs)));
    }
    if (out.states.empty() && out.truncated) throw BudgetExhausted();
    if (observer && observer->on_candidates) observer->on_candidates(out.states);
    return out;
}

namespace {

bool is_success(const State& s) { return s.observation().status() == SimStatus::Success; }

// Success indices sorted by (coverage asc, sampling order asc).
std::vector<std::size_t> success_by_coverage(const std::vector<State>& candidates) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (is_success(candidates[i])) out.push_back(i);
    std::stable_sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].coverage() < candidates[b].coverage();
    });
    return out;
}

std::optional<std::size_t> first_failure(const std::vector<State>& candidates) {
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (!is_success(candidates[i])) return i;
    return std::nullopt;
}

void push_unique(std::vector<std::size_t>& out, std::size_t idx) {
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
}

// Deterministic pad to `target` distinct states: remaining successes in
// sampling order first, then failures.
void pad_to_target(std::vector<std::size_t>& out, const std::vector<State>& candidates,
                   std::size_t target) {
    for (std::size_t i = 0; i < candidates.size() && out.size() < target; ++i)
        if (is_success(candidates[i])) push_unique(out, i);
    for (std::size_t i = 0; i < candidates.size() && out.size() < target; ++i)
        push_unique(out, i);
}

std::vector<std::size_t> select_worst(const std::vector<State>& candidates,
                                      const SelectionPolicy& policy) {
    std::vector<std::size_t> out;
    auto success = success_by_coverage(candidates);
    auto failure = first_failure(candidates);
    if (success.empty()) {
        // all drafts failed simulation: the failure state alone
        out.push_back(*failure);
        return out;
    }
    if (policy.include_failure_state && failure) out.push_back(*failure);
    const std::size_t worst = success.front();
    push_unique(out, worst);
    const std::size_t median = success[(success.size() - 1) / 2];
    if (candidates[median].coverage() - candidates[worst].coverage() >
        policy.median_gap_threshold)
        push_unique(out, median);
    if (out.size() > policy.max_states_per_repo) out.resize(policy.max_states_per_repo);
    return out;
}

std::vector<std::size_t> select_best(const std::vector<State>& candidates,
                                     std::size_t target) {
    // descending coverage with earliest sampling order winning ties
    std::vector<std::size_t> success;
    for (std::size_t i = 0; i < candidates.size(); ++i)
        if (is_success(candidates[i])) success.push_back(i);
    std::stable_sort(success.begin(), success.end(), [&](std::size_t a, std::size_t b) {
        return candidates[a].coverage() > candidates[b].coverage();
    });
    std::vector<std::size_t> out;
    for (std::size_t idx : success) {
        if (out.size() >= target) break;
        out.push_back(idx);
    }
    pad_to_target(out, candidates, target);
    return out;
}

std::vector<std::size_t> select_uniform(const std::vector<State>& candidates,
                                        std::size_t target, std::uint64_t seed) {
    std::vector<std::size_t> pool(candidates.size());
    for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = i;
    SplitMix64 rng(derive_seed(seed, "uniform-selection"));
    std::vector<std::size_t> out;
    while (out.size() < target && !pool.empty()) {
        std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
        out.push_back(pool[pick]);
        pool.erase(pool.begin() + static_cast<long>(pick));
    }
    return out;
}

std::vector<std::size_t> select_median(const std::vector<State>& candidates,
                                       const SelectionPolicy& policy,
                                       std::optional<std::size_t> target) {
    auto success = success_by_coverage(candidates);
    std::vector<std::size_t> out;
    if (success.empty()) {
        out.push_back(*first_failure(candidates));
    } else {
        const std::size_t worst = success.front();
        const std::size_t median = success[(success.size() - 1) / 2];
        out.push_back(median);
        if (candidates[median].coverage() - candidates[worst].coverage() >
            policy.median_gap_threshold)
            push_unique(out, worst);
    }
    if (target) {
        pad_to_target(out, candidates, *target);
        if (out.size() > *target) out.resize(*target);
    } else if (out.size() > policy.max_states_per_repo) {
        out.resize(policy.max_states_per_repo);
    }
    return out;
}

}  // namespace

std::vector<std::size_t> select_state_indices(
    const std::vector<State>& candidates, const SelectionPolicy& policy,
    std::uint64_t seed, std::optional<std::size_t> budget_match_target) {
    if (candidates.empty()) throw InvariantError("select_states: empty candidate set");
    policy.validate();
    std::optional<std::size_t> target = budget_match_target;
    if (target) *target = std::min<std::size_t>(*target, candidates.size());
    switch (policy.strategy) {
        case SelectionStrategy::Worst: {
            auto out = select_worst(candidates, policy);
            if (target) {
                pad_to_target(out, candidates, *target);
                if (out.size() > *target) out.resize(*target);
            }
            return out;
        }
        case SelectionStrategy::Best:
            return select_best(candidates,
                               target ? *target
                                      : std::min<std::size_t>(policy.max_states_per_repo,
                                                              candidates.size()));
        case SelectionStrategy::Uniform:
            return select_uniform(candidates,
                                  target ? *target
                                         : std::min<std::size_t>(
                                               policy.max_states_per_repo,
                                               candidates.size()),
                                  seed);
        case SelectionStrategy::Median:
            return select_median(candidates, policy, target);
    }
    throw InvariantError("unknown selection strategy");
}

std::vector<State> select_states(const std::vector<State>& candidates,
                                 const SelectionPolicy& policy, std::uint64_t seed) {
    std::vector<State> out;
    for (std::size_t idx : select_state_indices(candidates, policy, seed))
        out.push_back(candidates[idx]);
    return out;
}

TransitionSet generate_transitions(const State& state, const TraceConfig& config,
                                   const Simulator& simulator, Budget& budget,
                                   std::uint64_t seed, int stage_index,
                                   const std::optional<std::string>& specialist,
                                   const SynthObserver* observer) {
    TransitionSet out;
    const GenMode mode = state.testbench().empty() ? GenMode::Direct : GenMode::Agentic;
    std::size_t simulated = 0;
    for (unsigned i = 0; i < config.transitions_per_state; ++i) {
        const std::uint64_t cand_seed = derive_seed(seed, "transition", i);
        PromptBundle bundle = render_memoryless(state, specialist);
        if (observer && observer->on_prompt) observer->on_prompt(bundle);
        std::string raw = generate(config.transition_model, bundle, cand_seed);
        Testbench tb = extract_testbench(raw);
        Provenance prov{stage_index, config.trace_type, mode,
                        config.transition_model.id, cand_seed,
                        specialist.has_value()};
        if (tb.empty()) {
            // unparseable candidate: recorded, but no simulator call spent
            out.records.emplace_back(
                state, std::move(tb),
                FeedbackObservation(SimStatus::CompileError, {},
                                    "empty generation output"),
                std::move(prov));
            continue;
        }
        FeedbackObservation obs;
        try {
            obs = simulator.simulate(*state.repo(), tb, budget);
        } catch (const BudgetExhausted&) {
            out.truncated = true;
            break;
        }
        ++simulated;
        out.records.emplace_back(state, std::move(tb), std::move(obs), std::move(prov));
    }
    if (simulated == 0 && out.truncated) throw BudgetExhausted();
    if (observer && observer->on_transitions) observer->on_transitions(state, out.records);
    return out;
}

std::optional<TransitionRecord> rejection_filter(
    const std::vector<TransitionRecord>& records, const RejectionPolicy& policy) {
    policy.validate();
    std::optional<std::size_t> best;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& rec = records[i];
        if (rec.delta_cov() < policy.min_delta) continue;
        if (policy.min_absolute_coverage &&
            rec.final_cov() < *policy.min_absolute_coverage)
            continue;
        if (!best || rec.delta_cov() > records[*best].delta_cov()) best = i;
    }
    if (!best) return std::nullopt;
    return records[*best];
}

SynthResult synthesize_repo(RepositoryPtr repo, const TraceConfig& config,
                            const SelectionPolicy& selection,
                            const RejectionPolicy& rejection,
                            const Simulator& simulator, Budget& budget,
                            std::uint64_t seed, int stage_index,
                            const std::optional<std::string>& specialist,
                            const SynthObserver* observer) {
    config.validate();
    selection.validate();
    rejection.validate();
    SynthResult result;
    const std::uint64_t repo_seed = derive_seed(seed, "repo:" + repo->id());
    State initial = State::initial(repo);

    if (config.trajectory_length == 1) {
        // direct inference: transitions straight from s_0
        try {
            TransitionSet set = generate_transitions(initial, config, simulator, budget,
                                                     derive_seed(repo_seed, "direct"),
                                                     stage_index, specialist, observer);
            result.truncated |= set.truncated;
            if (auto kept = rejection_filter(set.records, rejection))
                result.records.push_back(std::move(*kept));
        } catch (const BudgetExhausted&) {
            result.truncated = true;
        }
        return result;
    }

    // depth 1..N-2 narrows to a single worst-style pick per base state;
    // the first depth applies the full policy (with budget matching for the
    // ablation arms).
    std::vector<State> level{initial};
    std::vector<State> selected;
    for (unsigned depth = 1; depth + 1 <= config.trajectory_length; ++depth) {
        std::vector<State> next;
        for (std::size_t b = 0; b < level.size(); ++b) {
            CandidateSet cands;
            try {
                cands = sample_candidate_states(
                    level[b], config, simulator, budget,
                    derive_seed(repo_seed, "depth", depth * 100 + b), observer);
            } catch (const BudgetExhausted&) {
                result.truncated = true;
                break;
            }
            result.truncated |= cands.truncated;
            if (cands.states.empty()) continue;
            SelectionPolicy level_policy = selection;
            std::optional<std::size_t> target;
            if (depth == 1) {
                // budget matching across ablation arms: every strategy gets
                // the state count the worst-state rule would take
                SelectionPolicy worst_ref = selection;
                worst_ref.strategy = SelectionStrategy::Worst;
                target = select_worst(cands.states, worst_ref).size();
            } else {
                level_policy.max_states_per_repo = 1;
                level_policy.include_failure_state = false;
            }
            for (std::size_t idx : select_state_indices(
                     cands.states, level_policy,
                     derive_seed(repo_seed, "select", depth * 100 + b), target))
                next.push_back(cands.states[idx]);
        }
        level = std::move(next);
        if (level.empty()) return result;
    }
    selected = std::move(level);

    for (std::size_t s = 0; s < selected.size(); ++s) {
        try {
            TransitionSet set = generate_transitions(
                selected[s], config, simulator, budget,
                derive_seed(repo_seed, "final", s), stage_index, specialist, observer);
            result.truncated |= set.truncated;
            if (auto kept = rejection_filter(set.records, rejection))
                result.records.push_back(std::move(*kept));
        } catch (const BudgetExhausted&) {
            result.truncated = true;
            break;
        }
    }
    return result;
}

}  // namespace covforge
