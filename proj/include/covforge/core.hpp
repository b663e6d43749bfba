#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "covforge/util.hpp"

namespace covforge {

using json = nlohmann::ordered_json;

constexpr std::size_t kDefaultLogCapBytes = 64 * 1024;

// ─── Repository ──────────────────────────────────────────────
// A fixed hardware design repository: immutable file map plus the per-repo
// coverage pass bar used by the evaluation harness.

class Repository {
public:
    Repository(std::string id, std::map<std::string, std::string> files,
               double pass_threshold);

    const std::string& id() const { return id_; }
    const std::map<std::string, std::string>& files() const { return files_; }
    double pass_threshold() const { return pass_threshold_; }
    std::size_t context_length() const { return context_length_; }

    json to_json() const;
    static Repository from_json(const json& j);

private:
    std::string id_;
    std::map<std::string, std::string> files_;  // relative path -> content
    double pass_threshold_;
    std::size_t context_length_;  // whitespace tokens over all file contents
};

using RepositoryPtr = std::shared_ptr<const Repository>;

// ─── Testbench ───────────────────────────────────────────────
// Opaque full-file testbench text. The empty string is the initial
// placeholder and nothing else is.

struct Testbench {
    std::string text;

    bool empty() const { return text.empty(); }
    bool operator==(const Testbench&) const = default;
};

// ─── FeedbackObservation ─────────────────────────────────────

enum class SimStatus { NotRun, CompileError, RuntimeError, Timeout, Success };

std::string to_string(SimStatus s);
SimStatus sim_status_from_string(std::string_view s);

struct MetricCount {
    std::uint64_t covered = 0;
    std::uint64_t total = 1;

    bool operator==(const MetricCount&) const = default;
};

class FeedbackObservation {
public:
    // Null observation (status NotRun, no metrics, no log).
    FeedbackObservation() = default;

    FeedbackObservation(SimStatus status, std::map<std::string, MetricCount> metrics,
                        std::string log, std::size_t log_cap_bytes = kDefaultLogCapBytes);

    SimStatus status() const { return status_; }
    const std::map<std::string, MetricCount>& metrics() const { return metrics_; }
    const std::string& log() const { return log_; }
    bool is_null() const { return status_ == SimStatus::NotRun; }

    bool operator==(const FeedbackObservation&) const = default;

    json to_json() const;
    static FeedbackObservation from_json(const json& j);

private:
    SimStatus status_ = SimStatus::NotRun;
    std::map<std::string, MetricCount> metrics_;
    std::string log_;
};

// Normalized scalar coverage: 0 for any non-Success status, otherwise the
// unweighted mean of per-metric covered/total ratios (0 on empty metrics).
double coverage_score(const FeedbackObservation& obs);

// ─── State ───────────────────────────────────────────────────
// The memoryless triple (repository, testbench, observation) with its
// cached coverage score.

class State {
public:
    static State initial(RepositoryPtr repo);
    static State make(RepositoryPtr repo, Testbench testbench,
                      FeedbackObservation observation);

    const RepositoryPtr& repo() const { return repo_; }
    const Testbench& testbench() const { return testbench_; }
    const FeedbackObservation& observation() const { return observation_; }
    double coverage() const { return coverage_; }

    bool operator==(const State& other) const {
        return repo_->id() == other.repo_->id() && testbench_ == other.testbench_ &&
               observation_ == other.observation_;
    }

    json to_json() const;
    static State from_json(const json& j);

private:
    State(RepositoryPtr repo, Testbench testbench, FeedbackObservation observation,
          double coverage)
        : repo_(std::move(repo)), testbench_(std::move(testbench)),
          observation_(std::move(observation)), coverage_(coverage) {}

    RepositoryPtr repo_;
    Testbench testbench_;
    FeedbackObservation observation_;
    double coverage_;
};

// ─── TransitionRecord ────────────────────────────────────────

enum class TraceType { FullTeacher, Imitation, SelfSampling };
enum class GenMode { Direct, Agentic };

std::string to_string(TraceType t);
TraceType trace_type_from_string(std::string_view s);
std::string to_string(GenMode m);
GenMode gen_mode_from_string(std::string_view s);

struct Provenance {
    int stage_index = 0;
    TraceType trace_type = TraceType::FullTeacher;
    GenMode mode = GenMode::Direct;
    std::string generator_id;
    std::uint64_t sampler_seed = 0;
    bool specialist_prompt_used = false;

    json to_json() const;
    static Provenance from_json(const json& j);
};

// One supervision pair (s_t, x_{t+1}) plus its simulated outcome.
class TransitionRecord {
public:
    TransitionRecord(State source, Testbench generated, FeedbackObservation result,
                     Provenance provenance);

    const State& source() const { return source_; }
    const Testbench& generated() const { return generated_; }
    const FeedbackObservation& result() const { return result_; }
    double delta_cov() const { return delta_cov_; }
    double final_cov() const { return coverage_score(result_); }
    const Provenance& provenance() const { return provenance_; }

    json to_json() const;
    static TransitionRecord from_json(const json& j);

private:
    State source_;
    Testbench generated_;
    FeedbackObservation result_;
    double delta_cov_;
    Provenance provenance_;
};

}  // namespace covforge
