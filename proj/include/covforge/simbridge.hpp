#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "covforge/core.hpp"

namespace covforge {

// ─── Budget ──────────────────────────────────────────────────
// Shared, exhaustible simulator-call allowance. Acquisition is
// all-or-nothing and linearizable.

class Budget {
public:
    explicit Budget(std::uint64_t limit);

    std::uint64_t limit() const { return limit_; }
    std::uint64_t used() const;
    std::uint64_t remaining() const;

    // Atomically reserves n calls. Returns false (and changes nothing) when
    // fewer than n remain.
    bool try_acquire(std::uint64_t n = 1);

private:
    const std::uint64_t limit_;
    mutable std::mutex mutex_;
    std::uint64_t used_ = 0;
};

// ─── SyntheticDesign ─────────────────────────────────────────
// Deterministic desk-scale stand-in for a hardware design. Coverage bins
// are keywords; hazard tokens force compile errors, trap tokens force
// runtime errors.

struct SyntheticDesign {
    std::vector<std::string> bins;  // ordered, nonempty
    std::set<std::string> hazard_tokens;
    std::set<std::string> runtime_trap_tokens;

    void validate() const;

    // Parses the "design.txt" file of a repository: one directive per line,
    // `bin NAME` / `hazard NAME` / `trap NAME`, '#' comments.
    static SyntheticDesign from_repo(const Repository& repo);
    static SyntheticDesign parse(const std::string& text);
    std::string render() const;
};

// Pure evaluation kernel for the synthetic backend.
FeedbackObservation synthetic_rules(const SyntheticDesign& design,
                                    const std::string& testbench_text);

// ─── SimulatorConfig ─────────────────────────────────────────

enum class SimBackend { Process, Synthetic };

struct SimulatorConfig {
    SimBackend backend = SimBackend::Synthetic;
    // Process backend only. Placeholders: {repo_dir}, {testbench_path}, {work_dir}.
    std::string command_template;
    double timeout_seconds = 30.0;
    std::string coverage_report_path_template;  // placeholder {work_dir}
    std::vector<std::string> compile_error_markers = {"*E,"};
    std::string work_root;  // scratch root for process runs; empty = system temp
    unsigned workers = 1;

    void validate() const;
};

// Decodes the NormalizedJson coverage contract:
// {"metrics": {"<name>": {"covered": <uint>, "total": <uint>}, ...}}
// Unknown keys are ignored; covered is clamped to total (clamps reported in
// *warnings when provided). Throws MalformedReport on unparseable input.
std::map<std::string, MetricCount> parse_coverage_report(
    const std::string& report_text, std::vector<std::string>* warnings = nullptr);

// ─── Simulator ───────────────────────────────────────────────
// Executes a testbench against a repository. Every call consumes exactly one
// budget unit regardless of outcome; throws BudgetExhausted (without
// consuming) when none remain.

class Simulator {
public:
    explicit Simulator(SimulatorConfig config);

    FeedbackObservation simulate(const Repository& repo, const Testbench& testbench,
                                 Budget& budget) const;

    const SimulatorConfig& config() const { return config_; }

    // Total simulate() invocations that consumed budget; used by tests to
    // cross-check budget accounting.
    std::uint64_t invocation_count() const { return invocations_.load(); }

private:
    FeedbackObservation run_process(const Repository& repo,
                                    const Testbench& testbench) const;

    SimulatorConfig config_;
    mutable std::atomic<std::uint64_t> invocations_{0};
};

}  // namespace covforge
