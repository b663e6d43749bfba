#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "covforge/core.hpp"

namespace covforge {

// ─── PromptBundle ────────────────────────────────────────────

enum class PromptMode { Memoryless, Vanilla };
enum class Role { System, User, Assistant };

std::string to_string(Role r);
std::string to_string(PromptMode m);
PromptMode prompt_mode_from_string(std::string_view s);

struct Message {
    Role role;
    std::string text;

    bool operator==(const Message&) const = default;
};

struct PromptBundle {
    PromptMode mode = PromptMode::Memoryless;
    std::vector<Message> messages;

    bool operator==(const PromptBundle&) const = default;

    // Concatenation of all message texts; used for prompt logging and the
    // specialist-leak checks.
    std::string flatten() const;
};

// Renders the memoryless prompt for a state: repo files in order, current
// testbench (omitted for the empty placeholder), latest feedback (omitted
// when not run), optional specialist rules appended verbatim.
PromptBundle render_memoryless(const State& state,
                               const std::optional<std::string>& specialist_prompt = {});

// Vanilla-history ablation: repo once, then every (testbench, feedback)
// round in chronological order.
PromptBundle render_vanilla(
    const std::vector<std::pair<Testbench, FeedbackObservation>>& history,
    const Repository& repo);

// Returns the contents of the last fenced code block, or the whole output
// trimmed when no fence is present.
Testbench extract_testbench(const std::string& raw_output);

// ─── GeneratorHandle ─────────────────────────────────────────

enum class GenBackend { HttpChat, Scripted };

struct SamplingParams {
    double temperature = 0.7;
    double top_p = 0.8;
    int max_output_tokens = 8192;
};

struct GeneratorHandle {
    std::string id;
    GenBackend backend = GenBackend::Scripted;
    std::string endpoint;    // HttpChat
    std::string model_name;  // HttpChat
    SamplingParams sampling;
    std::string strategy;                         // Scripted stub name
    std::map<std::string, std::string> params;    // Scripted stub parameters
    int retry_count = 3;
    double retry_initial_backoff_s = 1.0;

    void validate() const;

    // Spec strings: "scripted:<strategy>[:k=v,k=v...]" or
    // "http:<endpoint>|<model>[:k=v,...]".
    static GeneratorHandle from_spec(const std::string& id, const std::string& spec);
};

// Issues one completion: an HTTP chat request for HttpChat handles, or the
// named deterministic stub for Scripted handles (used by all tests).
std::string generate(const GeneratorHandle& handle, const PromptBundle& bundle,
                     std::uint64_t seed);

// The stage-0 SystemVerilog validity rules, injected at generation time only.
const std::string& default_specialist_prompt();

// Prompt-side parsing helpers shared by scripted stubs (exposed for tests).
namespace promptview {
// Content of the last section introduced by `marker` in the flattened
// bundle, up to the next "## " heading.
std::optional<std::string> last_section(const std::string& prompt,
                                        const std::string& marker);
// File body for `path` inside the repository section, if present.
std::optional<std::string> repo_file(const std::string& prompt,
                                     const std::string& path);
}  // namespace promptview

}  // namespace covforge
