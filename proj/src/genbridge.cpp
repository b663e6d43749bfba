#include "covforge/genbridge.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "covforge/simbridge.hpp"

namespace covforge {

std::string to_string(Role r) {
    switch (r) {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
    }
    throw InvariantError("unknown Role");
}

std::string to_string(PromptMode m) {
    return m == PromptMode::Memoryless ? "memoryless" : "vanilla";
}

PromptMode prompt_mode_from_string(std::string_view s) {
    if (s == "memoryless") return PromptMode::Memoryless;
    if (s == "vanilla") return PromptMode::Vanilla;
    throw ConfigError("unknown prompt mode: " + std::string(s));
}

std::string PromptBundle::flatten() const {
    std::string out;
    for (const auto& m : messages) {
        out += "[" + to_string(m.role) + "]\n";
        out += m.text;
        if (out.empty() || out.back() != '\n') out += '\n';
    }
    return out;
}

namespace {

const char* kSystemInstruction =
    "You are a hardware verification engineer. Study the design repository "
    "below and write a complete testbench file that maximizes coverage. "
    "Reply with the full testbench file in a single fenced code block.";

std::string fenced(const std::string& body) {
    std::string out = "```\n";
    out += body;
    if (out.empty() || out.back() != '\n') out += '\n';
    out += "```\n";
    return out;
}

std::string format_score(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

void append_repo_section(std::string& out, const Repository& repo) {
    out += "## Repository: " + repo.id() + "\n\n";
    for (const auto& [path, content] : repo.files()) {
        out += "### File: " + path + "\n";
        out += fenced(content);
        out += "\n";
    }
}

void append_testbench_section(std::string& out, const Testbench& tb) {
    out += "## Current testbench\n";
    out += fenced(tb.text);
    out += "\n";
}

void append_feedback_section(std::string& out, const FeedbackObservation& obs) {
    out += "## Feedback\n";
    out += "status: " + to_string(obs.status()) + "\n";
    for (const auto& [name, m] : obs.metrics())
        out += "coverage[" + name + "]: " + std::to_string(m.covered) + "/" +
               std::to_string(m.total) + "\n";
    out += "coverage_score: " + format_score(coverage_score(obs)) + "\n";
    out += "log:\n";
    out += fenced(obs.log());
    out += "\n";
}

}  // namespace

PromptBundle render_memoryless(const State& state,
                               const std::optional<std::string>& specialist_prompt) {
    PromptBundle bundle;
    bundle.mode = PromptMode::Memoryless;
    std::string user;
    append_repo_section(user, *state.repo());
    if (!state.testbench().empty()) append_testbench_section(user, state.testbench());
    if (!state.observation().is_null()) append_feedback_section(user, state.observation());
    if (specialist_prompt) {
        user += "## Generation rules\n";
        user += *specialist_prompt;
        if (user.back() != '\n') user += '\n';
    }
    bundle.messages.push_back({Role::System, kSystemInstruction});
    bundle.messages.push_back({Role::User, std::move(user)});
    return bundle;
}

PromptBundle render_vanilla(
    const std::vector<std::pair<Testbench, FeedbackObservation>>& history,
    const Repository& repo) {
    PromptBundle bundle;
    bundle.mode = PromptMode::Vanilla;
    std::string user;
    append_repo_section(user, repo);
    for (const auto& [tb, obs] : history) {
        append_testbench_section(user, tb);
        append_feedback_section(user, obs);
    }
    bundle.messages.push_back({Role::System, kSystemInstruction});
    bundle.messages.push_back({Role::User, std::move(user)});
    return bundle;
}

Testbench extract_testbench(const std::string& raw_output) {
    // Last fenced block wins; any ``` occurrence opens or closes a fence, so
    // prose before the opening marker ("Here: ```") still yields the block.
    std::vector<std::size_t> fence_starts;
    std::size_t pos = 0;
    while ((pos = raw_output.find("```", pos)) != std::string::npos) {
        fence_starts.push_back(pos);
        pos += 3;
    }
    if (fence_starts.size() >= 2) {
        // pair fences in order; take the last complete block
        std::size_t pairs = fence_starts.size() / 2;
        std::size_t open = fence_starts[2 * pairs - 2];
        std::size_t close = fence_starts[2 * pairs - 1];
        std::size_t body_start = raw_output.find('\n', open);
        if (body_start != std::string::npos && body_start + 1 <= close) {
            std::string body = raw_output.substr(body_start + 1, close - body_start - 1);
            if (!body.empty() && body.back() == '\n') body.pop_back();
            return Testbench{body};
        }
    }
    // no fence: whole output, trimmed
    std::size_t begin = raw_output.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return Testbench{};
    std::size_t end = raw_output.find_last_not_of(" \t\r\n");
    return Testbench{raw_output.substr(begin, end - begin + 1)};
}

// ─── GeneratorHandle ─────────────────────────────────────────

void GeneratorHandle::validate() const {
    if (id.empty()) throw ConfigError("GeneratorHandle: id must be nonempty");
    if (backend == GenBackend::HttpChat) {
        if (endpoint.empty() || model_name.empty())
            throw ConfigError("GeneratorHandle '" + id +
                              "': http backend needs endpoint and model_name");
    } else if (strategy.empty()) {
        throw ConfigError("GeneratorHandle '" + id + "': scripted backend needs strategy");
    }
    if (sampling.temperature < 0.0)
        throw ConfigError("GeneratorHandle '" + id + "': temperature must be >= 0");
    if (!(sampling.top_p > 0.0 && sampling.top_p <= 1.0))
        throw ConfigError("GeneratorHandle '" + id + "': top_p must be in (0,1]");
    if (sampling.max_output_tokens <= 0)
        throw ConfigError("GeneratorHandle '" + id + "': max_output_tokens must be > 0");
}

namespace {

std::map<std::string, std::string> parse_kv_list(const std::string& text) {
    std::map<std::string, std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string::npos)
            throw ConfigError("bad parameter '" + item + "' (expected k=v)");
        out[item.substr(0, eq)] = item.substr(eq + 1);
    }
    return out;
}

double param_double(const std::map<std::string, std::string>& params,
                    const std::string& key, double fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    return std::stod(it->second);
}

std::uint64_t param_uint(const std::map<std::string, std::string>& params,
                         const std::string& key, std::uint64_t fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    return std::stoull(it->second);
}

}  // namespace

GeneratorHandle GeneratorHandle::from_spec(const std::string& id,
                                           const std::string& spec) {
    GeneratorHandle handle;
    handle.id = id;
    if (spec.rfind("scripted:", 0) == 0) {
        handle.backend = GenBackend::Scripted;
        std::string rest = spec.substr(9);
        auto colon = rest.find(':');
        handle.strategy = rest.substr(0, colon);
        if (colon != std::string::npos)
            handle.params = parse_kv_list(rest.substr(colon + 1));
        handle.model_name = handle.strategy;
    } else if (spec.rfind("http:", 0) == 0) {
        handle.backend = GenBackend::HttpChat;
        std::string rest = spec.substr(5);
        auto bar = rest.find('|');
        if (bar == std::string::npos)
            throw ConfigError("http generator spec needs '<endpoint>|<model>': " + spec);
        handle.endpoint = rest.substr(0, bar);
        std::string tail = rest.substr(bar + 1);
        auto colon = tail.find(':');
        handle.model_name = tail.substr(0, colon);
        if (colon != std::string::npos) {
            auto kv = parse_kv_list(tail.substr(colon + 1));
            handle.sampling.temperature =
                param_double(kv, "temperature", handle.sampling.temperature);
            handle.sampling.top_p = param_double(kv, "top_p", handle.sampling.top_p);
            handle.sampling.max_output_tokens = static_cast<int>(
                param_uint(kv, "max_tokens",
                           static_cast<std::uint64_t>(handle.sampling.max_output_tokens)));
        }
    } else {
        throw ConfigError("unknown generator spec '" + spec +
                          "' (expected scripted:... or http:...)");
    }
    handle.validate();
    return handle;
}

// ─── Prompt-side parsing for scripted stubs ──────────────────

namespace promptview {

std::optional<std::string> last_section(const std::string& prompt,
                                        const std::string& marker) {
    std::size_t at = prompt.rfind(marker + "\n");
    if (at == std::string::npos) return std::nullopt;
    std::size_t open = prompt.find("```\n", at);
    if (open == std::string::npos) return std::nullopt;
    std::size_t body = open + 4;
    std::size_t close = prompt.find("\n```", body);
    if (close == std::string::npos) return std::nullopt;
    return prompt.substr(body, close - body);
}

std::optional<std::string> repo_file(const std::string& prompt,
                                     const std::string& path) {
    return last_section(prompt, "### File: " + path);
}

}  // namespace promptview

// ─── Scripted stubs ──────────────────────────────────────────

namespace {

std::string run_echo(const GeneratorHandle& handle) {
    auto it = handle.params.find("text");
    std::string body = it != handle.params.end()
                           ? it->second
                           : "module tb; initial begin end endmodule";
    return "Here is the testbench:\n" + fenced(body);
}

// Deterministic coverage climber for the synthetic backend: keeps the bin
// tokens already present in the prompt's current testbench and appends a
// seeded choice of uncovered bins. Optional hazard/trap probabilities let
// tests manufacture failure states.
std::string run_bin_greedy(const GeneratorHandle& handle, const std::string& prompt,
                           std::uint64_t seed) {
    auto design_text = promptview::repo_file(prompt, "design.txt");
    if (!design_text)
        throw ConfigError("bin_greedy stub: prompt has no design.txt section");
    SyntheticDesign design = SyntheticDesign::parse(*design_text);

    std::set<std::string> bin_set(design.bins.begin(), design.bins.end());
    std::vector<std::string> kept;
    if (auto current = promptview::last_section(prompt, "## Current testbench")) {
        std::set<std::string> seen;
        for (const auto& tok : tokenize(*current))
            if (bin_set.count(tok) && seen.insert(tok).second) kept.push_back(tok);
    }

    SplitMix64 rng(seed ^ fnv1a64(prompt));
    const double hazard_prob = param_double(handle.params, "hazard_prob", 0.0);
    const double trap_prob = param_double(handle.params, "trap_prob", 0.0);
    const std::uint64_t min_new = param_uint(handle.params, "min_new", 1);
    const std::uint64_t max_new =
        std::max(min_new, param_uint(handle.params, "max_new", min_new));

    const double roll = rng.unit();
    std::vector<std::string> tokens = kept;
    if (roll < hazard_prob && !design.hazard_tokens.empty()) {
        auto it = design.hazard_tokens.begin();
        std::advance(it, static_cast<long>(rng.below(design.hazard_tokens.size())));
        tokens.push_back(*it);
    } else if (roll < hazard_prob + trap_prob && !design.runtime_trap_tokens.empty()) {
        auto it = design.runtime_trap_tokens.begin();
        std::advance(it, static_cast<long>(rng.below(design.runtime_trap_tokens.size())));
        tokens.push_back(*it);
    } else {
        std::set<std::string> have(kept.begin(), kept.end());
        std::vector<std::string> uncovered;
        for (const auto& b : design.bins)
            if (!have.count(b)) uncovered.push_back(b);
        std::uint64_t want = min_new + rng.below(max_new - min_new + 1);
        for (std::uint64_t i = 0; i < want && !uncovered.empty(); ++i) {
            std::size_t pick = static_cast<std::size_t>(rng.below(uncovered.size()));
            tokens.push_back(uncovered[pick]);
            uncovered.erase(uncovered.begin() + static_cast<long>(pick));
        }
    }
    if (tokens.empty()) tokens.push_back("tb_idle");

    std::string body;
    for (const auto& t : tokens) body += t + "\n";
    return "Coverage-extended testbench:\n" + fenced(body);
}

std::string run_http(const GeneratorHandle& handle, const PromptBundle& bundle,
                     std::uint64_t seed) {
    // split endpoint into base url and path
    std::string url = handle.endpoint;
    auto scheme = url.find("://");
    std::size_t path_at = scheme == std::string::npos ? url.find('/')
                                                      : url.find('/', scheme + 3);
    std::string base = path_at == std::string::npos ? url : url.substr(0, path_at);
    std::string path = path_at == std::string::npos ? "/" : url.substr(path_at);

    json body;
    body["model"] = handle.model_name;
    body["messages"] = json::array();
    for (const auto& m : bundle.messages)
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.text}});
    body["temperature"] = handle.sampling.temperature;
    body["top_p"] = handle.sampling.top_p;
    body["max_tokens"] = handle.sampling.max_output_tokens;
    body["seed"] = seed;
    const std::string payload = body.dump();

    std::string last_error = "unknown transport failure";
    double backoff = handle.retry_initial_backoff_s;
    for (int attempt = 0; attempt <= handle.retry_count; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
            backoff *= 2.0;
        }
        httplib::Client client(base);
        client.set_read_timeout(300, 0);
        auto res = client.Post(path, payload, "application/json");
        if (!res) {
            last_error = "connection to " + base + " failed";
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        json reply = json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") ||
            reply["choices"].empty()) {
            last_error = "malformed completion response";
            continue;
        }
        return reply["choices"][0].value("message", json::object())
            .value("content", std::string{});
    }
    throw TransportError("generator '" + handle.id + "': " + last_error);
}

}  // namespace

std::string generate(const GeneratorHandle& handle, const PromptBundle& bundle,
                     std::uint64_t seed) {
    if (handle.backend == GenBackend::HttpChat) return run_http(handle, bundle, seed);
    const std::string prompt = bundle.flatten();
    if (handle.strategy == "echo") return run_echo(handle);
    if (handle.strategy == "bin_greedy") return run_bin_greedy(handle, prompt, seed);
    throw ConfigError("unknown scripted strategy '" + handle.strategy + "'");
}

const std::string& default_specialist_prompt() {
    static const std::string asset =
        "<generation_rules>\n"
        "Follow the expert-written SystemVerilog validity rules below:\n"
        "1. Do not use based literals with expressions; size values by the LHS instead.\n"
        "2. Use only valid hex digits (0-9, A-F) in hex literals.\n"
        "3. A hex literal starts with its bit width, then 'h', then hex digits; make\n"
        "   sure the width can hold the value. Declare procedurally driven signals as\n"
        "   logic, not wire.\n"
        "4. Wrap tasks with 'task' ... 'endtask', never a bare 'end'.\n"
        "5. Avoid $monitor unless requested; prefer $display in initial or always blocks.\n"
        "6. Parenthesize full delay expressions: #(N * CLK_PERIOD).\n"
        "7. Signals tied to module outputs are read-only; never drive them procedurally.\n"
        "8. Never index $random or $urandom directly; assign to a variable first.\n"
        "9. Declare all module ports in the header (ANSI style).\n"
        "10. Declare block variables at the top of the block, not inside statements.\n"
        "11. Use indexed part-selects (base +: width) instead of variable [msb:lsb].\n"
        "12. Repeat the RTL `timescale directive at the top of the testbench.\n"
        "</generation_rules>\n";
    return asset;
}

}  // namespace covforge
