#include "covforge/core.hpp"

#include <cmath>
#include <sstream>

namespace covforge {

namespace {

bool path_is_clean(const std::string& path) {
    if (path.empty()) return false;
    if (path.front() == '/') return false;
    // reject any parent-directory traversal segment
    std::stringstream ss(path);
    std::string segment;
    while (std::getline(ss, segment, '/')) {
        if (segment == "..") return false;
    }
    return true;
}

}  // namespace

Repository::Repository(std::string id, std::map<std::string, std::string> files,
                       double pass_threshold)
    : id_(std::move(id)), files_(std::move(files)), pass_threshold_(pass_threshold) {
    if (id_.empty()) throw InvariantError("Repository: id must be nonempty");
    if (files_.empty())
        throw InvariantError("Repository '" + id_ + "': files must be nonempty");
    for (const auto& [path, _] : files_) {
        if (!path_is_clean(path))
            throw InvariantError("Repository '" + id_ + "': bad file path '" + path + "'");
    }
    if (!(pass_threshold_ > 0.0 && pass_threshold_ <= 1.0))
        throw InvariantError("Repository '" + id_ + "': pass_threshold must be in (0,1]");
    context_length_ = 0;
    for (const auto& [_, content] : files_) context_length_ += token_count(content);
}

json Repository::to_json() const {
    json files = json::object();
    for (const auto& [path, content] : files_) files[path] = content;
    return json{{"id", id_},
                {"files", std::move(files)},
                {"pass_threshold", pass_threshold_},
                {"context_length", context_length_}};
}

Repository Repository::from_json(const json& j) {
    std::map<std::string, std::string> files;
    for (const auto& [path, content] : j.at("files").items())
        files[path] = content.get<std::string>();
    return Repository(j.at("id").get<std::string>(), std::move(files),
                      j.at("pass_threshold").get<double>());
}

std::string to_string(SimStatus s) {
    switch (s) {
        case SimStatus::NotRun: return "not_run";
        case SimStatus::CompileError: return "compile_error";
        case SimStatus::RuntimeError: return "runtime_error";
        case SimStatus::Timeout: return "timeout";
        case SimStatus::Success: return "success";
    }
    throw InvariantError("unknown SimStatus");
}

SimStatus sim_status_from_string(std::string_view s) {
    if (s == "not_run") return SimStatus::NotRun;
    if (s == "compile_error") return SimStatus::CompileError;
    if (s == "runtime_error") return SimStatus::RuntimeError;
    if (s == "timeout") return SimStatus::Timeout;
    if (s == "success") return SimStatus::Success;
    throw InvariantError("unknown status string: " + std::string(s));
}

FeedbackObservation::FeedbackObservation(SimStatus status,
                                         std::map<std::string, MetricCount> metrics,
                                         std::string log, std::size_t log_cap_bytes)
    : status_(status), metrics_(std::move(metrics)),
      log_(truncate_middle(log, log_cap_bytes)) {
    if (status_ == SimStatus::NotRun && (!metrics_.empty() || !log_.empty()))
        throw InvariantError("FeedbackObservation: not_run must be the null observation");
    if (!metrics_.empty() && status_ != SimStatus::Success)
        throw InvariantError("FeedbackObservation: metrics require status success");
    for (const auto& [name, m] : metrics_) {
        if (m.total == 0)
            throw InvariantError("FeedbackObservation: metric '" + name + "' has zero total");
        if (m.covered > m.total)
            throw InvariantError("FeedbackObservation: metric '" + name + "' covered > total");
    }
}

json FeedbackObservation::to_json() const {
    json metrics = json::object();
    for (const auto& [name, m] : metrics_)
        metrics[name] = json{{"covered", m.covered}, {"total", m.total}};
    return json{{"status", to_string(status_)},
                {"metrics", std::move(metrics)},
                {"log", log_}};
}

FeedbackObservation FeedbackObservation::from_json(const json& j) {
    SimStatus status = sim_status_from_string(j.at("status").get<std::string>());
    std::map<std::string, MetricCount> metrics;
    for (const auto& [name, m] : j.at("metrics").items())
        metrics[name] = MetricCount{m.at("covered").get<std::uint64_t>(),
                                    m.at("total").get<std::uint64_t>()};
    return FeedbackObservation(status, std::move(metrics), j.at("log").get<std::string>());
}

double coverage_score(const FeedbackObservation& obs) {
    if (obs.status() != SimStatus::Success) return 0.0;
    const auto& metrics = obs.metrics();
    if (metrics.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [_, m] : metrics)
        sum += static_cast<double>(m.covered) / static_cast<double>(m.total);
    return sum / static_cast<double>(metrics.size());
}

State State::initial(RepositoryPtr repo) {
    if (!repo) throw InvariantError("State: null repository");
    return State(std::move(repo), Testbench{}, FeedbackObservation{}, 0.0);
}

State State::make(RepositoryPtr repo, Testbench testbench,
                  FeedbackObservation observation) {
    if (!repo) throw InvariantError("State: null repository");
    if (testbench.empty() && observation.status() != SimStatus::NotRun)
        throw InvariantError("State: empty testbench requires a not_run observation");
    if (!testbench.empty() && observation.status() == SimStatus::NotRun)
        throw InvariantError("State: nonempty testbench requires an executed observation");
    double cov = coverage_score(observation);
    return State(std::move(repo), std::move(testbench), std::move(observation), cov);
}

json State::to_json() const {
    return json{{"repo", repo_->to_json()},
                {"testbench", testbench_.text},
                {"observation", observation_.to_json()},
                {"coverage", coverage_}};
}

State State::from_json(const json& j) {
    auto repo = std::make_shared<const Repository>(Repository::from_json(j.at("repo")));
    Testbench tb{j.at("testbench").get<std::string>()};
    auto obs = FeedbackObservation::from_json(j.at("observation"));
    return make(std::move(repo), std::move(tb), std::move(obs));
}

json Provenance::to_json() const {
    return json{{"stage_index", stage_index},
                {"trace_type", to_string(trace_type)},
                {"mode", to_string(mode)},
                {"generator_id", generator_id},
                {"sampler_seed", sampler_seed},
                {"specialist_prompt_used", specialist_prompt_used}};
}

Provenance Provenance::from_json(const json& j) {
    Provenance p;
    p.stage_index = j.at("stage_index").get<int>();
    p.trace_type = trace_type_from_string(j.at("trace_type").get<std::string>());
    p.mode = gen_mode_from_string(j.at("mode").get<std::string>());
    p.generator_id = j.at("generator_id").get<std::string>();
    p.sampler_seed = j.at("sampler_seed").get<std::uint64_t>();
    p.specialist_prompt_used = j.at("specialist_prompt_used").get<bool>();
    return p;
}

std::string to_string(TraceType t) {
    switch (t) {
        case TraceType::FullTeacher: return "full_teacher";
        case TraceType::Imitation: return "imitation";
        case TraceType::SelfSampling: return "self_sampling";
    }
    throw InvariantError("unknown TraceType");
}

TraceType trace_type_from_string(std::string_view s) {
    if (s == "full_teacher") return TraceType::FullTeacher;
    if (s == "imitation") return TraceType::Imitation;
    if (s == "self_sampling") return TraceType::SelfSampling;
    throw InvariantError("unknown trace type: " + std::string(s));
}

std::string to_string(GenMode m) {
    return m == GenMode::Direct ? "direct" : "agentic";
}

GenMode gen_mode_from_string(std::string_view s) {
    if (s == "direct") return GenMode::Direct;
    if (s == "agentic") return GenMode::Agentic;
    throw InvariantError("unknown mode: " + std::string(s));
}

TransitionRecord::TransitionRecord(State source, Testbench generated,
                                   FeedbackObservation result, Provenance provenance)
    : source_(std::move(source)), generated_(std::move(generated)),
      result_(std::move(result)), provenance_(std::move(provenance)) {
    delta_cov_ = coverage_score(result_) - source_.coverage();
    const bool direct = provenance_.mode == GenMode::Direct;
    if (direct != source_.testbench().empty())
        throw InvariantError("TransitionRecord: mode direct iff source testbench empty");
}

json TransitionRecord::to_json() const {
    return json{{"source", source_.to_json()},
                {"generated", generated_.text},
                {"result", result_.to_json()},
                {"delta_cov", delta_cov_},
                {"provenance", provenance_.to_json()}};
}

TransitionRecord TransitionRecord::from_json(const json& j) {
    TransitionRecord rec(State::from_json(j.at("source")),
                         Testbench{j.at("generated").get<std::string>()},
                         FeedbackObservation::from_json(j.at("result")),
                         Provenance::from_json(j.at("provenance")));
    return rec;
}

}  // namespace covforge
