#include "covforge/config.hpp"

#include <fstream>
#include <sstream>

namespace covforge {

namespace {

std::string trim(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

IniData parse_ini(const std::string& text) {
    IniData data;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config line " + std::to_string(line_no) +
                                  ": unterminated section header");
            section = trim(t.substr(1, t.size() - 2));
            data[section];
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected key = value");
        data[section][trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
    }
    return data;
}

IniData load_ini(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_ini(ss.str());
}

namespace {

const std::map<std::string, std::string>* section(const IniData& ini,
                                                  const std::string& name) {
    auto it = ini.find(name);
    return it == ini.end() ? nullptr : &it->second;
}

std::optional<std::string> get(const IniData& ini, const std::string& sec,
                               const std::string& key) {
    const auto* s = section(ini, sec);
    if (!s) return std::nullopt;
    auto it = s->find(key);
    if (it == s->end()) return std::nullopt;
    return it->second;
}

bool parse_bool(const std::string& value, const std::string& context) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError(context + ": bad boolean '" + value + "'");
}

}  // namespace

SimulatorConfig SimulatorSettings::to_config() const {
    SimulatorConfig config;
    config.backend = backend;
    config.command_template = command;
    config.timeout_seconds = timeout_s;
    config.coverage_report_path_template = report_path;
    config.workers = workers;
    return config;
}

SynthJobConfig SynthJobConfig::from_ini(const IniData& ini) {
    SynthJobConfig job;
    auto teacher_spec = get(ini, "models", "teacher");
    auto student_spec = get(ini, "models", "student");
    if (!teacher_spec) throw ConfigError("config: [models] teacher is required");
    job.teacher = GeneratorHandle::from_spec("teacher", *teacher_spec);
    job.student = student_spec ? GeneratorHandle::from_spec("student", *student_spec)
                               : job.teacher;

    if (auto v = get(ini, "trace", "type")) job.trace_type = trace_type_from_string(*v);
    if (auto v = get(ini, "trace", "n")) job.trajectory_length = std::stoul(*v);
    if (auto v = get(ini, "trace", "n_cand")) job.candidates_per_state = std::stoul(*v);
    if (auto v = get(ini, "trace", "n_trans")) job.transitions_per_state = std::stoul(*v);

    if (auto v = get(ini, "selection", "strategy"))
        job.selection.strategy = selection_strategy_from_string(*v);
    if (auto v = get(ini, "selection", "delta_med"))
        job.selection.median_gap_threshold = std::stod(*v);
    if (auto v = get(ini, "selection", "max_states"))
        job.selection.max_states_per_repo = std::stoul(*v);
    if (auto v = get(ini, "selection", "include_failure"))
        job.selection.include_failure_state = parse_bool(*v, "[selection] include_failure");

    if (auto v = get(ini, "rejection", "tau_delta")) job.tau_delta = std::stod(*v);
    if (auto v = get(ini, "rejection", "min_absolute")) {
        job.min_absolute_set = true;
        if (*v == "none") job.min_absolute = std::nullopt;
        else job.min_absolute = std::stod(*v);
    }

    if (auto v = get(ini, "budget", "simulator_calls")) job.budget_limit = std::stoull(*v);
    if (auto v = get(ini, "run", "seed")) job.seed = std::stoull(*v);
    if (auto v = get(ini, "run", "workers")) job.workers = std::stoul(*v);

    if (auto v = get(ini, "simulator", "backend"))
        job.simulator.backend =
            *v == "process" ? SimBackend::Process : SimBackend::Synthetic;
    if (auto v = get(ini, "simulator", "command")) job.simulator.command = *v;
    if (auto v = get(ini, "simulator", "timeout_s")) job.simulator.timeout_s = std::stod(*v);
    if (auto v = get(ini, "simulator", "report_path")) job.simulator.report_path = *v;
    if (auto v = get(ini, "simulator", "workers")) job.simulator.workers = std::stoul(*v);

    if (auto v = get(ini, "stage", "index")) job.stage_index = std::stoi(*v);
    if (auto v = get(ini, "stage", "include_direct"))
        job.include_direct = parse_bool(*v, "[stage] include_direct");
    if (auto v = get(ini, "stage", "specialist_prompt"))
        job.specialist_prompt = parse_bool(*v, "[stage] specialist_prompt");
    if (auto v = get(ini, "stage", "rebalance"))
        job.rebalance_enabled = parse_bool(*v, "[stage] rebalance");
    return job;
}

StageSpec SynthJobConfig::stage_spec(int stage_index) const {
    StageSpec spec = StageSpec::defaults_for(stage_index);
    if (trace_type) spec.trace_type = *trace_type;
    spec.selection = selection;
    if (tau_delta) spec.rejection.min_delta = *tau_delta;
    if (min_absolute_set) spec.rejection.min_absolute_coverage = min_absolute;
    spec.trajectory_length = trajectory_length;
    spec.candidates_per_state = candidates_per_state;
    spec.transitions_per_state = transitions_per_state;
    if (include_direct) spec.include_direct = *include_direct;
    if (specialist_prompt) spec.specialist_prompt = *specialist_prompt;
    if (rebalance_enabled) {
        if (*rebalance_enabled && !spec.rebalance) spec.rebalance = RebalanceRule{};
        if (!*rebalance_enabled) spec.rebalance = std::nullopt;
    }
    spec.validate();
    return spec;
}

TraceConfig SynthJobConfig::trace_config(const StageSpec& spec) const {
    TraceConfig trace;
    trace.trace_type = spec.trace_type;
    switch (spec.trace_type) {
        case TraceType::FullTeacher:
            trace.intermediate_model = teacher;
            trace.transition_model = teacher;
            break;
        case TraceType::Imitation:
            trace.intermediate_model = student;
            trace.transition_model = teacher;
            break;
        case TraceType::SelfSampling:
            trace.intermediate_model = student;
            trace.transition_model = student;
            break;
    }
    trace.trajectory_length = spec.trajectory_length;
    trace.candidates_per_state = spec.candidates_per_state;
    trace.transitions_per_state = spec.transitions_per_state;
    trace.validate();
    return trace;
}

}  // namespace covforge
