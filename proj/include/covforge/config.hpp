#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "covforge/stages.hpp"

namespace covforge {

// Minimal INI reader: [section] headers, key = value lines, '#'/';' comments.
using IniData = std::map<std::string, std::map<std::string, std::string>>;

IniData parse_ini(const std::string& text);
IniData load_ini(const std::filesystem::path& path);

struct SimulatorSettings {
    SimBackend backend = SimBackend::Synthetic;
    std::string command;
    double timeout_s = 30.0;
    std::string report_path;
    unsigned workers = 1;

    SimulatorConfig to_config() const;
};

// A full synthesis job: models, trace shape, policies, budget, run knobs.
struct SynthJobConfig {
    GeneratorHandle teacher;
    GeneratorHandle student;
    std::optional<TraceType> trace_type;  // default: stage-derived
    unsigned trajectory_length = 2;
    unsigned candidates_per_state = 5;
    unsigned transitions_per_state = 4;
    SelectionPolicy selection;
    std::optional<double> tau_delta;  // default: stage-derived
    bool min_absolute_set = false;
    std::optional<double> min_absolute;
    std::uint64_t budget_limit = 1000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    SimulatorSettings simulator;
    std::optional<int> stage_index;  // set by --stage or [stage] index
    std::optional<bool> include_direct;
    std::optional<bool> specialist_prompt;
    std::optional<bool> rebalance_enabled;

    static SynthJobConfig from_ini(const IniData& ini);

    // StageSpec with stage defaults overlaid by explicit config settings.
    StageSpec stage_spec(int stage_index) const;
    TraceConfig trace_config(const StageSpec& spec) const;
};

}  // namespace covforge
