#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "covforge/synth.hpp"

namespace covforge {

// ─── Stage configuration ─────────────────────────────────────

struct RebalanceRule {
    std::size_t short_context_limit = 1000;  // whitespace tokens of the repo
    double keep_fraction_direct = 1.0 / 3.0;
    double keep_fraction_agentic = 0.5;

    void validate() const;
};

struct StageSpec {
    int stage_index = 0;
    TraceType trace_type = TraceType::FullTeacher;
    RejectionPolicy rejection;
    SelectionPolicy selection;
    std::optional<RebalanceRule> rebalance;
    bool include_direct = true;
    bool specialist_prompt = false;
    unsigned trajectory_length = 2;
    unsigned candidates_per_state = 5;
    unsigned transitions_per_state = 4;

    void validate() const;

    // Stage defaults: k=0 full-teacher warmup (tau 0.01, absolute floor 0.5,
    // specialist prompt, rebalancing); k=1 imitation; k>=2 self-sampling
    // with agentic data only.
    static StageSpec defaults_for(int stage_index);
};

// ─── SFT records and datasets ────────────────────────────────

struct SftMeta {
    std::string repo_id;
    int stage_index = 0;
    TraceType trace_type = TraceType::FullTeacher;
    GenMode mode = GenMode::Direct;
    double delta_cov = 0.0;
    double final_cov = 0.0;
    std::uint64_t sampler_seed = 0;

    json to_json() const;
    static SftMeta from_json(const json& j);
};

struct SftRecord {
    std::vector<Message> messages;  // prompt turns + exactly one trailing assistant turn
    SftMeta meta;

    json to_json() const;
    static SftRecord from_json(const json& j);
};

// Re-renders the memoryless prompt from the saved state, never including the
// specialist section.
SftRecord to_sft_record(const TransitionRecord& record);

struct StageManifest {
    int stage_index = 0;
    std::vector<std::string> source_model_ids;
    std::uint64_t simulator_calls_used = 0;
    std::map<std::string, std::uint64_t> counts;  // "<mode>/<trace_type>" -> n
    std::string config_fingerprint;
    std::string corpus_fingerprint;
    bool truncated = false;
    bool naive_augmentation = false;
    std::vector<int> constituent_stages;

    json to_json() const;
    static StageManifest from_json(const json& j);
};

struct StageDataset {
    std::vector<SftRecord> records;
    StageManifest manifest;
};

std::map<std::string, std::uint64_t> count_records(const std::vector<SftRecord>& records);

std::string corpus_fingerprint(const std::vector<RepositoryPtr>& corpus);

// ─── Operations ──────────────────────────────────────────────

struct StageBuildOptions {
    std::uint64_t seed = 0;
    unsigned workers = 1;
    std::string config_fingerprint;
    const SynthObserver* observer = nullptr;
};

// Runs synthesize_repo across the corpus (direct pass when configured, then
// the agentic pass), converts accepted transitions to SFT records, applies
// rebalancing, and assembles the manifest. Budget truncation lands in the
// manifest, not in an error.
StageDataset build_stage_dataset(const std::vector<RepositoryPtr>& corpus,
                                 const StageSpec& spec, const TraceConfig& trace,
                                 const Simulator& simulator, Budget& budget,
                                 const StageBuildOptions& options);

// Keeps ceil(fraction * n) of each short group by seeded sampling without
// replacement; long-context records always survive. Output ordered by
// (repo_id, sampler_seed).
std::vector<SftRecord> rebalance(std::vector<SftRecord> records,
                                 const RebalanceRule& rule,
                                 const std::map<std::string, std::size_t>& context_lengths,
                                 std::uint64_t seed);

// Naive-augmentation baseline: concatenates datasets from the same corpus.
StageDataset union_datasets(const std::vector<StageDataset>& datasets);

// One JSON object per line plus a sibling "<path>.manifest.json".
void export_sft(const StageDataset& dataset, const std::filesystem::path& path);
StageDataset import_sft(const std::filesystem::path& path);

// ─── Stage registry ──────────────────────────────────────────
// Maps stage index -> externally trained student endpoint. Lines:
//   stage <k> <generator-spec> <checkpoint-label>

struct StageRegistryEntry {
    std::string generator_spec;
    std::string checkpoint_label;
};

class StageRegistry {
public:
    static StageRegistry parse(const std::string& text);
    static StageRegistry load(const std::filesystem::path& path);

    const std::map<int, StageRegistryEntry>& entries() const { return entries_; }
    GeneratorHandle student_for_stage(int stage_index) const;

private:
    std::map<int, StageRegistryEntry> entries_;
};

}  // namespace covforge
