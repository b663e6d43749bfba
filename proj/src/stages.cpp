#include "covforge/stages.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace covforge {

namespace fs = std::filesystem;

void RebalanceRule::validate() const {
    if (short_context_limit == 0)
        throw ConfigError("RebalanceRule: short_context_limit must be > 0");
    auto frac_ok = [](double f) { return f > 0.0 && f <= 1.0; };
    if (!frac_ok(keep_fraction_direct) || !frac_ok(keep_fraction_agentic))
        throw ConfigError("RebalanceRule: keep fractions must be in (0,1]");
}

void StageSpec::validate() const {
    if (stage_index < 0) throw ConfigError("StageSpec: stage_index must be >= 0");
    rejection.validate();
    selection.validate();
    if (rebalance) rebalance->validate();
    if (trajectory_length == 0 || candidates_per_state == 0 || transitions_per_state == 0)
        throw ConfigError("StageSpec: trace parameters must be >= 1");
}

StageSpec StageSpec::defaults_for(int stage_index) {
    StageSpec spec;
    spec.stage_index = stage_index;
    if (stage_index == 0) {
        spec.trace_type = TraceType::FullTeacher;
        spec.rejection.min_delta = 0.01;
        spec.rejection.min_absolute_coverage = 0.5;
        spec.specialist_prompt = true;
        spec.rebalance = RebalanceRule{};
        spec.include_direct = true;
    } else {
        spec.trace_type = stage_index == 1 ? TraceType::Imitation
                                           : TraceType::SelfSampling;
        spec.rejection.min_delta = 0.01;
        spec.rejection.min_absolute_coverage = std::nullopt;
        spec.specialist_prompt = false;
        spec.include_direct = stage_index == 1;  // stage 2+: agentic data only
    }
    return spec;
}

json SftMeta::to_json() const {
    return json{{"repo_id", repo_id},
                {"stage_index", stage_index},
                {"trace_type", to_string(trace_type)},
                {"mode", to_string(mode)},
                {"delta_cov", delta_cov},
                {"final_cov", final_cov},
                {"sampler_seed", sampler_seed}};
}

SftMeta SftMeta::from_json(const json& j) {
    SftMeta m;
    m.repo_id = j.at("repo_id").get<std::string>();
    m.stage_index = j.at("stage_index").get<int>();
    m.trace_type = trace_type_from_string(j.at("trace_type").get<std::string>());
    m.mode = gen_mode_from_string(j.at("mode").get<std::string>());
    m.delta_cov = j.at("delta_cov").get<double>();
    m.final_cov = j.at("final_cov").get<double>();
    m.sampler_seed = j.at("sampler_seed").get<std::uint64_t>();
    return m;
}

json SftRecord::to_json() const {
    json msgs = json::array();
    for (const auto& m : messages)
        msgs.push_back({{"role", to_string(m.role)}, {"content", m.text}});
    return json{{"messages", std::move(msgs)}, {"meta", meta.to_json()}};
}

SftRecord SftRecord::from_json(const json& j) {
    SftRecord rec;
    for (const auto& m : j.at("messages")) {
        const std::string role = m.at("role").get<std::string>();
        Role r = role == "system" ? Role::System
                 : role == "user" ? Role::User
                                  : Role::Assistant;
        rec.messages.push_back({r, m.at("content").get<std::string>()});
    }
    rec.meta = SftMeta::from_json(j.at("meta"));
    return rec;
}

SftRecord to_sft_record(const TransitionRecord& record) {
    SftRecord rec;
    // re-render from the saved state: the specialist section can never leak
    PromptBundle bundle = render_memoryless(record.source());
    rec.messages = bundle.messages;
    rec.messages.push_back({Role::Assistant, record.generated().text});
    rec.meta.repo_id = record.source().repo()->id();
    rec.meta.stage_index = record.provenance().stage_index;
    rec.meta.trace_type = record.provenance().trace_type;
    rec.meta.mode = record.provenance().mode;
    rec.meta.delta_cov = record.delta_cov();
    rec.meta.final_cov = record.final_cov();
    rec.meta.sampler_seed = record.provenance().sampler_seed;
    return rec;
}

json StageManifest::to_json() const {
    json counts_json = json::object();
    for (const auto& [key, n] : counts) counts_json[key] = n;
    json j{{"stage_index", stage_index},
           {"source_model_ids", source_model_ids},
           {"simulator_calls_used", simulator_calls_used},
           {"counts", std::move(counts_json)},
           {"config_fingerprint", config_fingerprint},
           {"corpus_fingerprint", corpus_fingerprint},
           {"truncated", truncated},
           {"naive_augmentation", naive_augmentation}};
    if (naive_augmentation) j["constituent_stages"] = constituent_stages;
    return j;
}

StageManifest StageManifest::from_json(const json& j) {
    StageManifest m;
    m.stage_index = j.at("stage_index").get<int>();
    m.source_model_ids = j.at("source_model_ids").get<std::vector<std::string>>();
    m.simulator_calls_used = j.at("simulator_calls_used").get<std::uint64_t>();
    for (const auto& [key, n] : j.at("counts").items())
        m.counts[key] = n.get<std::uint64_t>();
    m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    m.corpus_fingerprint = j.at("corpus_fingerprint").get<std::string>();
    m.truncated = j.at("truncated").get<bool>();
    m.naive_augmentation = j.value("naive_augmentation", false);
    if (j.contains("constituent_stages"))
        m.constituent_stages = j.at("constituent_stages").get<std::vector<int>>();
    return m;
}

std::map<std::string, std::uint64_t> count_records(const std::vector<SftRecord>& records) {
    std::map<std::string, std::uint64_t> counts;
    for (const auto& rec : records)
        ++counts[to_string(rec.meta.mode) + "/" + to_string(rec.meta.trace_type)];
    return counts;
}

std::string corpus_fingerprint(const std::vector<RepositoryPtr>& corpus) {
    std::vector<const Repository*> sorted;
    sorted.reserve(corpus.size());
    for (const auto& r : corpus) sorted.push_back(r.get());
    std::sort(sorted.begin(), sorted.end(),
              [](const Repository* a, const Repository* b) { return a->id() < b->id(); });
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const Repository* repo : sorted) {
        h = fnv1a64(repo->id(), h);
        for (const auto& [path, content] : repo->files()) {
            h = fnv1a64(path, h);
            h = fnv1a64(content, h);
        }
    }
    return hex64(h);
}

StageDataset build_stage_dataset(const std::vector<RepositoryPtr>& corpus,
                                 const StageSpec& spec, const TraceConfig& trace,
                                 const Simulator& simulator, Budget& budget,
                                 const StageBuildOptions& options) {
    spec.validate();
    if (trace.trace_type != spec.trace_type)
        throw ConfigError("build_stage_dataset: trace type mismatch with stage spec");

    // canonical repo order, independent of worker scheduling
    std::vector<RepositoryPtr> repos = corpus;
    std::sort(repos.begin(), repos.end(),
              [](const RepositoryPtr& a, const RepositoryPtr& b) {
                  return a->id() < b->id();
              });

    const std::optional<std::string> specialist =
        spec.specialist_prompt ? std::optional<std::string>(default_specialist_prompt())
                               : std::nullopt;
    const std::uint64_t used_before = budget.used();

    struct RepoOutput {
        std::vector<TransitionRecord> records;
        bool truncated = false;
    };
    std::vector<RepoOutput> outputs(repos.size());

    parallel_for(repos.size(), options.workers, [&](std::size_t i) {
        RepoOutput& out = outputs[i];
        if (spec.include_direct) {
            TraceConfig direct = trace;
            direct.trajectory_length = 1;
            try {
                SynthResult r = synthesize_repo(repos[i], direct, spec.selection,
                                                spec.rejection, simulator, budget,
                                                options.seed, spec.stage_index,
                                                specialist, options.observer);
                out.truncated |= r.truncated;
                for (auto& rec : r.records) out.records.push_back(std::move(rec));
            } catch (const BudgetExhausted&) {
                out.truncated = true;
            }
        }
        if (trace.trajectory_length >= 2) {
            try {
                SynthResult r = synthesize_repo(repos[i], trace, spec.selection,
                                                spec.rejection, simulator, budget,
                                                options.seed, spec.stage_index,
                                                specialist, options.observer);
                out.truncated |= r.truncated;
                for (auto& rec : r.records) out.records.push_back(std::move(rec));
            } catch (const BudgetExhausted&) {
                out.truncated = true;
            }
        }
    });

    StageDataset dataset;
    std::map<std::string, std::size_t> context_lengths;
    for (std::size_t i = 0; i < repos.size(); ++i) {
        dataset.manifest.truncated |= outputs[i].truncated;
        context_lengths[repos[i]->id()] = repos[i]->context_length();
        for (const auto& rec : outputs[i].records)
            dataset.records.push_back(to_sft_record(rec));
    }

    if (spec.rebalance)
        dataset.records = rebalance(std::move(dataset.records), *spec.rebalance,
                                    context_lengths, options.seed);

    dataset.manifest.stage_index = spec.stage_index;
    dataset.manifest.source_model_ids = {trace.intermediate_model.id,
                                         trace.transition_model.id};
    dataset.manifest.simulator_calls_used = budget.used() - used_before;
    dataset.manifest.counts = count_records(dataset.records);
    dataset.manifest.config_fingerprint = options.config_fingerprint;
    dataset.manifest.corpus_fingerprint = corpus_fingerprint(corpus);
    return dataset;
}

std::vector<SftRecord> rebalance(std::vector<SftRecord> records,
                                 const RebalanceRule& rule,
                                 const std::map<std::string, std::size_t>& context_lengths,
                                 std::uint64_t seed) {
    rule.validate();
    auto is_short = [&](const SftRecord& rec) {
        auto it = context_lengths.find(rec.meta.repo_id);
        if (it == context_lengths.end())
            throw InvariantError("rebalance: unknown repo id '" + rec.meta.repo_id + "'");
        return it->second <= rule.short_context_limit;
    };

    std::vector<std::size_t> short_direct, short_agentic, keep;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (!is_short(records[i])) {
            keep.push_back(i);
        } else if (records[i].meta.mode == GenMode::Direct) {
            short_direct.push_back(i);
        } else {
            short_agentic.push_back(i);
        }
    }

    auto sample_group = [&](std::vector<std::size_t>& group, double fraction,
                            const char* scope) {
        if (group.empty()) return;
        const std::size_t want = static_cast<std::size_t>(
            std::ceil(fraction * static_cast<double>(group.size())));
        SplitMix64 rng(derive_seed(seed, scope));
        std::vector<std::size_t> pool = group;
        std::vector<std::size_t> chosen;
        while (chosen.size() < want && !pool.empty()) {
            std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
            chosen.push_back(pool[pick]);
            pool.erase(pool.begin() + static_cast<long>(pick));
        }
        keep.insert(keep.end(), chosen.begin(), chosen.end());
    };
    sample_group(short_direct, rule.keep_fraction_direct, "rebalance-direct");
    sample_group(short_agentic, rule.keep_fraction_agentic, "rebalance-agentic");

    std::vector<SftRecord> out;
    out.reserve(keep.size());
    for (std::size_t i : keep) out.push_back(std::move(records[i]));
    std::stable_sort(out.begin(), out.end(), [](const SftRecord& a, const SftRecord& b) {
        if (a.meta.repo_id != b.meta.repo_id) return a.meta.repo_id < b.meta.repo_id;
        return a.meta.sampler_seed < b.meta.sampler_seed;
    });
    return out;
}

StageDataset union_datasets(const std::vector<StageDataset>& datasets) {
    if (datasets.empty()) throw ConfigError("union_datasets: no datasets");
    StageDataset out;
    const std::string& fingerprint = datasets.front().manifest.corpus_fingerprint;
    std::uint64_t calls = 0;
    for (const auto& ds : datasets) {
        if (ds.manifest.corpus_fingerprint != fingerprint)
            throw CorpusMismatch("union_datasets: corpus fingerprints differ (" +
                                 fingerprint + " vs " + ds.manifest.corpus_fingerprint +
                                 ")");
        for (const auto& rec : ds.records) out.records.push_back(rec);
        calls += ds.manifest.simulator_calls_used;
        out.manifest.truncated |= ds.manifest.truncated;
        out.manifest.constituent_stages.push_back(ds.manifest.stage_index);
        for (const auto& id : ds.manifest.source_model_ids)
            if (std::find(out.manifest.source_model_ids.begin(),
                          out.manifest.source_model_ids.end(),
                          id) == out.manifest.source_model_ids.end())
                out.manifest.source_model_ids.push_back(id);
    }
    out.manifest.stage_index = datasets.back().manifest.stage_index;
    out.manifest.naive_augmentation = true;
    out.manifest.simulator_calls_used = calls;
    out.manifest.corpus_fingerprint = fingerprint;
    out.manifest.config_fingerprint = datasets.front().manifest.config_fingerprint;
    out.manifest.counts = count_records(out.records);
    return out;
}

void export_sft(const StageDataset& dataset, const fs::path& path) {
    {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw Error("export_sft: cannot open '" + path.string() + "'");
        for (const auto& rec : dataset.records) out << rec.to_json().dump() << '\n';
    }
    fs::path manifest_path = path;
    manifest_path += ".manifest.json";
    std::ofstream manifest(manifest_path, std::ios::binary);
    if (!manifest)
        throw Error("export_sft: cannot open '" + manifest_path.string() + "'");
    manifest << dataset.manifest.to_json().dump(2) << '\n';
}

StageDataset import_sft(const fs::path& path) {
    StageDataset dataset;
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("import_sft: cannot open '" + path.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        dataset.records.push_back(SftRecord::from_json(json::parse(line)));
    }
    fs::path manifest_path = path;
    manifest_path += ".manifest.json";
    std::ifstream manifest(manifest_path, std::ios::binary);
    if (!manifest)
        throw Error("import_sft: missing manifest '" + manifest_path.string() + "'");
    dataset.manifest = StageManifest::from_json(json::parse(manifest));
    return dataset;
}

StageRegistry StageRegistry::parse(const std::string& text) {
    StageRegistry reg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto tokens = tokenize(line);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        if (tokens[0] != "stage" || tokens.size() < 3)
            throw ConfigError("stage registry line " + std::to_string(line_no) +
                              ": expected 'stage <k> <spec> [label]'");
        int k = std::stoi(tokens[1]);
        std::string label = tokens.size() > 3 ? tokens[3] : "";
        if (!reg.entries_.emplace(k, StageRegistryEntry{tokens[2], label}).second)
            throw ConfigError("stage registry: duplicate stage " + tokens[1]);
    }
    // the chain must be contiguous from 0
    int expected = 0;
    for (const auto& [k, _] : reg.entries_) {
        if (k != expected++)
            throw ConfigError("stage registry: stages must be contiguous from 0");
    }
    return reg;
}

StageRegistry StageRegistry::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("stage registry: cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

GeneratorHandle StageRegistry::student_for_stage(int stage_index) const {
    auto it = entries_.find(stage_index);
    if (it == entries_.end())
        throw ConfigError("stage registry: no student registered for stage " +
                          std::to_string(stage_index));
    return GeneratorHandle::from_spec("student-stage" + std::to_string(stage_index),
                                      it->second.generator_spec);
}

}  // namespace covforge
