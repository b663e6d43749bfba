#include "covforge/cli.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>

#include <CLI11.hpp>

#include "covforge/config.hpp"
#include "covforge/corpus.hpp"
#include "covforge/dedup.hpp"
#include "covforge/evalharness.hpp"
#include "covforge/stages.hpp"

namespace covforge::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kToolVersion = "covforge 0.1.0";

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a64(read_file(path))); }

// Written atomically (tmp + rename) at the end of every subcommand.
class RunManifestWriter {
public:
    RunManifestWriter(std::string command_line, fs::path out_dir)
        : command_line_(std::move(command_line)), out_dir_(std::move(out_dir)),
          start_(std::chrono::steady_clock::now()) {}

    void set_config_fingerprint(std::string fp) { config_fingerprint_ = std::move(fp); }
    void set_seed(std::uint64_t seed) { seed_ = seed; }
    void set_budget(std::uint64_t limit, std::uint64_t used) {
        budget_limit_ = limit;
        budget_used_ = used;
    }
    void add_output(const fs::path& path) { outputs_.push_back(path); }

    void write() const {
        json hashes = json::object();
        for (const auto& p : outputs_) hashes[p.filename().string()] = file_hash(p);
        const double wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
                .count();
        json manifest{{"command_line", command_line_},
                      {"config_fingerprint", config_fingerprint_},
                      {"seed", seed_},
                      {"budget_limit", budget_limit_},
                      {"budget_used", budget_used_},
                      {"wall_time_s", wall_s},
                      {"tool_version", kToolVersion},
                      {"output_hashes", std::move(hashes)}};
        fs::create_directories(out_dir_);
        fs::path tmp = out_dir_ / ".run_manifest.json.tmp";
        std::ofstream(tmp, std::ios::binary) << manifest.dump(2) << '\n';
        fs::rename(tmp, out_dir_ / "run_manifest.json");
    }

private:
    std::string command_line_;
    fs::path out_dir_;
    std::chrono::steady_clock::time_point start_;
    std::string config_fingerprint_;
    std::uint64_t seed_ = 0;
    std::uint64_t budget_limit_ = 0;
    std::uint64_t budget_used_ = 0;
    std::vector<fs::path> outputs_;
};

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> budget;
};

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

// ── synth ────────────────────────────────────────────────────

int cmd_synth(const std::string& command_line, const GlobalArgs& globals,
              const std::string& corpus_dir, int stage_index,
              const std::string& out_dir) {
    const std::string config_text = read_file(globals.config_path);
    SynthJobConfig job = SynthJobConfig::from_ini(parse_ini(config_text));
    if (globals.seed) job.seed = *globals.seed;
    if (globals.workers) job.workers = *globals.workers;
    if (globals.budget) job.budget_limit = *globals.budget;
    if (job.stage_index && *job.stage_index != stage_index)
        throw ConfigError("--stage disagrees with [stage] index in config");

    std::vector<std::string> warnings;
    auto corpus = load_corpus(corpus_dir, &warnings);
    print_warnings(warnings);

    StageSpec spec = job.stage_spec(stage_index);
    TraceConfig trace = job.trace_config(spec);
    Simulator simulator(job.simulator.to_config());
    Budget budget(job.budget_limit);

    fs::create_directories(out_dir);
    // buffered and sorted so the log bytes do not depend on worker scheduling
    std::vector<std::string> prompt_entries;
    std::mutex prompt_mutex;
    SynthObserver observer;
    observer.on_prompt = [&](const PromptBundle& bundle) {
        std::lock_guard<std::mutex> lock(prompt_mutex);
        prompt_entries.push_back(bundle.flatten());
    };

    StageBuildOptions options;
    options.seed = job.seed;
    options.workers = job.workers;
    options.config_fingerprint = hex64(fnv1a64(config_text));
    options.observer = &observer;

    StageDataset dataset =
        build_stage_dataset(corpus, spec, trace, simulator, budget, options);

    const fs::path prompts_path = fs::path(out_dir) / "prompts.log";
    {
        std::sort(prompt_entries.begin(), prompt_entries.end());
        std::ofstream prompt_log(prompts_path, std::ios::binary);
        for (const auto& entry : prompt_entries)
            prompt_log << "=== prompt ===\n" << entry << '\n';
    }

    const fs::path dataset_path = fs::path(out_dir) / "dataset.jsonl";
    export_sft(dataset, dataset_path);

    RunManifestWriter manifest(command_line, out_dir);
    manifest.set_config_fingerprint(options.config_fingerprint);
    manifest.set_seed(job.seed);
    manifest.set_budget(budget.limit(), budget.used());
    manifest.add_output(dataset_path);
    fs::path ds_manifest = dataset_path;
    ds_manifest += ".manifest.json";
    manifest.add_output(ds_manifest);
    manifest.write();

    std::cout << "stage " << stage_index << ": " << dataset.records.size()
              << " records, " << budget.used() << "/" << budget.limit()
              << " simulator calls" << (dataset.manifest.truncated ? " (truncated)" : "")
              << '\n';
    return dataset.manifest.truncated ? kExitTruncated : kExitOk;
}

// ── fixture ──────────────────────────────────────────────────

int cmd_fixture(const std::string& command_line, const FixtureConfig& config,
                const std::string& out_dir) {
    auto corpus = make_fixture(config);
    write_corpus(corpus, out_dir);
    const fs::path meta_path = fs::path(out_dir) / "fixture.json";
    std::ofstream(meta_path, std::ios::binary)
        << fixture_metadata(config, corpus).dump(2) << '\n';

    RunManifestWriter manifest(command_line, out_dir);
    manifest.set_seed(config.seed);
    manifest.add_output(meta_path);
    manifest.write();
    std::cout << "fixture: " << corpus.size() << " repos at " << out_dir << '\n';
    return kExitOk;
}

// ── export / union ───────────────────────────────────────────

int cmd_export(const std::string& command_line, const std::string& records_path,
               const std::string& out_path) {
    // converts a TransitionRecord JSONL stream into the SFT schema
    std::ifstream in(records_path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + records_path + "'");
    StageDataset dataset;
    std::vector<RepositoryPtr> repos;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        TransitionRecord rec = TransitionRecord::from_json(json::parse(line));
        if (dataset.records.empty())
            dataset.manifest.stage_index = rec.provenance().stage_index;
        repos.push_back(rec.source().repo());
        dataset.records.push_back(to_sft_record(rec));
    }
    dataset.manifest.counts = count_records(dataset.records);
    dataset.manifest.corpus_fingerprint = corpus_fingerprint(repos);
    export_sft(dataset, out_path);

    RunManifestWriter manifest(command_line, fs::path(out_path).parent_path());
    manifest.add_output(out_path);
    manifest.write();
    std::cout << "export: " << dataset.records.size() << " records\n";
    return kExitOk;
}

int cmd_union(const std::string& command_line,
              const std::vector<std::string>& inputs, const std::string& out_path) {
    std::vector<StageDataset> datasets;
    for (const auto& path : inputs) datasets.push_back(import_sft(path));
    StageDataset merged = union_datasets(datasets);
    export_sft(merged, out_path);

    RunManifestWriter manifest(command_line, fs::path(out_path).parent_path());
    manifest.add_output(out_path);
    manifest.write();
    std::cout << "union: " << merged.records.size() << " records from "
              << datasets.size() << " datasets\n";
    return kExitOk;
}

// ── dedup ────────────────────────────────────────────────────

int cmd_dedup(const std::string& command_line, const GlobalArgs& globals,
              const std::string& corpus_dir, const std::string& benchmark_dir,
              double threshold, const std::string& report_path,
              const std::string& clean_dir) {
    std::vector<std::string> warnings;
    auto corpus = load_corpus(corpus_dir, &warnings);
    auto benchmark = load_corpus(benchmark_dir, &warnings);
    const unsigned workers = globals.workers.value_or(1);
    FilterResult result = filter_corpus(corpus, benchmark, threshold, true, workers);

    std::ofstream(report_path, std::ios::binary)
        << result.report.to_json().dump(2) << '\n';
    if (!clean_dir.empty()) write_corpus(result.clean, clean_dir);

    RunManifestWriter manifest(command_line, fs::path(report_path).parent_path());
    manifest.add_output(report_path);
    manifest.write();
    std::cout << "dedup: removed " << result.report.removed_repo_ids.size() << " of "
              << corpus.size() << " repos\n";
    return kExitOk;
}

// ── eval ─────────────────────────────────────────────────────

int cmd_eval(const std::string& command_line, const GlobalArgs& globals,
             const std::string& corpus_dir, const std::string& mode,
             unsigned rounds, unsigned samples, unsigned k, const std::string& prompt,
             const std::string& generator_spec, const std::string& out_dir) {
    EvalConfig config;
    config.mode = eval_mode_from_string(mode);
    config.rounds = config.mode == EvalMode::Direct ? 1 : rounds;
    config.samples = samples;
    config.prompt_mode = prompt_mode_from_string(prompt);
    config.generator = GeneratorHandle::from_spec("eval-generator", generator_spec);

    std::vector<std::string> warnings;
    auto corpus = load_corpus(corpus_dir, &warnings);
    print_warnings(warnings);

    SimulatorSettings sim_settings;
    std::uint64_t budget_limit =
        globals.budget.value_or(corpus.size() * samples * config.rounds);
    std::uint64_t seed = globals.seed.value_or(0);
    unsigned workers = globals.workers.value_or(1);
    if (!globals.config_path.empty()) {
        SynthJobConfig job = SynthJobConfig::from_ini(load_ini(globals.config_path));
        sim_settings = job.simulator;
    }
    Simulator simulator(sim_settings.to_config());
    Budget budget(budget_limit);

    EvalRunResult run =
        run_evaluation(corpus, config, simulator, budget, seed, k, workers);

    fs::create_directories(out_dir);
    const fs::path episodes_path = fs::path(out_dir) / "episodes.jsonl";
    {
        std::ofstream out(episodes_path, std::ios::binary);
        for (const auto& ep : run.episodes) out << ep.to_json().dump() << '\n';
    }
    const fs::path metrics_path = fs::path(out_dir) / "metrics.json";
    json metrics = run.metrics.to_json();
    metrics["mode"] = to_string(config.mode);
    metrics["prompt_mode"] = to_string(config.prompt_mode);
    std::ofstream(metrics_path, std::ios::binary) << metrics.dump(2) << '\n';
    std::cout << run.metrics.render();

    RunManifestWriter manifest(command_line, out_dir);
    manifest.set_seed(seed);
    manifest.set_budget(budget.limit(), budget.used());
    manifest.add_output(episodes_path);
    manifest.add_output(metrics_path);
    manifest.write();
    return kExitOk;
}

// ── report ───────────────────────────────────────────────────

struct MetricsFile {
    std::string name;
    std::string mode;
    std::map<std::string, double> values;
};

MetricsFile load_metrics(const std::string& path) {
    json j = json::parse(read_file(path));
    MetricsFile mf;
    mf.name = fs::path(path).stem().string();
    mf.mode = j.value("mode", "unknown");
    for (const auto& [key, value] : j.at("metrics").items())
        mf.values[key] = value.get<double>();
    return mf;
}

int cmd_report(const std::string& command_line,
               const std::vector<std::string>& files, const std::string& out_path) {
    std::vector<MetricsFile> loaded;
    for (const auto& f : files) loaded.push_back(load_metrics(f));
    const MetricsFile& base = loaded.front();
    for (const auto& mf : loaded) {
        std::vector<std::string> missing;
        for (const auto& [key, _] : base.values)
            if (!mf.values.count(key)) missing.push_back(key);
        for (const auto& [key, _] : mf.values)
            if (!base.values.count(key)) missing.push_back(key);
        if (!missing.empty()) {
            std::string msg = "report: metric keys mismatch in '" + mf.name + "':";
            for (const auto& k : missing) msg += " " + k;
            throw ConfigError(msg);
        }
    }
    const bool with_delta = loaded.size() > 1;

    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%8.4f", v);
        return std::string(buf);
    };
    std::ostringstream table;
    // group rows into agentic / direct sections, matching the comparison
    // layout: Cov Pass, delta vs base, Avg Cov, delta
    for (const std::string section : {"agentic", "direct", "unknown"}) {
        bool any = false;
        for (const auto& mf : loaded) any |= mf.mode == section;
        if (!any) continue;
        table << "[" << section << "]\n";
        table << "model                 cov_pass";
        if (with_delta) table << "    delta";
        table << "     avg_cov";
        if (with_delta) table << "    delta";
        table << "    sim_pass\n";
        for (const auto& mf : loaded) {
            if (mf.mode != section) continue;
            char name_buf[32];
            std::snprintf(name_buf, sizeof name_buf, "%-20s", mf.name.c_str());
            table << name_buf << "  " << fmt(mf.values.at("cov_pass"));
            if (with_delta)
                table << " " << fmt(mf.values.at("cov_pass") - base.values.at("cov_pass"));
            table << "    " << fmt(mf.values.at("avg_cov"));
            if (with_delta)
                table << " " << fmt(mf.values.at("avg_cov") - base.values.at("avg_cov"));
            table << "    " << fmt(mf.values.at("sim_pass")) << '\n';
        }
        table << '\n';
    }

    std::cout << table.str();
    if (!out_path.empty()) {
        std::ofstream(out_path, std::ios::binary) << table.str();
        RunManifestWriter manifest(command_line, fs::path(out_path).parent_path());
        manifest.add_output(out_path);
        manifest.write();
    }
    return kExitOk;
}

}  // namespace

int run(std::vector<std::string> args) {
    std::string command_line = "covforge";
    for (const auto& a : args) command_line += " " + a;

    CLI::App app{"coverage-guided testbench data engine"};
    app.require_subcommand(1);

    GlobalArgs globals;
    app.add_option("--config", globals.config_path, "job config file (INI)");
    app.add_option("--seed", globals.seed, "global seed override");
    app.add_option("--workers", globals.workers, "worker pool size");
    app.add_option("--budget", globals.budget, "simulator call budget override");

    // synth
    auto* synth = app.add_subcommand("synth", "synthesize a stage dataset");
    std::string corpus_dir, out_dir;
    int stage_index = 0;
    synth->add_option("--corpus", corpus_dir, "corpus directory")->required();
    synth->add_option("--stage", stage_index, "stage index (k)")->required();
    synth->add_option("--out", out_dir, "output directory")->required();

    // fixture
    auto* fixture = app.add_subcommand("fixture", "emit a synthetic corpus");
    FixtureConfig fixture_config;
    std::string fixture_out;
    fixture->add_option("--out", fixture_out, "output directory")->required();
    fixture->add_option("--repos", fixture_config.repo_count, "repository count");
    fixture->add_option("--bins", fixture_config.bins_per_repo, "bins per repo");
    fixture->add_option("--hazards", fixture_config.hazards_per_repo, "hazards per repo");
    fixture->add_option("--traps", fixture_config.traps_per_repo, "traps per repo");
    fixture->add_option("--threshold", fixture_config.pass_threshold, "pass threshold");
    fixture->add_option("--long-fraction", fixture_config.long_context_fraction,
                        "fraction of long-context repos");

    // export
    auto* exp = app.add_subcommand("export", "convert transition records to SFT JSONL");
    std::string records_path, export_out;
    exp->add_option("--records", records_path, "TransitionRecord JSONL")->required();
    exp->add_option("--out", export_out, "output JSONL path")->required();

    // union
    auto* uni = app.add_subcommand("union", "naive-augmentation union of datasets");
    std::vector<std::string> union_inputs;
    std::string union_out;
    uni->add_option("--inputs", union_inputs, "input dataset JSONL files")->required();
    uni->add_option("--out", union_out, "output JSONL path")->required();

    // dedup
    auto* dedup = app.add_subcommand("dedup", "contamination filter via ROUGE-L");
    std::string dedup_corpus, dedup_benchmark, dedup_report, dedup_clean;
    double dedup_threshold = 0.5;
    dedup->add_option("--corpus", dedup_corpus, "training corpus dir")->required();
    dedup->add_option("--benchmark", dedup_benchmark, "benchmark corpus dir")->required();
    dedup->add_option("--threshold", dedup_threshold, "ROUGE-L threshold");
    dedup->add_option("--report", dedup_report, "similarity report path")->required();
    dedup->add_option("--clean-out", dedup_clean, "write retained corpus here");

    // eval
    auto* eval = app.add_subcommand("eval", "run the evaluation protocol");
    std::string eval_corpus, eval_mode = "agentic", eval_prompt = "memoryless";
    std::string eval_generator, eval_out;
    unsigned eval_rounds = 3, eval_samples = 5, eval_k = 1;
    eval->add_option("--corpus", eval_corpus, "benchmark corpus dir")->required();
    eval->add_option("--mode", eval_mode, "direct|agentic");
    eval->add_option("--rounds", eval_rounds, "refinement rounds (agentic)");
    eval->add_option("--samples", eval_samples, "samples per repo (n)");
    eval->add_option("--k", eval_k, "pass@k");
    eval->add_option("--prompt", eval_prompt, "memoryless|vanilla");
    eval->add_option("--generator", eval_generator, "generator spec")->required();
    eval->add_option("--out", eval_out, "output directory")->required();

    // report
    auto* report = app.add_subcommand("report", "render metrics comparison tables");
    std::vector<std::string> report_files;
    std::string report_out;
    report->add_option("files", report_files, "metrics JSON files (first = baseline)")
        ->required();
    report->add_option("--out", report_out, "write table here");

    try {
        std::vector<const char*> argv;
        argv.push_back("covforge");
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());

        if (*synth)
            return cmd_synth(command_line, globals, corpus_dir, stage_index, out_dir);
        if (*fixture) {
            if (globals.seed) fixture_config.seed = *globals.seed;
            return cmd_fixture(command_line, fixture_config, fixture_out);
        }
        if (*exp) return cmd_export(command_line, records_path, export_out);
        if (*uni) return cmd_union(command_line, union_inputs, union_out);
        if (*dedup)
            return cmd_dedup(command_line, globals, dedup_corpus, dedup_benchmark,
                             dedup_threshold, dedup_report, dedup_clean);
        if (*eval)
            return cmd_eval(command_line, globals, eval_corpus, eval_mode, eval_rounds,
                            eval_samples, eval_k, eval_prompt, eval_generator, eval_out);
        if (*report) return cmd_report(command_line, report_files, report_out);
        std::cerr << "no subcommand\n";
        return kExitUserError;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUserError;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUserError;
    }
}

int run(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(std::move(args));
}

}  // namespace covforge::cli
