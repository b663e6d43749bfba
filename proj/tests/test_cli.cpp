#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "covforge/cli.hpp"
#include "covforge/config.hpp"
#include "covforge/corpus.hpp"
#include "covforge/synth.hpp"

using namespace covforge;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "covforge_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& content) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << content;
}

// relative path -> content, skipping the timing-bearing run manifest
std::map<std::string, std::string> tree_snapshot(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        std::string rel = fs::relative(entry.path(), dir).generic_string();
        if (rel == "run_manifest.json") continue;
        out[rel] = slurp(entry.path());
    }
    return out;
}

const std::string kSynthConfig =
    "[models]\n"
    "teacher = scripted:bin_greedy:min_new=3,max_new=5\n"
    "student = scripted:bin_greedy:min_new=1,max_new=1\n"
    "[trace]\n"
    "n = 2\n"
    "n_cand = 3\n"
    "n_trans = 3\n"
    "[budget]\n"
    "simulator_calls = 300\n"
    "[run]\n"
    "seed = 5\n"
    "workers = 2\n";

fs::path fixture_dir() {
    static fs::path dir = [] {
        fs::path d = scratch() / "fixture";
        REQUIRE(cli::run({"--seed", "7", "fixture", "--out", d.string(), "--repos", "6",
                          "--bins", "5"}) == cli::kExitOk);
        return d;
    }();
    return dir;
}

}  // namespace

TEST_CASE("ini parsing") {
    auto ini = parse_ini("# c\n[models]\nteacher = scripted:echo\n\n[run]\nseed = 3\n");
    CHECK(ini.at("models").at("teacher") == "scripted:echo");
    CHECK(ini.at("run").at("seed") == "3");
    CHECK_THROWS_AS(parse_ini("no equals sign\n"), ConfigError);
    CHECK_THROWS_AS(parse_ini("[unterminated\n"), ConfigError);

    auto job = SynthJobConfig::from_ini(parse_ini(kSynthConfig));
    CHECK(job.teacher.strategy == "bin_greedy");
    CHECK(job.budget_limit == 300);
    CHECK(job.seed == 5);
    auto spec = job.stage_spec(0);
    CHECK(spec.trace_type == TraceType::FullTeacher);
    CHECK(spec.specialist_prompt);
    auto trace = job.trace_config(spec);
    CHECK(trace.intermediate_model.id == "teacher");
    auto s1 = job.stage_spec(1);
    CHECK(job.trace_config(s1).intermediate_model.id == "student");
    CHECK(job.trace_config(s1).transition_model.id == "teacher");

    CHECK_THROWS_AS(SynthJobConfig::from_ini(parse_ini("[models]\nstudent = scripted:echo\n")),
                    ConfigError);
}

TEST_CASE("fixture subcommand is deterministic") {
    fs::path a = scratch() / "fx_a";
    fs::path b = scratch() / "fx_b";
    CHECK(cli::run({"--seed", "7", "fixture", "--out", a.string(), "--repos", "4"}) ==
          cli::kExitOk);
    CHECK(cli::run({"--seed", "7", "fixture", "--out", b.string(), "--repos", "4"}) ==
          cli::kExitOk);
    CHECK(tree_snapshot(a) == tree_snapshot(b));
    CHECK(fs::exists(a / "fixture.json"));
    CHECK(fs::exists(a / "run_manifest.json"));
    CHECK(slurp(a / "fixture.json").find("pass_thresholds") != std::string::npos);

    CHECK(cli::run({"fixture", "--out", (scratch() / "fx_bad").string(), "--repos",
                    "0"}) == cli::kExitUserError);
}

TEST_CASE("synth subcommand writes dataset, prompt log and manifests") {
    fs::path config = scratch() / "job.ini";
    spit(config, kSynthConfig);
    fs::path out = scratch() / "stage0";

    int rc = cli::run({"--config", config.string(), "synth", "--corpus",
                       fixture_dir().string(), "--stage", "0", "--out", out.string()});
    CHECK(rc == cli::kExitOk);
    CHECK(fs::exists(out / "dataset.jsonl"));
    CHECK(fs::exists(out / "dataset.jsonl.manifest.json"));
    CHECK(fs::exists(out / "run_manifest.json"));

    // specialist sentinel: in the generation-time log, never in the dataset
    CHECK(slurp(out / "prompts.log").find("Do not use based literals") !=
          std::string::npos);
    CHECK(slurp(out / "dataset.jsonl").find("Do not use based literals") ==
          std::string::npos);

    auto manifest = json::parse(slurp(out / "dataset.jsonl.manifest.json"));
    CHECK(manifest["stage_index"] == 0);
    CHECK(manifest["truncated"] == false);

    SUBCASE("re-runs and worker counts are byte-identical") {
        fs::path again = scratch() / "stage0_again";
        fs::path wide = scratch() / "stage0_wide";
        CHECK(cli::run({"--config", config.string(), "synth", "--corpus",
                        fixture_dir().string(), "--stage", "0", "--out",
                        again.string()}) == cli::kExitOk);
        CHECK(cli::run({"--config", config.string(), "--workers", "8", "synth",
                        "--corpus", fixture_dir().string(), "--stage", "0", "--out",
                        wide.string()}) == cli::kExitOk);
        CHECK(slurp(again / "dataset.jsonl") == slurp(out / "dataset.jsonl"));
        CHECK(slurp(wide / "dataset.jsonl") == slurp(out / "dataset.jsonl"));
    }
    SUBCASE("tiny budget truncates with exit 2") {
        fs::path cut = scratch() / "stage0_cut";
        CHECK(cli::run({"--config", config.string(), "--budget", "2", "synth",
                        "--corpus", fixture_dir().string(), "--stage", "0", "--out",
                        cut.string()}) == cli::kExitTruncated);
        auto m = json::parse(slurp(cut / "dataset.jsonl.manifest.json"));
        CHECK(m["truncated"] == true);
    }
    SUBCASE("malformed config is a user error") {
        fs::path bad = scratch() / "bad.ini";
        spit(bad, "not a config at all\n");
        CHECK(cli::run({"--config", bad.string(), "synth", "--corpus",
                        fixture_dir().string(), "--stage", "0", "--out",
                        (scratch() / "nowhere").string()}) == cli::kExitUserError);
    }
}

TEST_CASE("export converts transition records to the sft schema") {
    auto corpus = load_corpus(fixture_dir());
    TraceConfig trace;
    trace.intermediate_model =
        GeneratorHandle::from_spec("teacher", "scripted:bin_greedy:min_new=1,max_new=2");
    trace.transition_model = trace.intermediate_model;
    Simulator sim(SimulatorConfig{});
    Budget budget(100);
    auto result = synthesize_repo(corpus[0], trace, SelectionPolicy{}, RejectionPolicy{},
                                  sim, budget, 3);
    REQUIRE(!result.records.empty());

    fs::path records = scratch() / "records.jsonl";
    {
        std::ofstream out(records, std::ios::binary);
        for (const auto& rec : result.records) out << rec.to_json().dump() << '\n';
    }
    fs::path sft = scratch() / "exported.jsonl";
    CHECK(cli::run({"export", "--records", records.string(), "--out", sft.string()}) ==
          cli::kExitOk);
    std::string content = slurp(sft);
    CHECK(std::count(content.begin(), content.end(), '\n') ==
          static_cast<long>(result.records.size()));
    CHECK(content.find("\"assistant\"") != std::string::npos);
    CHECK(fs::exists(scratch() / "exported.jsonl.manifest.json"));
}

TEST_CASE("union subcommand merges stage datasets") {
    fs::path config = scratch() / "job.ini";
    spit(config, kSynthConfig);
    fs::path s0 = scratch() / "u_stage0";
    fs::path s1 = scratch() / "u_stage1";
    REQUIRE(cli::run({"--config", config.string(), "synth", "--corpus",
                      fixture_dir().string(), "--stage", "0", "--out", s0.string()}) ==
            cli::kExitOk);
    REQUIRE(cli::run({"--config", config.string(), "synth", "--corpus",
                      fixture_dir().string(), "--stage", "1", "--out", s1.string()}) ==
            cli::kExitOk);

    fs::path merged = scratch() / "union.jsonl";
    CHECK(cli::run({"union", "--inputs", (s0 / "dataset.jsonl").string(),
                    (s1 / "dataset.jsonl").string(), "--out", merged.string()}) ==
          cli::kExitOk);
    auto manifest = json::parse(slurp(scratch() / "union.jsonl.manifest.json"));
    CHECK(manifest["naive_augmentation"] == true);
    CHECK(manifest["constituent_stages"] == json::array({0, 1}));

    std::string lines_a = slurp(s0 / "dataset.jsonl");
    std::string lines_b = slurp(s1 / "dataset.jsonl");
    std::string lines_m = slurp(merged);
    CHECK(std::count(lines_m.begin(), lines_m.end(), '\n') ==
          std::count(lines_a.begin(), lines_a.end(), '\n') +
              std::count(lines_b.begin(), lines_b.end(), '\n'));
}

TEST_CASE("dedup subcommand filters and reports") {
    fs::path corpus_dir = scratch() / "dd_corpus";
    fs::path bench_dir = scratch() / "dd_bench";
    spit(corpus_dir / "victim" / "main.sv", "module top; assign x = 1; endmodule\n");
    spit(corpus_dir / "victim" / "repo.json", "{\"pass_threshold\": 0.5}\n");
    spit(corpus_dir / "clean" / "main.sv", "completely unrelated token stream here\n");
    spit(corpus_dir / "clean" / "repo.json", "{\"pass_threshold\": 0.5}\n");
    spit(bench_dir / "bench" / "dut.sv", "module top; assign x = 1; endmodule\n");
    spit(bench_dir / "bench" / "repo.json", "{\"pass_threshold\": 0.5}\n");

    fs::path report = scratch() / "dd_report.json";
    fs::path clean_out = scratch() / "dd_clean";
    CHECK(cli::run({"dedup", "--corpus", corpus_dir.string(), "--benchmark",
                    bench_dir.string(), "--threshold", "0.5", "--report",
                    report.string(), "--clean-out", clean_out.string()}) ==
          cli::kExitOk);
    auto rep = json::parse(slurp(report));
    CHECK(rep["removed_repo_ids"] == json::array({"victim"}));
    CHECK(fs::exists(clean_out / "clean" / "main.sv"));
    CHECK_FALSE(fs::exists(clean_out / "victim"));
}

TEST_CASE("eval and report subcommands") {
    fs::path agentic_out = scratch() / "eval_agentic";
    fs::path direct_out = scratch() / "eval_direct";
    CHECK(cli::run({"--seed", "3", "eval", "--corpus", fixture_dir().string(), "--mode",
                    "agentic", "--rounds", "3", "--samples", "2", "--generator",
                    "scripted:bin_greedy:min_new=1,max_new=2", "--out",
                    agentic_out.string()}) == cli::kExitOk);
    CHECK(cli::run({"--seed", "3", "eval", "--corpus", fixture_dir().string(), "--mode",
                    "direct", "--samples", "2", "--generator",
                    "scripted:bin_greedy:min_new=1,max_new=2", "--out",
                    direct_out.string()}) == cli::kExitOk);
    CHECK(fs::exists(agentic_out / "episodes.jsonl"));
    auto metrics = json::parse(slurp(agentic_out / "metrics.json"));
    CHECK(metrics["mode"] == "agentic");
    CHECK(metrics["metrics"].contains("cov_pass"));

    fs::path table = scratch() / "table.txt";
    CHECK(cli::run({"report", (agentic_out / "metrics.json").string(),
                    (direct_out / "metrics.json").string(), "--out", table.string()}) ==
          cli::kExitOk);
    std::string rendered = slurp(table);
    CHECK(rendered.find("[agentic]") != std::string::npos);
    CHECK(rendered.find("[direct]") != std::string::npos);
    CHECK(rendered.find("delta") != std::string::npos);

    // single file renders without delta columns
    fs::path solo = scratch() / "solo.txt";
    CHECK(cli::run({"report", (agentic_out / "metrics.json").string(), "--out",
                    solo.string()}) == cli::kExitOk);
    CHECK(slurp(solo).find("delta") == std::string::npos);

    // mismatched metric keys are rejected
    fs::path broken = scratch() / "broken_metrics.json";
    spit(broken, "{\"mode\":\"agentic\",\"metrics\":{\"cov_pass\":0.5}}\n");
    CHECK(cli::run({"report", (agentic_out / "metrics.json").string(),
                    broken.string()}) == cli::kExitUserError);
}
