#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include "covforge/simbridge.hpp"

using namespace covforge;
namespace fs = std::filesystem;

namespace {

RepositoryPtr synthetic_repo(const std::string& design_text,
                             const std::string& id = "syn") {
    return std::make_shared<const Repository>(
        id, std::map<std::string, std::string>{{"design.txt", design_text}}, 0.5);
}

}  // namespace

TEST_CASE("budget acquire is all or nothing") {
    Budget b(5);
    CHECK(b.try_acquire(3));
    CHECK(b.used() == 3);
    CHECK(b.try_acquire(2));
    CHECK(b.used() == 5);
    CHECK_FALSE(b.try_acquire(1));
    CHECK(b.used() == 5);

    Budget c(5);
    CHECK(c.try_acquire(4));
    CHECK_FALSE(c.try_acquire(2));
    CHECK(c.used() == 4);
}

TEST_CASE("budget under concurrent acquisition never exceeds limit") {
    Budget b(1000);
    std::atomic<std::uint64_t> granted{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 400; ++i)
                if (b.try_acquire(1)) ++granted;
        });
    }
    for (auto& t : threads) t.join();
    CHECK(b.used() == 1000);
    CHECK(granted.load() == 1000);
}

TEST_CASE("synthetic design parsing") {
    auto d = SyntheticDesign::parse("# comment\nbin A\nbin B\nhazard H\ntrap T\n");
    CHECK(d.bins == std::vector<std::string>{"A", "B"});
    CHECK(d.hazard_tokens == std::set<std::string>{"H"});
    CHECK(d.runtime_trap_tokens == std::set<std::string>{"T"});

    CHECK_THROWS_AS(SyntheticDesign::parse("hazard H\n"), InvariantError);  // no bins
    CHECK_THROWS_AS(SyntheticDesign::parse("bin A\nhazard A\n"), InvariantError);
    CHECK_THROWS_AS(SyntheticDesign::parse("bin A\ntrap A\n"), InvariantError);
}

TEST_CASE("synthetic rules cover the stated cases") {
    SyntheticDesign d;
    d.bins = {"A", "B", "C", "D", "E"};
    d.hazard_tokens = {"HAZ"};
    d.runtime_trap_tokens = {"TRAP"};

    auto obs = synthetic_rules(d, "A B C");
    CHECK(obs.status() == SimStatus::Success);
    CHECK(obs.metrics().at("bins") == MetricCount{3, 5});
    CHECK(coverage_score(obs) == doctest::Approx(0.6).epsilon(1e-12));

    CHECK(synthetic_rules(d, "").status() == SimStatus::CompileError);
    CHECK(synthetic_rules(d, "A HAZ").status() == SimStatus::CompileError);
    CHECK(synthetic_rules(d, "A TRAP").status() == SimStatus::RuntimeError);
    // hazard takes precedence over trap
    CHECK(synthetic_rules(d, "TRAP HAZ").status() == SimStatus::CompileError);

    SyntheticDesign one;
    one.bins = {"A"};
    auto rep = synthetic_rules(one, "A A A");
    CHECK(rep.metrics().at("bins") == MetricCount{1, 1});
}

TEST_CASE("synthetic rules are referentially transparent") {
    SyntheticDesign d;
    d.bins = {"x", "y", "z"};
    auto a = synthetic_rules(d, "x q z");
    auto b = synthetic_rules(d, "x q z");
    CHECK(a == b);
    CHECK(a.to_json().dump() == b.to_json().dump());
    // log mentions hits and misses in bin order
    CHECK(a.log().find("x") != std::string::npos);
    CHECK(a.log().find("y") != std::string::npos);
}

TEST_CASE("parse_coverage_report decodes the normalized contract") {
    auto m = parse_coverage_report(R"({"metrics":{"branch":{"covered":3,"total":4}}})");
    CHECK(m.at("branch") == MetricCount{3, 4});

    CHECK(parse_coverage_report(R"({"metrics":{}})").empty());
    CHECK_THROWS_AS(parse_coverage_report("not json"), MalformedReport);
    CHECK_THROWS_AS(parse_coverage_report(R"({"nope":1})"), MalformedReport);

    std::vector<std::string> warnings;
    auto clamped = parse_coverage_report(
        R"({"metrics":{"b":{"covered":9,"total":4}},"extra":true})", &warnings);
    CHECK(clamped.at("b") == MetricCount{4, 4});
    CHECK(warnings.size() == 1);
}

TEST_CASE("simulator synthetic backend consumes exactly one unit per call") {
    auto repo = synthetic_repo("bin A\nbin B\nhazard H\n");
    Simulator sim(SimulatorConfig{});
    Budget budget(2);

    auto obs = sim.simulate(*repo, Testbench{"A"}, budget);
    CHECK(obs.status() == SimStatus::Success);
    CHECK(obs.metrics().at("bins") == MetricCount{1, 2});
    CHECK(budget.used() == 1);

    auto fail = sim.simulate(*repo, Testbench{"H"}, budget);
    CHECK(fail.status() == SimStatus::CompileError);
    CHECK(budget.used() == 2);

    CHECK_THROWS_AS(sim.simulate(*repo, Testbench{"A"}, budget), BudgetExhausted);
    CHECK(budget.used() == 2);
    CHECK(sim.invocation_count() == 2);
}

TEST_CASE("simulator config validation") {
    SimulatorConfig bad;
    bad.backend = SimBackend::Process;
    bad.command_template = "run {repo_dir}";  // missing {testbench_path}
    CHECK_THROWS_AS(bad.validate(), InvariantError);
    bad.command_template = "";
    CHECK_THROWS_AS(bad.validate(), InvariantError);

    SimulatorConfig neg;
    neg.timeout_seconds = 0.0;
    CHECK_THROWS_AS(neg.validate(), InvariantError);
}

TEST_CASE("process backend maps exits and reports onto statuses") {
    auto repo = std::make_shared<const Repository>(
        "p", std::map<std::string, std::string>{{"design.txt", "payload"}}, 0.5);

    auto run = [&](const std::string& command) {
        SimulatorConfig cfg;
        cfg.backend = SimBackend::Process;
        // ':' swallows the placeholder args required by config validation
        cfg.command_template = ": {repo_dir} {testbench_path}; " + command;
        cfg.timeout_seconds = 5.0;
        cfg.coverage_report_path_template = "{work_dir}/cov.json";
        Simulator sim(cfg);
        Budget budget(1);
        return sim.simulate(*repo, Testbench{"tb body"}, budget);
    };

    SUBCASE("success with report") {
        auto obs = run(
            R"(printf '{"metrics":{"line":{"covered":1,"total":2}}}' > {work_dir}/cov.json)");
        CHECK(obs.status() == SimStatus::Success);
        CHECK(obs.metrics().at("line") == MetricCount{1, 2});
    }
    SUBCASE("exit 0 without report is a runtime error") {
        CHECK(run("true").status() == SimStatus::RuntimeError);
    }
    SUBCASE("compile marker in output") {
        auto obs = run("echo '*E, syntax error'; exit 3");
        CHECK(obs.status() == SimStatus::CompileError);
        CHECK(obs.log().find("*E,") != std::string::npos);
    }
    SUBCASE("plain nonzero exit is a runtime error") {
        CHECK(run("exit 7").status() == SimStatus::RuntimeError);
    }
    SUBCASE("repo files and testbench are materialized") {
        auto obs = run(
            "cat {repo_dir}/design.txt {testbench_path}; "
            R"(printf '{"metrics":{"l":{"covered":1,"total":1}}}' > {work_dir}/cov.json)");
        CHECK(obs.status() == SimStatus::Success);
        CHECK(obs.log().find("payload") != std::string::npos);
        CHECK(obs.log().find("tb body") != std::string::npos);
    }
    SUBCASE("malformed report is a runtime error with the raw text logged") {
        auto obs = run("printf 'garbage' > {work_dir}/cov.json");
        CHECK(obs.status() == SimStatus::RuntimeError);
        CHECK(obs.log().find("garbage") != std::string::npos);
    }
}

TEST_CASE("process backend timeout") {
    auto repo = synthetic_repo("bin A\n", "slow");
    SimulatorConfig cfg;
    cfg.backend = SimBackend::Process;
    cfg.command_template = ": {repo_dir} {testbench_path}; sleep 30";
    cfg.timeout_seconds = 0.2;
    Simulator sim(cfg);
    Budget budget(1);
    auto obs = sim.simulate(*repo, Testbench{"x"}, budget);
    CHECK(obs.status() == SimStatus::Timeout);
    CHECK(budget.used() == 1);
}

TEST_CASE("process backend cleans up its work directory") {
    fs::path root = fs::temp_directory_path() / "covforge_wd_test";
    fs::remove_all(root);
    fs::create_directories(root);

    auto repo = synthetic_repo("bin A\n", "wd");
    SimulatorConfig cfg;
    cfg.backend = SimBackend::Process;
    cfg.command_template =
        R"(: {repo_dir} {testbench_path}; printf '{"metrics":{}}' > {work_dir}/cov.json)";
    cfg.coverage_report_path_template = "{work_dir}/cov.json";
    cfg.work_root = root.string();
    Simulator sim(cfg);
    Budget budget(1);
    sim.simulate(*repo, Testbench{"x"}, budget);
    CHECK(fs::is_empty(root));
    fs::remove_all(root);
}
