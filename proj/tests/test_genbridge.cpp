#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "covforge/genbridge.hpp"
#include "covforge/simbridge.hpp"

using namespace covforge;

namespace {

RepositoryPtr design_repo(const std::string& id = "g1") {
    return std::make_shared<const Repository>(
        id,
        std::map<std::string, std::string>{
            {"design.txt", "bin A\nbin B\nbin C\nbin D\nbin E\nhazard HAZ\ntrap TRAP\n"},
            {"spec.md", "five bins"}},
        0.5);
}

std::size_t count_occurrences(const std::string& text, const std::string& needle) {
    std::size_t n = 0, pos = 0;
    while ((pos = text.find(needle, pos)) != std::string::npos) {
        ++n;
        pos += needle.size();
    }
    return n;
}

}  // namespace

TEST_CASE("render_memoryless on the initial state shows only the repo") {
    auto repo = design_repo();
    auto bundle = render_memoryless(State::initial(repo));
    std::string flat = bundle.flatten();
    CHECK(flat.find("## Repository: g1") != std::string::npos);
    CHECK(flat.find("### File: design.txt") != std::string::npos);
    CHECK(flat.find("### File: spec.md") != std::string::npos);
    CHECK(flat.find("## Current testbench") == std::string::npos);
    CHECK(flat.find("## Feedback") == std::string::npos);

    CHECK(bundle == render_memoryless(State::initial(repo)));
}

TEST_CASE("render_memoryless shows exactly one feedback block after a failure") {
    auto repo = design_repo();
    State failed = State::make(
        repo, Testbench{"HAZ"},
        FeedbackObservation(SimStatus::CompileError, {}, "compile error near HAZ"));
    std::string flat = render_memoryless(failed).flatten();
    CHECK(count_occurrences(flat, "## Feedback") == 1);
    CHECK(count_occurrences(flat, "## Current testbench") == 1);
    CHECK(flat.find("status: compile_error") != std::string::npos);
}

TEST_CASE("memoryless rendering depends only on the state") {
    auto repo = design_repo();
    auto obs = FeedbackObservation(SimStatus::Success, {{"bins", {2, 5}}}, "hit: A B");
    // two distinct histories ending in the same state
    State via_failure = State::make(repo, Testbench{"A B"}, obs);
    State direct = State::make(repo, Testbench{"A B"}, obs);
    CHECK(render_memoryless(via_failure).flatten() == render_memoryless(direct).flatten());

    // vanilla histories of different shape render differently
    auto fail_obs = FeedbackObservation(SimStatus::CompileError, {}, "boom");
    auto v1 = render_vanilla({{Testbench{"HAZ"}, fail_obs}, {Testbench{"A B"}, obs}}, *repo);
    auto v2 = render_vanilla({{Testbench{"A B"}, obs}}, *repo);
    CHECK(v1.flatten() != v2.flatten());
}

TEST_CASE("render_vanilla lists every round in order") {
    auto repo = design_repo();
    auto obs1 = FeedbackObservation(SimStatus::Success, {{"bins", {1, 5}}}, "hit: A");
    auto obs2 = FeedbackObservation(SimStatus::Success, {{"bins", {2, 5}}}, "hit: A B");
    std::vector<std::pair<Testbench, FeedbackObservation>> history{
        {Testbench{"A"}, obs1}, {Testbench{"A B"}, obs2}};
    std::string flat = render_vanilla(history, *repo).flatten();
    CHECK(count_occurrences(flat, "## Current testbench") == 2);
    CHECK(count_occurrences(flat, "## Feedback") == 2);
    CHECK(count_occurrences(flat, "## Repository: g1") == 1);
    CHECK(flat == render_vanilla(history, *repo).flatten());

    // empty history degenerates to the memoryless initial rendering
    CHECK(render_vanilla({}, *repo).flatten().find("## Feedback") == std::string::npos);
}

TEST_CASE("specialist prompt is appended verbatim when requested") {
    auto repo = design_repo();
    State s0 = State::initial(repo);
    CHECK(render_memoryless(s0).flatten().find("Generation rules") == std::string::npos);
    std::string with = render_memoryless(s0, default_specialist_prompt()).flatten();
    CHECK(with.find("## Generation rules") != std::string::npos);
    CHECK(with.find("Do not use based literals") != std::string::npos);
}

TEST_CASE("extract_testbench takes the last complete fenced block") {
    CHECK(extract_testbench("Here: ```\nmodule tb; endmodule\n```").text ==
          "module tb; endmodule");
    CHECK(extract_testbench("module tb; endmodule").text == "module tb; endmodule");
    CHECK(extract_testbench("```\nfirst\n```\ntext\n```\nsecond\n```\n").text == "second");
    CHECK(extract_testbench("  \n\t ").text.empty());
    // odd trailing fence: the complete pair wins
    CHECK(extract_testbench("```\nbody\n```\nstray:\n```").text == "body");

    // wrap-in-fence identity for fence-free payloads
    std::string payload = "module x;\n  int y;\nendmodule";
    CHECK(extract_testbench("```\n" + payload + "\n```\n").text == payload);
}

TEST_CASE("generator handle specs parse with sampling defaults") {
    auto scripted = GeneratorHandle::from_spec("stub", "scripted:echo:text=hello");
    CHECK(scripted.backend == GenBackend::Scripted);
    CHECK(scripted.strategy == "echo");
    CHECK(scripted.params.at("text") == "hello");
    CHECK(scripted.sampling.temperature == doctest::Approx(0.7));
    CHECK(scripted.sampling.top_p == doctest::Approx(0.8));

    auto http = GeneratorHandle::from_spec(
        "remote", "http:http://localhost:9/v1/chat|teacher-model:temperature=0.2");
    CHECK(http.backend == GenBackend::HttpChat);
    CHECK(http.endpoint == "http://localhost:9/v1/chat");
    CHECK(http.model_name == "teacher-model");
    CHECK(http.sampling.temperature == doctest::Approx(0.2));

    CHECK_THROWS_AS(GeneratorHandle::from_spec("x", "carrier:pigeon"), ConfigError);
    CHECK_THROWS_AS(GeneratorHandle::from_spec("x", "http:no-model-separator"), ConfigError);
}

TEST_CASE("echo stub returns its canned testbench") {
    auto handle = GeneratorHandle::from_spec("stub", "scripted:echo:text=A B C");
    auto bundle = render_memoryless(State::initial(design_repo()));
    std::string out = generate(handle, bundle, 1);
    CHECK(out == generate(handle, bundle, 2));
    CHECK(extract_testbench(out).text == "A B C");
}

TEST_CASE("bin_greedy stub appends exactly one uncovered bin") {
    auto repo = design_repo();
    auto handle =
        GeneratorHandle::from_spec("g", "scripted:bin_greedy:min_new=1,max_new=1");
    SyntheticDesign design = SyntheticDesign::from_repo(*repo);

    State state = State::make(repo, Testbench{"A\nB\n"},
                              synthetic_rules(design, "A\nB\n"));
    std::string out = generate(handle, render_memoryless(state), 7);
    Testbench next = extract_testbench(out);
    auto before = synthetic_rules(design, state.testbench().text);
    auto after = synthetic_rules(design, next.text);
    CHECK(after.status() == SimStatus::Success);
    CHECK(after.metrics().at("bins").covered ==
          before.metrics().at("bins").covered + 1);

    // deterministic in (bundle, seed)
    CHECK(out == generate(handle, render_memoryless(state), 7));
    // hazard_prob=1 manufactures compile failures
    auto hazardous =
        GeneratorHandle::from_spec("h", "scripted:bin_greedy:hazard_prob=1.0");
    auto bad = extract_testbench(generate(hazardous, render_memoryless(state), 7));
    CHECK(synthetic_rules(design, bad.text).status() == SimStatus::CompileError);
}

TEST_CASE("http backend reports transport errors for unreachable endpoints") {
    GeneratorHandle handle;
    handle.id = "dead";
    handle.backend = GenBackend::HttpChat;
    handle.endpoint = "http://127.0.0.1:9/v1/chat/completions";
    handle.model_name = "m";
    handle.retry_count = 0;
    handle.retry_initial_backoff_s = 0.0;
    auto bundle = render_memoryless(State::initial(design_repo()));
    CHECK_THROWS_AS(generate(handle, bundle, 0), TransportError);
}

TEST_CASE("promptview helpers recover sections") {
    auto repo = design_repo();
    State s = State::make(repo, Testbench{"A C"},
                          synthetic_rules(SyntheticDesign::from_repo(*repo), "A C"));
    std::string flat = render_memoryless(s).flatten();
    auto design = promptview::repo_file(flat, "design.txt");
    REQUIRE(design.has_value());
    CHECK(design->find("bin A") != std::string::npos);
    auto tb = promptview::last_section(flat, "## Current testbench");
    REQUIRE(tb.has_value());
    CHECK(*tb == "A C");
    CHECK_FALSE(promptview::repo_file(flat, "missing.txt").has_value());
}
