#include "covforge/evalharness.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

namespace covforge {

std::string to_string(EvalMode m) {
    return m == EvalMode::Direct ? "direct" : "agentic";
}

EvalMode eval_mode_from_string(std::string_view s) {
    if (s == "direct") return EvalMode::Direct;
    if (s == "agentic") return EvalMode::Agentic;
    throw ConfigError("unknown eval mode: " + std::string(s));
}

void EvalConfig::validate() const {
    if (rounds == 0) throw ConfigError("EvalConfig: rounds must be >= 1");
    if (samples == 0) throw ConfigError("EvalConfig: samples must be >= 1");
    if (mode == EvalMode::Direct && rounds != 1)
        throw ConfigError("EvalConfig: direct mode requires rounds = 1");
    generator.validate();
}

json RoundResult::to_json() const {
    return json{{"testbench_hash", testbench_hash},
                {"observation", observation.to_json()},
                {"coverage", coverage}};
}

json EpisodeResult::to_json() const {
    json rounds_json = json::array();
    for (const auto& r : rounds) rounds_json.push_back(r.to_json());
    return json{{"repo_id", repo_id},
                {"sample_index", sample_index},
                {"rounds", std::move(rounds_json)},
                {"episode_cov", episode_cov},
                {"sim_pass", sim_pass},
                {"cov_pass", cov_pass}};
}

EpisodeResult run_episode(RepositoryPtr repo, const EvalConfig& config,
                          const Simulator& simulator, Budget& budget,
                          std::uint64_t seed, unsigned sample_index) {
    config.validate();
    EpisodeResult episode;
    episode.repo_id = repo->id();
    episode.sample_index = sample_index;

    State state = State::initial(repo);
    std::vector<std::pair<Testbench, FeedbackObservation>> history;
    for (unsigned round = 0; round < config.rounds; ++round) {
        PromptBundle bundle = config.prompt_mode == PromptMode::Memoryless
                                  ? render_memoryless(state)
                                  : render_vanilla(history, *repo);
        const std::uint64_t round_seed = derive_seed(seed, "round", round);
        std::string raw = generate(config.generator, bundle, round_seed);
        Testbench tb = extract_testbench(raw);
        FeedbackObservation obs;
        if (tb.empty()) {
            obs = FeedbackObservation(SimStatus::CompileError, {},
                                      "empty generation output");
        } else {
            try {
                obs = simulator.simulate(*repo, tb, budget);
            } catch (const BudgetExhausted&) {
                break;
            }
        }
        RoundResult rr;
        rr.testbench_hash = hex64(fnv1a64(tb.text));
        rr.coverage = coverage_score(obs);
        rr.observation = obs;
        episode.rounds.push_back(std::move(rr));
        history.emplace_back(tb, obs);
        if (!tb.empty()) state = State::make(repo, std::move(tb), std::move(obs));
    }

    episode.episode_cov = 0.0;
    for (const auto& r : episode.rounds) {
        episode.episode_cov = std::max(episode.episode_cov, r.coverage);
        if (r.observation.status() == SimStatus::Success) episode.sim_pass = true;
    }
    episode.cov_pass = episode.sim_pass && episode.episode_cov >= repo->pass_threshold();
    return episode;
}

double pass_at_k(unsigned n, unsigned c, unsigned k) {
    if (c > n) throw InvariantError("pass_at_k: c must be <= n");
    if (k < 1 || k > n) throw InvariantError("pass_at_k: k must be in [1, n]");
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;
    // 1 - prod_{i=0}^{k-1} (n-c-i)/(n-i), overflow-safe
    double prob_all_fail = 1.0;
    for (unsigned i = 0; i < k; ++i)
        prob_all_fail *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    return 1.0 - prob_all_fail;
}

json MetricsTable::to_json() const {
    return json{{"k", k},
                {"samples", samples},
                {"repo_count", repo_count},
                {"metrics",
                 {{"cov_pass", cov_pass}, {"avg_cov", avg_cov}, {"sim_pass", sim_pass}}}};
}

std::string MetricsTable::render() const {
    auto fmt = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.4f", v);
        return std::string(buf);
    };
    std::ostringstream out;
    out << "metric        value\n";
    out << "------------  ------\n";
    out << "cov_pass@" << k << "    " << fmt(cov_pass) << "\n";
    out << "avg_cov       " << fmt(avg_cov) << "\n";
    out << "sim_pass@" << k << "    " << fmt(sim_pass) << "\n";
    return out.str();
}

MetricsTable aggregate(const std::vector<EpisodeResult>& results, unsigned k) {
    struct RepoTally {
        unsigned n = 0;
        unsigned cov_passes = 0;
        unsigned sim_passes = 0;
        double cov_sum = 0.0;
    };
    std::map<std::string, RepoTally> tallies;
    for (const auto& ep : results) {
        auto& t = tallies[ep.repo_id];
        ++t.n;
        if (ep.cov_pass) ++t.cov_passes;
        if (ep.sim_pass) ++t.sim_passes;
        t.cov_sum += ep.episode_cov;
    }
    if (tallies.empty()) throw ConfigError("aggregate: no episode results");
    std::optional<unsigned> n;
    for (const auto& [repo, t] : tallies) {
        if (n && *n != t.n)
            throw ConfigError("aggregate: ragged sample counts across repos");
        n = t.n;
    }
    if (*n < k) throw ConfigError("aggregate: k exceeds sample count");

    MetricsTable table;
    table.k = k;
    table.samples = *n;
    table.repo_count = tallies.size();
    for (const auto& [repo, t] : tallies) {
        table.cov_pass += pass_at_k(t.n, t.cov_passes, k);
        table.sim_pass += pass_at_k(t.n, t.sim_passes, k);
        table.avg_cov += t.cov_sum / static_cast<double>(t.n);
    }
    const double repos = static_cast<double>(tallies.size());
    table.cov_pass /= repos;
    table.sim_pass /= repos;
    table.avg_cov /= repos;
    return table;
}

EvalRunResult run_evaluation(const std::vector<RepositoryPtr>& corpus,
                             const EvalConfig& config, const Simulator& simulator,
                             Budget& budget, std::uint64_t seed, unsigned k,
                             unsigned workers) {
    config.validate();
    std::vector<RepositoryPtr> repos = corpus;
    std::sort(repos.begin(), repos.end(),
              [](const RepositoryPtr& a, const RepositoryPtr& b) {
                  return a->id() < b->id();
              });

    const std::size_t total = repos.size() * config.samples;
    std::vector<EpisodeResult> episodes(total);
    parallel_for(total, workers, [&](std::size_t task) {
        const std::size_t repo_idx = task / config.samples;
        const unsigned sample = static_cast<unsigned>(task % config.samples);
        const std::uint64_t ep_seed =
            derive_seed(seed, "episode:" + repos[repo_idx]->id(), sample);
        episodes[task] =
            run_episode(repos[repo_idx], config, simulator, budget, ep_seed, sample);
    });

    EvalRunResult out;
    out.episodes = std::move(episodes);
    out.metrics = aggregate(out.episodes, k);
    return out;
}

}  // namespace covforge
