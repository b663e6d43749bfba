#include "covforge/dedup.hpp"

#include <algorithm>

namespace covforge {

std::vector<std::string> similarity_tokens(const std::string& text) {
    return tokenize(lowercase(text));
}

double rouge_l(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0.0;
    // two-row LCS DP
    const std::vector<std::string>* rows = &a;
    const std::vector<std::string>* cols = &b;
    if (cols->size() < rows->size()) std::swap(rows, cols);  // narrow table
    std::vector<std::size_t> prev(rows->size() + 1, 0), curr(rows->size() + 1, 0);
    for (std::size_t j = 1; j <= cols->size(); ++j) {
        for (std::size_t i = 1; i <= rows->size(); ++i) {
            if ((*rows)[i - 1] == (*cols)[j - 1]) curr[i] = prev[i - 1] + 1;
            else curr[i] = std::max(prev[i], curr[i - 1]);
        }
        std::swap(prev, curr);
    }
    const double lcs = static_cast<double>(prev[rows->size()]);
    const double precision = lcs / static_cast<double>(a.size());
    const double recall = lcs / static_cast<double>(b.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

bool prefilter_skips(std::size_t len_a, std::size_t len_b, double threshold) {
    if (len_a == 0 || len_b == 0) return true;
    // F is maximized at LCS = min(len_a, len_b)
    const double lcs = static_cast<double>(std::min(len_a, len_b));
    const double f_max =
        2.0 * lcs / static_cast<double>(len_a + len_b);
    return f_max < threshold;
}

json SimilarPair::to_json() const {
    return json{{"corpus_repo_id", corpus_repo_id},
                {"corpus_path", corpus_path},
                {"benchmark_repo_id", benchmark_repo_id},
                {"benchmark_path", benchmark_path},
                {"rouge_l_f", rouge_l_f}};
}

json SimilarityReport::to_json() const {
    json pairs_json = json::array();
    for (const auto& p : pairs) pairs_json.push_back(p.to_json());
    return json{{"tokenization", tokenization},
                {"threshold", threshold},
                {"removed_repo_ids",
                 std::vector<std::string>(removed_repo_ids.begin(), removed_repo_ids.end())},
                {"pairs", std::move(pairs_json)}};
}

FilterResult filter_corpus(const std::vector<RepositoryPtr>& corpus,
                           const std::vector<RepositoryPtr>& benchmark,
                           double threshold, bool use_length_prefilter,
                           unsigned workers) {
    if (!(threshold > 0.0 && threshold <= 1.0))
        throw ConfigError("filter_corpus: threshold must be in (0,1]");

    struct BenchFile {
        const std::string* repo_id;
        const std::string* path;
        std::vector<std::string> tokens;
    };
    std::vector<BenchFile> bench_files;
    for (const auto& repo : benchmark)
        for (const auto& [path, content] : repo->files())
            bench_files.push_back({&repo->id(), &path, similarity_tokens(content)});

    // deterministic corpus order
    std::vector<RepositoryPtr> ordered = corpus;
    std::sort(ordered.begin(), ordered.end(),
              [](const RepositoryPtr& a, const RepositoryPtr& b) {
                  return a->id() < b->id();
              });

    std::vector<std::vector<SimilarPair>> per_repo(ordered.size());
    parallel_for(ordered.size(), workers, [&](std::size_t i) {
        const auto& repo = ordered[i];
        for (const auto& [path, content] : repo->files()) {
            auto tokens = similarity_tokens(content);
            for (const auto& bench : bench_files) {
                if (use_length_prefilter &&
                    prefilter_skips(tokens.size(), bench.tokens.size(), threshold))
                    continue;
                double score = rouge_l(tokens, bench.tokens);
                if (score >= threshold)
                    per_repo[i].push_back(
                        {repo->id(), path, *bench.repo_id, *bench.path, score});
            }
        }
    });

    FilterResult result;
    result.report.threshold = threshold;
    for (std::size_t i = 0; i < ordered.size(); ++i) {
        if (per_repo[i].empty()) {
            result.clean.push_back(ordered[i]);
        } else {
            result.report.removed_repo_ids.insert(ordered[i]->id());
            for (auto& p : per_repo[i]) result.report.pairs.push_back(std::move(p));
        }
    }
    return result;
}

}  // namespace covforge
