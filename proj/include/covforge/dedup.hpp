#pragma once

#include <set>
#include <string>
#include <vector>

#include "covforge/core.hpp"

namespace covforge {

// ─── ROUGE-L contamination filtering ─────────────────────────

// ROUGE-L F1 over two token sequences. LCS computed with a two-row DP so
// 10^4-token HDL files stay cheap.
double rouge_l(const std::vector<std::string>& a, const std::vector<std::string>& b);

// Tokenization used for similarity scoring: lowercase, whitespace split.
std::vector<std::string> similarity_tokens(const std::string& text);

// Sound skip test: the best reachable F1 for the two lengths is below the
// threshold, so the pair cannot match.
bool prefilter_skips(std::size_t len_a, std::size_t len_b, double threshold);

struct SimilarPair {
    std::string corpus_repo_id;
    std::string corpus_path;
    std::string benchmark_repo_id;
    std::string benchmark_path;
    double rouge_l_f = 0.0;

    json to_json() const;
};

struct SimilarityReport {
    std::vector<SimilarPair> pairs;
    std::set<std::string> removed_repo_ids;
    double threshold = 0.5;
    std::string tokenization = "lowercase_whitespace";

    json to_json() const;
};

struct FilterResult {
    std::vector<RepositoryPtr> clean;
    SimilarityReport report;
};

// Removes every corpus repo with at least one file scoring >= threshold
// against any benchmark file. The length prefilter can be disabled for
// soundness fuzzing.
FilterResult filter_corpus(const std::vector<RepositoryPtr>& corpus,
                           const std::vector<RepositoryPtr>& benchmark,
                           double threshold, bool use_length_prefilter = true,
                           unsigned workers = 1);

}  // namespace covforge
