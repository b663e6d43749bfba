#pragma once

#include <filesystem>
#include <vector>

#include "covforge/core.hpp"

namespace covforge {

// ─── On-disk corpus layout ───────────────────────────────────
// One subdirectory per repository; every regular file inside is repo
// content, except the optional `repo.json` metadata file
// ({"pass_threshold": <fraction>}). Missing metadata falls back to a global
// default threshold of 0.9 (with a warning pushed to *warnings).

constexpr double kDefaultPassThreshold = 0.9;

std::vector<RepositoryPtr> load_corpus(const std::filesystem::path& dir,
                                       std::vector<std::string>* warnings = nullptr);

void write_corpus(const std::vector<RepositoryPtr>& corpus,
                  const std::filesystem::path& dir);

// ─── Synthetic fixture ───────────────────────────────────────
// Deterministic desk-scale corpus for the synthetic simulator backend.

struct FixtureConfig {
    std::size_t repo_count = 10;
    std::size_t bins_per_repo = 5;
    std::size_t hazards_per_repo = 2;
    std::size_t traps_per_repo = 1;
    double long_context_fraction = 0.3;  // repos padded past 1k tokens
    double pass_threshold = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

std::vector<RepositoryPtr> make_fixture(const FixtureConfig& config);

// Fixture metadata (config echo + per-repo thresholds), written by the CLI
// alongside the corpus.
json fixture_metadata(const FixtureConfig& config,
                      const std::vector<RepositoryPtr>& corpus);

}  // namespace covforge
