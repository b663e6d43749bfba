#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace covforge {

// Error taxonomy shared across modules. Everything user-visible derives from
// Error so the CLI can map failures onto exit codes in one place.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvariantError : public Error {
public:
    using Error::Error;
};

class BudgetExhausted : public Error {
public:
    BudgetExhausted() : Error("simulator call budget exhausted") {}
    explicit BudgetExhausted(const std::string& what) : Error(what) {}
};

class BackendUnavailable : public Error {
public:
    using Error::Error;
};

class MalformedReport : public Error {
public:
    using Error::Error;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class EmptyCompletion : public Error {
public:
    using Error::Error;
};

class CorpusMismatch : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

// Whitespace tokenization, the unit used for context lengths, ROUGE-L and
// the synthetic simulator alike.
std::vector<std::string> tokenize(std::string_view text);
std::size_t token_count(std::string_view text);

std::string lowercase(std::string_view text);

// FNV-1a, used for content fingerprints. Stable across platforms/runs.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

// splitmix64: cheap, well-mixed generator used to derive per-task seeds from
// (global seed, repo id, purpose, index) so results are independent of
// worker scheduling.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    std::uint64_t next();
    // uniform in [0, n)
    std::uint64_t below(std::uint64_t n);
    double unit();  // uniform in [0,1)

private:
    std::uint64_t state_;
};

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view scope,
                          std::uint64_t index = 0);

// Middle-elision truncation for simulator logs.
std::string truncate_middle(std::string_view text, std::size_t max_bytes,
                            std::string_view marker = "\n[... elided ...]\n");

// Runs fn(i) for i in [0, count) on `workers` threads. Tasks are claimed via
// an atomic counter; callers must write results into per-index slots so output
// is independent of scheduling.
void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace covforge
