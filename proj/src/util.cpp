#include "covforge/util.hpp"

#include <algorithm>
#include <cctype>
#include <mutex>
#include <thread>

namespace covforge {

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        while (i < n && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        std::size_t start = i;
        while (i < n && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i > start) out.emplace_back(text.substr(start, i - start));
    }
    return out;
}

std::size_t token_count(std::string_view text) {
    std::size_t count = 0;
    bool in_token = false;
    for (char c : text) {
        bool ws = std::isspace(static_cast<unsigned char>(c)) != 0;
        if (!ws && !in_token) ++count;
        in_token = !ws;
    }
    return count;
}

std::string lowercase(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return out;
}

std::uint64_t SplitMix64::next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
    if (n == 0) return 0;
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n);
    std::uint64_t v;
    do {
        v = next();
    } while (v >= limit);
    return v % n;
}

double SplitMix64::unit() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view scope,
                          std::uint64_t index) {
    std::uint64_t h = fnv1a64(scope);
    h ^= global_seed + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    h ^= index + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return SplitMix64(h).next();
}

std::string truncate_middle(std::string_view text, std::size_t max_bytes,
                            std::string_view marker) {
    if (text.size() <= max_bytes) return std::string(text);
    if (max_bytes <= marker.size()) return std::string(marker.substr(0, max_bytes));
    const std::size_t keep = max_bytes - marker.size();
    const std::size_t head = keep / 2;
    const std::size_t tail = keep - head;
    std::string out;
    out.reserve(max_bytes);
    out.append(text.substr(0, head));
    out.append(marker);
    out.append(text.substr(text.size() - tail));
    return out;
}

void parallel_for(std::size_t count, unsigned workers,
                  const std::function<void(std::size_t)>& fn) {
    if (count == 0) return;
    if (workers <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        }
    };
    std::vector<std::thread> threads;
    unsigned n = std::min<std::size_t>(workers, count);
    threads.reserve(n);
    for (unsigned t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace covforge
