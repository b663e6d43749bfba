#include "covforge/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace covforge {

namespace fs = std::filesystem;

std::vector<RepositoryPtr> load_corpus(const fs::path& dir,
                                       std::vector<std::string>* warnings) {
    if (!fs::is_directory(dir))
        throw ConfigError("corpus: '" + dir.string() + "' is not a directory");
    std::vector<fs::path> repo_dirs;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_directory()) repo_dirs.push_back(entry.path());
    std::sort(repo_dirs.begin(), repo_dirs.end());

    std::vector<RepositoryPtr> corpus;
    for (const auto& repo_dir : repo_dirs) {
        std::map<std::string, std::string> files;
        double pass_threshold = kDefaultPassThreshold;
        bool have_meta = false;
        for (const auto& entry : fs::recursive_directory_iterator(repo_dir)) {
            if (!entry.is_regular_file()) continue;
            const std::string rel = fs::relative(entry.path(), repo_dir).generic_string();
            std::ifstream in(entry.path(), std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            if (rel == "repo.json") {
                json meta = json::parse(ss.str());
                pass_threshold = meta.value("pass_threshold", kDefaultPassThreshold);
                have_meta = true;
            } else {
                files[rel] = ss.str();
            }
        }
        const std::string id = repo_dir.filename().string();
        if (!have_meta && warnings)
            warnings->push_back("repo '" + id + "': no repo.json, default threshold " +
                                std::to_string(kDefaultPassThreshold) + " applied");
        corpus.push_back(
            std::make_shared<const Repository>(id, std::move(files), pass_threshold));
    }
    return corpus;
}

void write_corpus(const std::vector<RepositoryPtr>& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    for (const auto& repo : corpus) {
        fs::path repo_dir = dir / repo->id();
        fs::create_directories(repo_dir);
        for (const auto& [path, content] : repo->files()) {
            fs::path target = repo_dir / path;
            fs::create_directories(target.parent_path());
            std::ofstream(target, std::ios::binary) << content;
        }
        json meta{{"pass_threshold", repo->pass_threshold()}};
        std::ofstream(repo_dir / "repo.json", std::ios::binary) << meta.dump(2) << '\n';
    }
}

void FixtureConfig::validate() const {
    if (repo_count == 0) throw ConfigError("fixture: repo_count must be >= 1");
    if (bins_per_repo == 0) throw ConfigError("fixture: bins_per_repo must be >= 1");
    if (!(pass_threshold > 0.0 && pass_threshold <= 1.0))
        throw ConfigError("fixture: pass_threshold must be in (0,1]");
    if (long_context_fraction < 0.0 || long_context_fraction > 1.0)
        throw ConfigError("fixture: long_context_fraction must be in [0,1]");
}

std::vector<RepositoryPtr> make_fixture(const FixtureConfig& config) {
    config.validate();
    std::vector<RepositoryPtr> corpus;
    for (std::size_t r = 0; r < config.repo_count; ++r) {
        char id_buf[16];
        std::snprintf(id_buf, sizeof id_buf, "r%03zu", r);
        const std::string id = id_buf;

        std::ostringstream design;
        design << "# synthetic design " << id << "\n";
        for (std::size_t b = 0; b < config.bins_per_repo; ++b)
            design << "bin " << id << "_B" << b << "\n";
        for (std::size_t h = 0; h < config.hazards_per_repo; ++h)
            design << "hazard " << id << "_HAZ" << h << "\n";
        for (std::size_t t = 0; t < config.traps_per_repo; ++t)
            design << "trap " << id << "_TRAP" << t << "\n";

        std::ostringstream spec;
        spec << "Synthetic verification target " << id << " with "
             << config.bins_per_repo << " coverage bins. A testbench covers a bin "
             << "by mentioning its keyword; hazard keywords abort compilation and "
             << "trap keywords abort simulation.\n";

        std::map<std::string, std::string> files{{"design.txt", design.str()},
                                                 {"spec.md", spec.str()}};

        // seeded choice of long-context repos, padded past the 1k-token bar
        SplitMix64 rng(derive_seed(config.seed, "fixture:" + id));
        if (rng.unit() < config.long_context_fraction) {
            std::ostringstream pad;
            pad << "Auxiliary implementation notes for " << id << ".\n";
            for (std::size_t w = 0; w < 1200; ++w)
                pad << "note_" << id << "_" << w << (w % 12 == 11 ? "\n" : " ");
            files["notes.txt"] = pad.str();
        }
        corpus.push_back(std::make_shared<const Repository>(id, std::move(files),
                                                            config.pass_threshold));
    }
    return corpus;
}

json fixture_metadata(const FixtureConfig& config,
                      const std::vector<RepositoryPtr>& corpus) {
    json thresholds = json::object();
    for (const auto& repo : corpus) thresholds[repo->id()] = repo->pass_threshold();
    return json{{"repo_count", config.repo_count},
                {"bins_per_repo", config.bins_per_repo},
                {"hazards_per_repo", config.hazards_per_repo},
                {"traps_per_repo", config.traps_per_repo},
                {"long_context_fraction", config.long_context_fraction},
                {"seed", config.seed},
                {"pass_thresholds", std::move(thresholds)}};
}

}  // namespace covforge
