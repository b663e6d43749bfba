#include "covforge/simbridge.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

namespace covforge {

namespace fs = std::filesystem;

// ─── Budget ──────────────────────────────────────────────────

Budget::Budget(std::uint64_t limit) : limit_(limit) {
    if (limit == 0) throw InvariantError("Budget: limit must be positive");
}

std::uint64_t Budget::used() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return used_;
}

std::uint64_t Budget::remaining() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return limit_ - used_;
}

bool Budget::try_acquire(std::uint64_t n) {
    if (n == 0) throw InvariantError("Budget: acquisition count must be >= 1");
    std::lock_guard<std::mutex> lock(mutex_);
    if (used_ + n > limit_) return false;
    used_ += n;
    return true;
}

// ─── SyntheticDesign ─────────────────────────────────────────

void SyntheticDesign::validate() const {
    if (bins.empty()) throw InvariantError("SyntheticDesign: bins must be nonempty");
    std::set<std::string> seen(bins.begin(), bins.end());
    if (seen.size() != bins.size())
        throw InvariantError("SyntheticDesign: duplicate bin names");
    for (const auto& h : hazard_tokens)
        if (seen.count(h)) throw InvariantError("SyntheticDesign: hazard overlaps bins");
    for (const auto& t : runtime_trap_tokens) {
        if (seen.count(t)) throw InvariantError("SyntheticDesign: trap overlaps bins");
        if (hazard_tokens.count(t))
            throw InvariantError("SyntheticDesign: trap overlaps hazards");
    }
}

SyntheticDesign SyntheticDesign::parse(const std::string& text) {
    SyntheticDesign design;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto tokens = tokenize(line);
        if (tokens.empty() || tokens[0][0] == '#') continue;
        if (tokens.size() != 2)
            throw InvariantError("SyntheticDesign: bad directive line '" + line + "'");
        if (tokens[0] == "bin") design.bins.push_back(tokens[1]);
        else if (tokens[0] == "hazard") design.hazard_tokens.insert(tokens[1]);
        else if (tokens[0] == "trap") design.runtime_trap_tokens.insert(tokens[1]);
        else throw InvariantError("SyntheticDesign: unknown directive '" + tokens[0] + "'");
    }
    design.validate();
    return design;
}

std::string SyntheticDesign::render() const {
    std::ostringstream out;
    out << "# synthetic design\n";
    for (const auto& b : bins) out << "bin " << b << "\n";
    for (const auto& h : hazard_tokens) out << "hazard " << h << "\n";
    for (const auto& t : runtime_trap_tokens) out << "trap " << t << "\n";
    return out.str();
}

SyntheticDesign SyntheticDesign::from_repo(const Repository& repo) {
    auto it = repo.files().find("design.txt");
    if (it == repo.files().end())
        throw BackendUnavailable("synthetic backend: repo '" + repo.id() +
                                 "' has no design.txt");
    return parse(it->second);
}

FeedbackObservation synthetic_rules(const SyntheticDesign& design,
                                    const std::string& testbench_text) {
    auto tokens = tokenize(testbench_text);
    for (const auto& tok : tokens) {
        if (design.hazard_tokens.count(tok))
            return FeedbackObservation(SimStatus::CompileError, {},
                                       "compile error near token '" + tok + "'");
    }
    for (const auto& tok : tokens) {
        if (design.runtime_trap_tokens.count(tok))
            return FeedbackObservation(SimStatus::RuntimeError, {},
                                       "runtime trap hit at token '" + tok + "'");
    }
    if (tokens.empty())
        return FeedbackObservation(SimStatus::CompileError, {}, "empty testbench");

    std::set<std::string> distinct(tokens.begin(), tokens.end());
    std::uint64_t hit = 0;
    std::ostringstream log;
    log << "hit:";
    for (const auto& b : design.bins)
        if (distinct.count(b)) {
            ++hit;
            log << ' ' << b;
        }
    log << "\nmissed:";
    for (const auto& b : design.bins)
        if (!distinct.count(b)) log << ' ' << b;
    log << '\n';
    std::map<std::string, MetricCount> metrics{
        {"bins", MetricCount{hit, design.bins.size()}}};
    return FeedbackObservation(SimStatus::Success, std::move(metrics), log.str());
}

// ─── SimulatorConfig ─────────────────────────────────────────

void SimulatorConfig::validate() const {
    if (timeout_seconds <= 0.0)
        throw InvariantError("SimulatorConfig: timeout_seconds must be > 0");
    if (backend == SimBackend::Process) {
        if (command_template.find("{repo_dir}") == std::string::npos ||
            command_template.find("{testbench_path}") == std::string::npos)
            throw InvariantError(
                "SimulatorConfig: process command must use {repo_dir} and "
                "{testbench_path}");
    }
}

std::map<std::string, MetricCount> parse_coverage_report(
    const std::string& report_text, std::vector<std::string>* warnings) {
    json j = json::parse(report_text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("metrics") ||
        !j["metrics"].is_object())
        throw MalformedReport("coverage report is not a NormalizedJson object");
    std::map<std::string, MetricCount> metrics;
    for (const auto& [name, m] : j["metrics"].items()) {
        if (!m.is_object() || !m.contains("covered") || !m.contains("total"))
            throw MalformedReport("coverage metric '" + name + "' malformed");
        std::uint64_t covered = m.at("covered").get<std::uint64_t>();
        std::uint64_t total = m.at("total").get<std::uint64_t>();
        if (total == 0) throw MalformedReport("coverage metric '" + name + "' has zero total");
        if (covered > total) {
            if (warnings)
                warnings->push_back("metric '" + name + "': covered clamped to total");
            covered = total;
        }
        metrics[name] = MetricCount{covered, total};
    }
    return metrics;
}

// ─── Simulator ───────────────────────────────────────────────

Simulator::Simulator(SimulatorConfig config) : config_(std::move(config)) {
    config_.validate();
}

FeedbackObservation Simulator::simulate(const Repository& repo,
                                        const Testbench& testbench,
                                        Budget& budget) const {
    if (testbench.empty())
        throw InvariantError("simulate: testbench must be nonempty");
    if (!budget.try_acquire(1)) throw BudgetExhausted();
    invocations_.fetch_add(1);
    if (config_.backend == SimBackend::Synthetic)
        return synthetic_rules(SyntheticDesign::from_repo(repo), testbench.text);
    return run_process(repo, testbench);
}

namespace {

std::string substitute(std::string tpl, const std::string& key,
                       const std::string& value) {
    std::size_t pos;
    while ((pos = tpl.find(key)) != std::string::npos)
        tpl.replace(pos, key.size(), value);
    return tpl;
}

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    bool spawn_failed = false;
    std::string output;  // combined stdout+stderr
};

ProcessResult run_command(const std::string& command, double timeout_seconds) {
    ProcessResult result;
    int pipefd[2];
    if (pipe(pipefd) != 0) {
        result.spawn_failed = true;
        return result;
    }
    pid_t pid = fork();
    if (pid < 0) {
        close(pipefd[0]);
        close(pipefd[1]);
        result.spawn_failed = true;
        return result;
    }
    if (pid == 0) {
        // child: own process group so the whole tree can be killed on timeout
        setpgid(0, 0);
        close(pipefd[0]);
        dup2(pipefd[1], STDOUT_FILENO);
        dup2(pipefd[1], STDERR_FILENO);
        close(pipefd[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(pipefd[1]);
    fcntl(pipefd[0], F_SETFL, O_NONBLOCK);

    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_seconds);
    bool exited = false;
    int status = 0;
    char buf[4096];
    for (;;) {
        ssize_t n;
        while ((n = read(pipefd[0], buf, sizeof buf)) > 0)
            result.output.append(buf, static_cast<std::size_t>(n));
        pid_t r = waitpid(pid, &status, WNOHANG);
        if (r == pid) {
            exited = true;
            break;
        }
        if (std::chrono::steady_clock::now() >= deadline) {
            kill(-pid, SIGKILL);
            waitpid(pid, &status, 0);
            result.timed_out = true;
            break;
        }
        usleep(2000);
    }
    // drain remaining output
    ssize_t n;
    while ((n = read(pipefd[0], buf, sizeof buf)) > 0)
        result.output.append(buf, static_cast<std::size_t>(n));
    close(pipefd[0]);
    if (exited) {
        if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
        else result.exit_code = 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
        if (result.exit_code == 127) result.spawn_failed = true;
    }
    return result;
}

}  // namespace

FeedbackObservation Simulator::run_process(const Repository& repo,
                                           const Testbench& testbench) const {
    fs::path root = config_.work_root.empty() ? fs::temp_directory_path()
                                              : fs::path(config_.work_root);
    fs::create_directories(root);
    // unique per-call work directory
    static std::atomic<std::uint64_t> counter{0};
    fs::path work = root / ("covforge-sim-" + std::to_string(::getpid()) + "-" +
                            std::to_string(counter.fetch_add(1)));
    fs::path repo_dir = work / "repo";
    fs::create_directories(repo_dir);
    for (const auto& [path, content] : repo.files()) {
        fs::path target = repo_dir / path;
        fs::create_directories(target.parent_path());
        std::ofstream(target, std::ios::binary) << content;
    }
    fs::path tb_path = work / "testbench.sv";
    std::ofstream(tb_path, std::ios::binary) << testbench.text;

    std::string command = config_.command_template;
    command = substitute(command, "{repo_dir}", repo_dir.string());
    command = substitute(command, "{testbench_path}", tb_path.string());
    command = substitute(command, "{work_dir}", work.string());

    ProcessResult proc = run_command(command, config_.timeout_seconds);
    if (proc.spawn_failed) {
        fs::remove_all(work);
        throw BackendUnavailable("simulator command failed to spawn: " + command);
    }

    FeedbackObservation obs;
    if (proc.timed_out) {
        obs = FeedbackObservation(SimStatus::Timeout, {}, proc.output);
    } else if (proc.exit_code == 0) {
        std::string report_path =
            substitute(config_.coverage_report_path_template, "{work_dir}", work.string());
        report_path = substitute(report_path, "{repo_dir}", repo_dir.string());
        std::ifstream report(report_path, std::ios::binary);
        if (!report) {
            obs = FeedbackObservation(SimStatus::RuntimeError, {},
                                      proc.output + "\n[no coverage report at " +
                                          report_path + "]");
        } else {
            std::stringstream ss;
            ss << report.rdbuf();
            try {
                auto metrics = parse_coverage_report(ss.str());
                obs = FeedbackObservation(SimStatus::Success, std::move(metrics),
                                          proc.output);
            } catch (const MalformedReport&) {
                obs = FeedbackObservation(SimStatus::RuntimeError, {},
                                          proc.output + "\n[malformed report]\n" + ss.str());
            }
        }
    } else {
        bool compile_error = false;
        for (const auto& marker : config_.compile_error_markers)
            if (proc.output.find(marker) != std::string::npos) compile_error = true;
        obs = FeedbackObservation(
            compile_error ? SimStatus::CompileError : SimStatus::RuntimeError, {},
            proc.output);
    }
    fs::remove_all(work);
    return obs;
}

}  // namespace covforge
