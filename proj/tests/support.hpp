#pragma once
// Shared helpers for the test executables.

#include <signal.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "executor/executor.hpp"

#ifndef BPRUN_SOURCE_DIR
#error "BPRUN_SOURCE_DIR must be defined"
#endif
#ifndef BPRUN_BINARY_DIR
#error "BPRUN_BINARY_DIR must be defined"
#endif

namespace bprun::test {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path source_dir() { return BPRUN_SOURCE_DIR; }
inline fs::path binary_dir() { return BPRUN_BINARY_DIR; }
inline fs::path fixture_agent_dir(const std::string& mode) { return binary_dir() / "fixtures" / mode; }

inline std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("bprun-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// Sandbox + executor wired to a private telemetry log.
struct Engine {
    TempDir dir{"engine"};
    std::unique_ptr<Sandbox> sandbox;
    IdGenerator ids{true, 7};
    std::unique_ptr<TelemetryLog> log;
    std::unique_ptr<Executor> executor;

    explicit Engine(std::chrono::milliseconds sample = std::chrono::milliseconds(20)) {
        SandboxConfig sc;
        sc.root_dir = dir / "sandboxes";
        sc.runtimes = default_runtimes();
        sandbox = std::make_unique<Sandbox>(sc);
        log = std::make_unique<TelemetryLog>((dir / "telemetry.log").string());
        ExecutorOptions o;
        o.sandbox = sandbox.get();
        o.telemetry = log.get();
        o.ids = &ids;
        o.sample_interval = sample;
        executor = std::make_unique<Executor>(o);
    }
};

// Launch request for one of the compiled fixture agents.
inline LaunchRequest fixture_request(const std::string& mode, const std::string& user_text = "hello") {
    LaunchRequest r;
    r.agent_id = "fixture-" + mode;
    r.session_id = "S-test";
    r.runtime = "native";
    r.blueprint_dir = fixture_agent_dir(mode);
    r.entry_file = mode;
    r.limits.wall_clock_seconds = 20;
    r.retry.zero_delay = true;
    r.snapshot = json::array({json{{"role", "user"}, {"content", user_text}}});
    return r;
}

inline LaunchRequest python_request(const fs::path& dir, const std::string& entry) {
    LaunchRequest r;
    r.agent_id = "py-" + entry;
    r.session_id = "S-test";
    r.runtime = "python3";
    r.blueprint_dir = dir;
    r.entry_file = entry;
    r.retry.zero_delay = true;
    return r;
}

// Host that answers user.wait from a queue and records everything else.
class ScriptedHost : public ExecutionHost {
public:
    std::vector<std::string> sent;
    std::deque<std::string> replies;
    std::vector<TelemetryEvent> events;
    std::vector<std::pair<json, json>> io;
    std::atomic<int> waits{0};

    void on_user_send(const std::string& content) override {
        std::lock_guard lock(mu_);
        sent.push_back(content);
    }
    std::optional<std::string> on_user_wait() override {
        std::lock_guard lock(mu_);
        ++waits;
        if (replies.empty()) return std::nullopt;
        auto r = replies.front();
        replies.pop_front();
        return r;
    }
    void on_event(const TelemetryEvent& event, const json& request, const json& result) override {
        std::lock_guard lock(mu_);
        events.push_back(event);
        io.emplace_back(request, result);
    }

private:
    std::mutex mu_;
};

inline bool process_alive(pid_t pid) { return pid > 0 && ::kill(pid, 0) == 0; }

}  // namespace bprun::test
