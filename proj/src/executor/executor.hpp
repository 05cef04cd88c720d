#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "executor/ids.hpp"
#include "executor/retry.hpp"
#include "executor/telemetry.hpp"
#include "protocol/channel.hpp"
#include "providers/knowledge_base.hpp"
#include "providers/llm.hpp"
#include "providers/tool_registry.hpp"
#include "sandbox/sandbox.hpp"

namespace bprun {

enum class ExecState { launching, running, waiting_user, terminating, done };

std::string_view to_string(ExecState state);

// What the engine tells the outside world while serving one execution. The
// control layer implements it with sessions and SSE, the bench harness with
// the scripted user simulator.
class ExecutionHost {
public:
    virtual ~ExecutionHost() = default;

    virtual void on_user_send(const std::string& content) = 0;
    // Blocks until the user answers. std::nullopt ends the execution.
    virtual std::optional<std::string> on_user_wait() = 0;
    // Called once per dispatched op, after its telemetry event is appended.
    virtual void on_event(const TelemetryEvent& /*event*/, const nlohmann::json& /*request*/,
                          const nlohmann::json& /*result*/) {}
    virtual void on_state(ExecState /*state*/) {}
};

// Engine-side services one execution may call.
struct ExecutionServices {
    LlmProvider* llm = nullptr;
    const ToolRegistry* tools = nullptr;
    const KbStore* kbs = nullptr;
};

struct LaunchRequest {
    std::string agent_id;
    std::string session_id;
    std::string runtime;
    std::filesystem::path blueprint_dir;
    std::string entry_file;
    QuotaSpec limits;
    RetryPolicy retry;
    NetworkPolicy network = NetworkPolicy::engine_socket_only;
    nlohmann::json snapshot = nlohmann::json::array();  // ordered dialogue entries
    nlohmann::json toggles = nlohmann::json::object();
    nlohmann::json extra = nlohmann::json::object();    // merged into the init payload
};

class QuotaGuard;

// One live blueprint process and everything attached to it.
class ExecutionHandle {
public:
    ~ExecutionHandle();

    const std::string& exec_id() const { return record_.exec_id; }
    const std::string& session_id() const { return record_.session_id; }
    ExecState state() const { return state_.load(); }
    const TelemetryRecord& record() const { return record_; }
    SandboxProcess* sandbox() { return sandbox_.get(); }

    // Requests termination from another thread (e.g. session shutdown).
    void cancel();

private:
    friend class Executor;
    ExecutionHandle() = default;

    std::atomic<ExecState> state_{ExecState::launching};
    TelemetryRecord record_;
    LaunchRequest request_;
    ExecutionServices services_;
    std::unique_ptr<SandboxProcess> sandbox_;
    UniqueFd listener_;
    std::unique_ptr<FrameChannel> channel_;
    std::unique_ptr<QuotaGuard> guard_;
    std::thread stdout_reader_;
    std::thread stderr_reader_;
    std::mutex io_mu_;
    std::string stdout_buf_;
    std::string stderr_buf_;
    bool stdout_truncated_ = false;
    bool stderr_truncated_ = false;
    std::atomic<bool> cancelled_{false};
    std::chrono::steady_clock::time_point started_;
    std::uint64_t last_request_id_ = 0;
    std::uint64_t next_seq_ = 1;
};

struct ExecutorOptions {
    Sandbox* sandbox = nullptr;
    TelemetryLog* telemetry = nullptr;  // optional
    IdGenerator* ids = nullptr;
    std::chrono::milliseconds sample_interval{50};
    std::chrono::milliseconds finish_grace{2000};
};

struct ExecutorCounters {
    std::atomic<std::uint64_t> launched{0};
    std::atomic<std::uint64_t> ok{0};
    std::atomic<std::uint64_t> failed{0};
    std::atomic<std::uint64_t> quota_killed{0};
    std::atomic<std::uint64_t> retries{0};
    std::atomic<std::uint64_t> active{0};
};

class Executor {
public:
    explicit Executor(ExecutorOptions options);

    // Spawns the sandbox, accepts the protocol connection and sends `init`.
    // Throws ValidationError for unsupported runtimes (nothing is spawned).
    // Spawn failures return a handle already in state done whose record
    // carries exit=error(fatal) and has been written.
    std::unique_ptr<ExecutionHandle> launch(const LaunchRequest& request, ExecutionServices services);

    // Serves frames until finish, quota kill or fatal error, then reaps the
    // sandbox and writes the telemetry record.
    TelemetryRecord serve(ExecutionHandle& handle, ExecutionHost& host);

    TelemetryRecord run(const LaunchRequest& request, ExecutionServices services, ExecutionHost& host) {
        auto handle = launch(request, services);
        return serve(*handle, host);
    }

    const ExecutorCounters& counters() const { return counters_; }
    IdGenerator& ids() { return *options_.ids; }

private:
    nlohmann::json dispatch(ExecutionHandle& h, ExecutionHost& host, const Frame& frame, TelemetryEvent& event);
    void finalize(ExecutionHandle& h);
    bool connect(ExecutionHandle& h);

    ExecutorOptions options_;
    ExecutorCounters counters_;
};

}  // namespace bprun
