#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "control/agent_config.hpp"
#include "control/session.hpp"
#include "control/sse.hpp"
#include "executor/executor.hpp"

namespace bprun {

// The events produced by one post_message, in order. Closed once the
// session reaches awaiting_user, finished or failed.
class EventStream {
public:
    void push(SseEvent event);
    void close();

    // Blocks until an event is available or the stream is closed and
    // drained (std::nullopt). Also returns std::nullopt on timeout; check
    // finished() to tell the two apart.
    std::optional<SseEvent> next(std::chrono::milliseconds timeout = std::chrono::hours(24));
    bool finished() const;

    // Drains everything until close.
    std::vector<SseEvent> collect();

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<SseEvent> queue_;
    bool closed_ = false;
};

struct ControlOptions {
    std::filesystem::path data_dir;
    bool deterministic = false;
};

class ControlLayer {
public:
    ControlLayer(ControlOptions options, AgentRegistry& agents, Executor& executor, TelemetryLog* telemetry);
    ~ControlLayer();

    ControlLayer(const ControlLayer&) = delete;
    ControlLayer& operator=(const ControlLayer&) = delete;

    AuthVerdict validate_request(const std::string& user_id, const std::string& agent_id,
                                 const std::string& token) const;

    // Creates an idle session whose history opens with the agent's system
    // prompt. Throws ControlError.
    SessionState create_session(const std::string& user_id, const std::string& agent_id, const std::string& token);

    // [system, prior entries..., user:incoming]
    nlohmann::json assemble_context(const SessionState& session, const std::string& incoming) const;

    // Throws ControlError(conflict) while the session runs or after it ended.
    std::shared_ptr<EventStream> post_message(const std::string& session_id, const std::string& token,
                                              const std::string& content);

    std::vector<DialogueEntry> fetch_history(const std::string& session_id, const std::string& token,
                                             std::optional<int> up_to_turn) const;

    SessionState session(const std::string& session_id) const;  // copy
    std::vector<std::string> session_ids() const;

    // The stored telemetry line; the token must belong to the record's agent.
    std::string telemetry_line(const std::string& exec_id, const std::string& token) const;

    nlohmann::json status() const;

    // Cancels live executions and joins their threads. Sessions waiting for
    // the user stay awaiting_user on disk and resume with a fresh execution.
    void shutdown();

    const SessionStore& store() const { return store_; }

private:
    struct Session;
    class Host;

    std::shared_ptr<Session> find(const std::string& session_id) const;
    void check_token(const Session& s, const std::string& token) const;
    void run_execution(std::shared_ptr<Session> s, nlohmann::json snapshot);
    void emit(Session& s, SseEvent event);

    ControlOptions options_;
    AgentRegistry& agents_;
    Executor& executor_;
    TelemetryLog* telemetry_;
    SessionStore store_;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    bool shutting_down_ = false;
    std::uint64_t streams_opened_ = 0;
};

}  // namespace bprun
