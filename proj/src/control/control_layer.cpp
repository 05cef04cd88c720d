#include "control/control_layer.hpp"

#include <algorithm>

#include "providers/llm.hpp"

namespace bprun {

using nlohmann::json;

void EventStream::push(SseEvent event) {
    {
        std::lock_guard lock(mu_);
        if (closed_) return;
        queue_.push_back(std::move(event));
    }
    cv_.notify_all();
}

void EventStream::close() {
    {
        std::lock_guard lock(mu_);
        closed_ = true;
    }
    cv_.notify_all();
}

std::optional<SseEvent> EventStream::next(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    SseEvent e = std::move(queue_.front());
    queue_.pop_front();
    return e;
}

bool EventStream::finished() const {
    std::lock_guard lock(mu_);
    return closed_ && queue_.empty();
}

std::vector<SseEvent> EventStream::collect() {
    std::vector<SseEvent> out;
    while (auto e = next()) out.push_back(std::move(*e));
    return out;
}

struct ControlLayer::Session {
    std::mutex mu;
    std::condition_variable cv;
    SessionState state;
    std::shared_ptr<EventStream> stream;
    std::optional<std::string> reply;  // resolves a pending user.wait
    bool live = false;                 // an execution thread owns the session
    bool closing = false;
    std::thread runner;
    ExecutionHandle* handle = nullptr;
};

// Serves one execution on behalf of a session. Every history write happens
// before the matching stream event is pushed.
class ControlLayer::Host final : public ExecutionHost {
public:
    Host(ControlLayer& layer, Session& s) : layer_(layer), s_(s) {}

    std::string exec_id;
    std::optional<SseEvent> done;  // held back until the exit is known

    void on_user_send(const std::string&) override {}

    std::optional<std::string> on_user_wait() override {
        std::unique_lock lock(s_.mu);
        if (s_.closing) return std::nullopt;
        layer_.store_.set_status(s_.state, SessionStatus::awaiting_user);
        layer_.emit(s_, {"status", {{"session_id", s_.state.session_id}, {"status", "awaiting_user"}}});
        if (s_.stream) s_.stream->close();
        s_.stream.reset();
        s_.cv.wait(lock, [&] { return s_.reply.has_value() || s_.closing; });
        if (!s_.reply) return std::nullopt;
        auto reply = std::move(*s_.reply);
        s_.reply.reset();
        return reply;
    }

    void on_event(const TelemetryEvent& event, const json& request, const json& result) override {
        auto events = relay_event(exec_id, event, request, result);
        std::lock_guard lock(s_.mu);
        if (event.op == "user.send") {
            DialogueEntry e;
            e.role = "assistant";
            e.content = event.summary.value("content", "");
            e.token_count = token_estimate(e.content);
            layer_.store_.append_entry(s_.state, std::move(e));
        } else if (event.op == "tool.call") {
            DialogueEntry e;
            e.role = "tool";
            e.tool_name = event.summary.value("name", "");
            e.tool_args = event.summary.value("args", json::object());
            e.tool_result = result;
            e.content = result.dump();
            e.token_count = token_estimate(e.content);
            layer_.store_.append_entry(s_.state, std::move(e));
        }
        for (auto& ev : events) {
            if (ev.type == "done") done = std::move(ev);
            else layer_.emit(s_, std::move(ev));
        }
    }

private:
    ControlLayer& layer_;
    Session& s_;
};

ControlLayer::ControlLayer(ControlOptions options, AgentRegistry& agents, Executor& executor, TelemetryLog* telemetry)
    : options_(std::move(options)),
      agents_(agents),
      executor_(executor),
      telemetry_(telemetry),
      store_(options_.data_dir, options_.deterministic) {
    for (auto& st : store_.load_all()) {
        // A run in flight when the previous process died cannot be resumed.
        if (st.status == SessionStatus::running) store_.set_status(st, SessionStatus::failed);
        auto s = std::make_shared<Session>();
        s->state = std::move(st);
        sessions_[s->state.session_id] = s;
    }
}

ControlLayer::~ControlLayer() { shutdown(); }

void ControlLayer::emit(Session& s, SseEvent event) {
    if (s.stream) s.stream->push(std::move(event));
}

AuthVerdict ControlLayer::validate_request(const std::string& user_id, const std::string& agent_id,
                                           const std::string& token) const {
    return agents_.validate_request(user_id, agent_id, token);
}

namespace {

void throw_verdict(const AuthVerdict& v, const std::string& agent_id) {
    if (v.accepted) return;
    if (v.reason == "not_found") throw ControlError(ControlCode::not_found, "unknown agent '" + agent_id + "'");
    if (v.reason == "denied") throw ControlError(ControlCode::denied, "user may not use agent '" + agent_id + "'");
    throw ControlError(ControlCode::unauthorized, "bad token for agent '" + agent_id + "'");
}

}  // namespace

SessionState ControlLayer::create_session(const std::string& user_id, const std::string& agent_id,
                                          const std::string& token) {
    if (user_id.empty()) throw ControlError(ControlCode::invalid, "user_id is required");
    throw_verdict(validate_request(user_id, agent_id, token), agent_id);
    const auto agent = agents_.find(agent_id);

    auto s = std::make_shared<Session>();
    s->state.session_id = executor_.ids().next();
    s->state.user_id = user_id;
    s->state.agent_id = agent_id;
    {
        std::lock_guard lock(mu_);
        if (shutting_down_) throw ControlError(ControlCode::conflict, "shutting down");
        sessions_[s->state.session_id] = s;
    }
    std::lock_guard lock(s->mu);
    store_.create(s->state);
    DialogueEntry sys;
    sys.role = "system";
    sys.content = agent->config.system_prompt;
    sys.token_count = token_estimate(sys.content);
    store_.append_entry(s->state, std::move(sys));
    return s->state;
}

json ControlLayer::assemble_context(const SessionState& session, const std::string& incoming) const {
    json out = json::array();
    if (session.history.empty() || session.history.front().role != "system") {
        const auto agent = agents_.find(session.agent_id);
        out.push_back({{"role", "system"}, {"content", agent ? agent->config.system_prompt : std::string()}});
    }
    for (const auto& e : session.history) out.push_back(snapshot_entry(e));
    out.push_back({{"role", "user"}, {"content", incoming}});
    return out;
}

std::shared_ptr<ControlLayer::Session> ControlLayer::find(const std::string& session_id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw ControlError(ControlCode::not_found, "unknown session '" + session_id + "'");
    return it->second;
}

void ControlLayer::check_token(const Session& s, const std::string& token) const {
    throw_verdict(validate_request(s.state.user_id, s.state.agent_id, token), s.state.agent_id);
}

std::shared_ptr<EventStream> ControlLayer::post_message(const std::string& session_id, const std::string& token,
                                                        const std::string& content) {
    auto s = find(session_id);
    std::unique_lock lock(s->mu);
    check_token(*s, token);
    switch (s->state.status) {
        case SessionStatus::running:
            throw ControlError(ControlCode::conflict, "session " + session_id + " is running");
        case SessionStatus::finished:
        case SessionStatus::failed:
            throw ControlError(ControlCode::conflict,
                               "session " + session_id + " is " + std::string(to_string(s->state.status)));
        default: break;
    }
    {
        std::lock_guard g(mu_);
        if (shutting_down_) throw ControlError(ControlCode::conflict, "shutting down");
        ++streams_opened_;
    }

    const bool resume = s->state.status == SessionStatus::awaiting_user && s->live;
    json snapshot;
    if (!resume) snapshot = assemble_context(s->state, content);

    DialogueEntry e;
    e.role = "user";
    e.content = content;
    e.token_count = token_estimate(content);
    store_.append_entry(s->state, std::move(e));
    store_.set_status(s->state, SessionStatus::running);

    auto stream = std::make_shared<EventStream>();
    s->stream = stream;
    emit(*s, {"status", {{"session_id", session_id}, {"status", "running"}}});

    if (resume) {
        s->reply = content;
        s->cv.notify_all();
    } else {
        if (s->runner.joinable()) s->runner.join();  // previous execution already ended
        s->live = true;
        s->runner = std::thread(&ControlLayer::run_execution, this, s, std::move(snapshot));
    }
    return stream;
}

void ControlLayer::run_execution(std::shared_ptr<Session> s, json snapshot) {
    Host host(*this, *s);
    TelemetryRecord record;
    std::optional<ErrorInfo> launch_error;
    std::unique_ptr<ExecutionHandle> handle;
    std::unique_ptr<LlmProvider> llm;
    try {
        const auto agent = agents_.find(s->state.agent_id);
        if (!agent) throw ValidationError("agent '" + s->state.agent_id + "' is no longer registered");
        const auto& cfg = agent->config;
        LaunchRequest req;
        req.agent_id = cfg.agent_id;
        req.session_id = s->state.session_id;
        req.runtime = cfg.runtime;
        req.blueprint_dir = cfg.blueprint_dir;
        req.entry_file = cfg.entry_file;
        req.limits = cfg.limits;
        req.retry = cfg.retry;
        req.retry.zero_delay = options_.deterministic;
        req.network = cfg.network;
        req.snapshot = std::move(snapshot);
        req.toggles = toggles_with_defaults(cfg.toggles);
        req.extra = {{"model", cfg.model_tag()}, {"kbs", agent->kb_ids()}};
        llm = agent->make_provider();
        handle = executor_.launch(req, {llm.get(), agent->tools.get(), agent->kbs.get()});
        host.exec_id = handle->exec_id();
        {
            std::lock_guard lock(s->mu);
            store_.add_execution(s->state, host.exec_id);
            s->handle = handle.get();
            if (s->closing) handle->cancel();
        }
        record = executor_.serve(*handle, host);
    } catch (const EngineError& e) {
        launch_error = e.info();
    } catch (const std::exception& e) {
        launch_error = ErrorInfo{ErrorClass::fatal, e.what()};
    }

    std::lock_guard lock(s->mu);
    s->handle = nullptr;
    s->live = false;
    bool stopping;
    {
        std::lock_guard g(mu_);
        stopping = shutting_down_;
    }
    if (stopping && s->state.status == SessionStatus::awaiting_user) {
        // Left resumable on disk; nobody is listening.
        return;
    }

    json exit = launch_error ? json{{"status", "error"}, {"error", to_json(*launch_error)}} : to_json(record.exit);
    const bool ok = !launch_error && record.exit.status == ExitStatus::ok;
    if (s->state.status == SessionStatus::awaiting_user) store_.set_status(s->state, SessionStatus::running);
    store_.set_status(s->state, ok ? SessionStatus::finished : SessionStatus::failed);
    if (!ok) emit(*s, {"error", {{"exec_id", host.exec_id}, {"exit", exit}}});
    emit(*s, {"status", {{"session_id", s->state.session_id}, {"status", ok ? "finished" : "failed"}}});
    json done = host.done ? host.done->data : json{{"exec_id", host.exec_id}, {"op", "finish"}};
    done["exit"] = exit;
    emit(*s, {"done", done});
    if (s->stream) s->stream->close();
    s->stream.reset();
}

std::vector<DialogueEntry> ControlLayer::fetch_history(const std::string& session_id, const std::string& token,
                                                       std::optional<int> up_to_turn) const {
    auto s = find(session_id);
    std::lock_guard lock(s->mu);
    check_token(*s, token);
    std::vector<DialogueEntry> out;
    for (const auto& e : s->state.history) {
        if (up_to_turn && e.turn_index > *up_to_turn) break;
        out.push_back(e);
    }
    return out;
}

SessionState ControlLayer::session(const std::string& session_id) const {
    auto s = find(session_id);
    std::lock_guard lock(s->mu);
    return s->state;
}

std::vector<std::string> ControlLayer::session_ids() const {
    std::lock_guard lock(mu_);
    std::vector<std::string> out;
    for (const auto& [id, _] : sessions_) out.push_back(id);
    return out;
}

std::string ControlLayer::telemetry_line(const std::string& exec_id, const std::string& token) const {
    if (!telemetry_) throw ControlError(ControlCode::not_found, "telemetry is not recorded");
    auto line = telemetry_->find_line(exec_id);
    if (!line) throw ControlError(ControlCode::not_found, "unknown execution '" + exec_id + "'");
    const json doc = json::parse(*line, nullptr, false);
    const std::string agent_id = doc.is_object() ? doc.value("agent_id", "") : "";
    const auto agent = agents_.find(agent_id);
    if (!agent || !constant_time_equals(token, agent->config.agent_token)) {
        throw ControlError(ControlCode::unauthorized, "token does not match the execution's agent");
    }
    return *line;
}

json ControlLayer::status() const {
    json by_status = json::object();
    for (auto st : {SessionStatus::idle, SessionStatus::running, SessionStatus::awaiting_user, SessionStatus::finished,
                    SessionStatus::failed}) {
        by_status[std::string(to_string(st))] = 0;
    }
    std::vector<std::shared_ptr<Session>> all;
    std::uint64_t streams;
    {
        std::lock_guard lock(mu_);
        for (const auto& [_, s] : sessions_) all.push_back(s);
        streams = streams_opened_;
    }
    for (const auto& s : all) {
        std::lock_guard lock(s->mu);
        by_status[std::string(to_string(s->state.status))] = by_status[std::string(to_string(s->state.status))].get<int>() + 1;
    }
    const auto& c = executor_.counters();
    return {{"agents", agents_.ids()},
            {"sessions", by_status},
            {"streams_opened", streams},
            {"executions",
             {{"launched", c.launched.load()},
              {"ok", c.ok.load()},
              {"failed", c.failed.load()},
              {"quota_killed", c.quota_killed.load()},
              {"retries", c.retries.load()},
              {"active", c.active.load()}}}};
}

void ControlLayer::shutdown() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::lock_guard lock(mu_);
        if (shutting_down_ && sessions_.empty()) return;
        shutting_down_ = true;
        for (const auto& [_, s] : sessions_) all.push_back(s);
    }
    for (const auto& s : all) {
        std::lock_guard lock(s->mu);
        s->closing = true;
        if (s->handle) s->handle->cancel();
        s->cv.notify_all();
    }
    for (const auto& s : all) {
        if (s->runner.joinable()) s->runner.join();
    }
}

}  // namespace bprun
