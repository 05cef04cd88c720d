#include "executor/executor.hpp"

#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include "executor/quota_guard.hpp"

namespace bprun {

namespace {

using Clock = std::chrono::steady_clock;

constexpr auto kPollSlice = std::chrono::milliseconds(50);

// Internal signal: the user channel closed while the blueprint was waiting.
struct UserChannelClosed {};

double elapsed_ms(Clock::time_point since) {
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::string describe_wait_status(int status) {
    if (WIFEXITED(status)) return "exited with status " + std::to_string(WEXITSTATUS(status));
    if (WIFSIGNALED(status)) return std::string("killed by signal ") + ::strsignal(WTERMSIG(status));
    return "ended abnormally";
}

void capture(int fd, std::string& buf, bool& truncated, std::uint64_t cap, std::mutex& mu,
             const std::atomic<bool>& stop) {
    ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
    char chunk[8192];
    for (;;) {
        pollfd pfd{fd, POLLIN, 0};
        int rc = ::poll(&pfd, 1, 100);
        if (rc < 0 && errno != EINTR) return;
        if (rc > 0) {
            ssize_t n = ::read(fd, chunk, sizeof(chunk));
            if (n == 0) return;
            if (n > 0) {
                std::lock_guard lock(mu);
                const auto room = cap > buf.size() ? cap - buf.size() : 0;
                if (static_cast<std::uint64_t>(n) > room) truncated = true;
                buf.append(chunk, static_cast<std::size_t>(std::min<std::uint64_t>(room, static_cast<std::uint64_t>(n))));
                continue;
            }
            if (errno != EAGAIN && errno != EINTR) return;
        }
        if (stop.load() && rc == 0) return;
    }
}

std::string with_marker(std::string data, bool truncated, std::uint64_t cap) {
    if (truncated) data += "\n[truncated at " + std::to_string(cap) + " bytes]";
    return data;
}

}  // namespace

std::string_view to_string(ExecState state) {
    switch (state) {
        case ExecState::launching: return "launching";
        case ExecState::running: return "running";
        case ExecState::waiting_user: return "waiting_user";
        case ExecState::terminating: return "terminating";
        case ExecState::done: return "done";
    }
    return "done";
}

ExecutionHandle::~ExecutionHandle() {
    if (guard_) guard_->stop();
    if (sandbox_) sandbox_->reap();
    if (stdout_reader_.joinable()) stdout_reader_.join();
    if (stderr_reader_.joinable()) stderr_reader_.join();
}

void ExecutionHandle::cancel() {
    cancelled_ = true;
    if (sandbox_) sandbox_->kill_tree();
}

Executor::Executor(ExecutorOptions options) : options_(options) {
    if (options_.sandbox == nullptr || options_.ids == nullptr) {
        throw ValidationError("executor needs a sandbox and an id generator");
    }
    become_subreaper();
}

std::unique_ptr<ExecutionHandle> Executor::launch(const LaunchRequest& request, ExecutionServices services) {
    if (!options_.sandbox->supports(request.runtime)) {
        throw ValidationError("unsupported runtime '" + request.runtime + "'");
    }
    request.limits.validate();

    std::unique_ptr<ExecutionHandle> h(new ExecutionHandle());
    h->request_ = request;
    h->services_ = services;
    h->started_ = Clock::now();
    h->record_.exec_id = options_.ids->next();
    h->record_.agent_id = request.agent_id;
    h->record_.session_id = request.session_id;
    h->record_.started_at = utc_timestamp();
    ++counters_.launched;
    ++counters_.active;

    SandboxSpec spec;
    spec.runtime = request.runtime;
    spec.entry_file = request.entry_file;
    spec.blueprint_dir = request.blueprint_dir;
    spec.network = request.network;
    spec.limits = request.limits;

    try {
        h->sandbox_ = options_.sandbox->prepare(spec, h->record_.exec_id);
        h->listener_ = h->sandbox_->take_listener();
        std::map<std::string, std::string> env{
            {"AGENT_RPC_ADDR", h->sandbox_->socket_path()},
            {"AGENT_SESSION_ID", request.session_id},
            {"AGENT_EXEC_ID", h->record_.exec_id},
        };
        if (options_.ids->deterministic()) env["AGENT_DETERMINISTIC"] = "1";
        h->sandbox_->start(env);
    } catch (const ValidationError&) {
        --counters_.active;
        throw;
    } catch (const EngineError& e) {
        h->record_.exit = {ExitStatus::error, ErrorInfo{ErrorClass::fatal, e.what()}, std::nullopt};
        h->sandbox_.reset();
        finalize(*h);
        return h;
    }
    h->record_.network = h->sandbox_->network().to_json();

    const auto cap = request.limits.max_stdout_bytes;
    auto* raw = h.get();
    h->stdout_reader_ = std::thread([raw, cap, fd = h->sandbox_->take_stdout()]() mutable {
        capture(fd.get(), raw->stdout_buf_, raw->stdout_truncated_, cap, raw->io_mu_, raw->cancelled_);
    });
    h->stderr_reader_ = std::thread([raw, cap, fd = h->sandbox_->take_stderr()]() mutable {
        capture(fd.get(), raw->stderr_buf_, raw->stderr_truncated_, cap, raw->io_mu_, raw->cancelled_);
    });

    h->guard_ = std::make_unique<QuotaGuard>(*h->sandbox_, request.limits, options_.sample_interval);
    h->guard_->start();

    if (!connect(*h)) {
        finalize(*h);
        return h;
    }

    nlohmann::json init{
        {"exec_id", h->record_.exec_id},
        {"session_id", request.session_id},
        {"agent_id", request.agent_id},
        {"snapshot", request.snapshot},
        {"toggles", request.toggles},
        {"limits", to_json(request.limits)},
    };
    init["tools"] = nlohmann::json::array();
    if (services.tools) {
        for (const auto& t : services.tools->specs()) init["tools"].push_back(to_json(t));
    }
    for (const auto& [k, v] : request.extra.items()) init[k] = v;

    Frame frame;
    frame.kind = FrameKind::init;
    frame.payload = std::move(init);
    try {
        h->channel_->send(frame);
    } catch (const EngineError& e) {
        h->record_.exit = {ExitStatus::error, ErrorInfo{ErrorClass::fatal, std::string("init failed: ") + e.what()},
                           std::nullopt};
        finalize(*h);
        return h;
    }
    h->state_ = ExecState::running;
    return h;
}

bool Executor::connect(ExecutionHandle& h) {
    for (;;) {
        auto fd = accept_unix(h.listener_.get(), kPollSlice);
        if (fd) {
            h.channel_ = std::make_unique<FrameChannel>(std::move(fd));
            h.listener_.reset();
            return true;
        }
        if (h.guard_->breached() || h.cancelled_) {
            h.record_.exit.status = ExitStatus::error;
            h.record_.exit.error = ErrorInfo{ErrorClass::fatal, "cancelled before connecting"};
            return false;
        }
        if (auto status = h.sandbox_->poll_exit()) {
            h.record_.exit.status = ExitStatus::error;
            h.record_.exit.error =
                classify_error({FailureSource::blueprint, "exit_before_connect",
                                "blueprint " + describe_wait_status(*status) + " before connecting"});
            if (WIFSIGNALED(*status) && WTERMSIG(*status) == SIGXCPU) h.guard_->trip(QuotaDimension::cpu);
            return false;
        }
    }
}

TelemetryRecord Executor::serve(ExecutionHandle& h, ExecutionHost& host) {
    if (h.state_ == ExecState::done) return h.record_;
    host.on_state(ExecState::running);

    std::optional<ErrorInfo> failure;
    bool finished = false;
    std::string finish_status;

    auto fail = [&](ErrorInfo info) {
        if (!failure) failure = std::move(info);
    };

    while (!finished && !failure) {
        FrameChannel::Received got;
        try {
            got = h.channel_->receive(kPollSlice);
        } catch (const ProtocolError& e) {
            fail(classify_error({FailureSource::protocol, "malformed_frame", std::string("protocol violation: ") + e.what()}));
            break;
        } catch (const EngineError& e) {
            fail(classify_error({FailureSource::blueprint, "connection_lost", e.what()}));
            break;
        }

        if (got.status != FrameChannel::Status::frame) {
            if (h.cancelled_) {
                fail(ErrorInfo{ErrorClass::fatal, "execution cancelled"});
                break;
            }
            auto status = h.sandbox_->poll_exit();
            if (got.status == FrameChannel::Status::closed && !status) {
                status = h.sandbox_->wait_exit(options_.finish_grace);
            }
            if (status) {
                if (WIFSIGNALED(*status) && WTERMSIG(*status) == SIGXCPU) h.guard_->trip(QuotaDimension::cpu);
                fail(classify_error({FailureSource::blueprint, "exit_nonzero",
                                     "blueprint " + describe_wait_status(*status) + " mid-protocol"}));
                break;
            }
            if (got.status == FrameChannel::Status::closed) {
                fail(classify_error({FailureSource::blueprint, "closed", "blueprint closed the protocol connection"}));
                break;
            }
            continue;
        }

        Frame& frame = got.frame;
        ++h.record_.quota_usage.frames;
        if (h.record_.quota_usage.frames > h.request_.limits.max_protocol_frames) {
            h.guard_->trip(QuotaDimension::frames);
            break;
        }
        if (frame.kind != FrameKind::request && frame.kind != FrameKind::finish) {
            fail(classify_error({FailureSource::protocol, "unexpected_kind",
                                 "protocol violation: blueprint sent a " + std::string(to_string(frame.kind)) +
                                     " frame"}));
            break;
        }
        if (frame.id <= h.last_request_id_) {
            fail(classify_error({FailureSource::protocol, "id_order",
                                 "protocol violation: frame id " + std::to_string(frame.id) +
                                     " does not increase"}));
            break;
        }
        h.last_request_id_ = frame.id;

        TelemetryEvent event;
        event.frame_id = frame.id;
        const auto op_started = Clock::now();

        if (frame.kind == FrameKind::finish) {
            finish_status = frame.payload.is_object() ? frame.payload.value("status", "ok") : "ok";
            event.op = "finish";
            event.summary = {{"status", finish_status}};
            if (frame.payload.is_object() && frame.payload.contains("output")) {
                event.summary["output"] = frame.payload["output"];
            }
            event.seq = h.next_seq_++;
            h.record_.events.push_back(event);
            host.on_event(event, frame.payload, nlohmann::json::object());
            finished = true;
            break;
        }

        event.op = frame.op;
        nlohmann::json result_doc;
        Frame result;
        try {
            result_doc = dispatch(h, host, frame, event);
            result = Frame::success(frame.id, result_doc);
        } catch (const UserChannelClosed&) {
            fail(ErrorInfo{ErrorClass::fatal, "user channel closed while waiting"});
            break;
        } catch (const EngineError& e) {
            result = Frame::failure(frame.id, e.info());
            result_doc = to_json(e.info());
            event.summary["error"] = to_json(e.info());
        } catch (const std::exception& e) {
            ErrorInfo info{ErrorClass::fatal, std::string("engine error: ") + e.what()};
            result = Frame::failure(frame.id, info);
            result_doc = to_json(info);
            event.summary["error"] = to_json(info);
        }

        event.duration_ms = elapsed_ms(op_started);
        event.seq = h.next_seq_++;
        h.record_.events.push_back(event);
        host.on_event(event, frame.payload, result_doc);

        try {
            h.channel_->send(result);
        } catch (const EngineError& e) {
            fail(classify_error({FailureSource::blueprint, "connection_lost", e.what()}));
            break;
        }
    }

    if (finished) {
        h.state_ = ExecState::terminating;
        h.channel_->close();
        if (!h.sandbox_->wait_exit(options_.finish_grace)) h.sandbox_->kill_tree();
        if (finish_status != "ok") {
            fail(ErrorInfo{ErrorClass::fatal, "blueprint finished with status '" + finish_status + "'"});
        }
    } else {
        h.state_ = ExecState::terminating;
        h.sandbox_->kill_tree();
    }

    if (failure) {
        h.record_.exit.status = ExitStatus::error;
        h.record_.exit.error = failure;
    }
    finalize(h);
    host.on_state(ExecState::done);
    return h.record_;
}

nlohmann::json Executor::dispatch(ExecutionHandle& h, ExecutionHost& host, const Frame& frame, TelemetryEvent& event) {
    const auto& payload = frame.payload;
    int attempts = 0;
    auto on_failure = [&](int attempt, const ErrorInfo& info) {
        attempts = attempt;
        if (info.retryable()) {
            h.record_.retries.push_back({frame.id, attempt, info.cls});
            ++counters_.retries;
        }
    };
    const Sleeper sleeper = real_sleep;

    if (frame.op == ops::llm_invoke) {
        if (h.services_.llm == nullptr) throw EngineError(ErrorClass::fatal, "no model bound to this agent");
        const auto request = llm_request_from_json(payload);
        event.summary = {{"model", request.model}, {"messages", request.messages.size()}};
        LlmResponse response;
        try {
            response = with_retry(
                [&] {
                    ++attempts;
                    return h.services_.llm->invoke(request);
                },
                h.request_.retry, on_failure, sleeper);
        } catch (const EngineError&) {
            event.summary["attempts"] = attempts;
            throw;
        }
        event.summary["attempts"] = attempts;
        event.summary["usage"] = {{"prompt_tokens", response.usage.prompt_tokens},
                                  {"completion_tokens", response.usage.completion_tokens}};
        event.summary["finish_reason"] = to_string(response.finish_reason);
        return to_json(response);
    }

    if (frame.op == ops::tool_call) {
        if (!payload.is_object() || !payload.contains("name") || !payload["name"].is_string()) {
            throw ValidationError("tool.call needs a string 'name'");
        }
        const std::string name = payload["name"].get<std::string>();
        const nlohmann::json args = payload.value("args", nlohmann::json::object());
        event.summary = {{"name", name}, {"args", args}};
        if (h.services_.tools == nullptr) throw ValidationError("unknown_tool: " + name);
        nlohmann::json result;
        try {
            result = with_retry(
                [&] {
                    ++attempts;
                    return h.services_.tools->dispatch(name, args);
                },
                h.request_.retry, on_failure, sleeper);
        } catch (const EngineError&) {
            event.summary["attempts"] = attempts;
            throw;
        }
        event.summary["attempts"] = attempts;
        event.summary["ok"] = result.value("ok", false);
        return result;
    }

    if (frame.op == ops::kb_query) {
        if (!payload.is_object() || !payload.contains("kb_id") || !payload.contains("query")) {
            throw ValidationError("kb.query needs kb_id and query");
        }
        const std::string kb_id = payload["kb_id"].get<std::string>();
        const int top_k = payload.value("top_k", 3);
        event.summary = {{"kb_id", kb_id}, {"query", payload["query"]}, {"top_k", top_k}};
        if (h.services_.kbs == nullptr) throw EngineError(ErrorClass::validation, "not_found: knowledge base '" + kb_id + "'");
        auto hits = h.services_.kbs->get(kb_id).query(payload["query"].get<std::string>(), top_k);
        nlohmann::json out = nlohmann::json::array();
        nlohmann::json ids = nlohmann::json::array();
        for (const auto& hit : hits) {
            out.push_back(to_json(hit));
            ids.push_back(hit.doc_id);
        }
        event.summary["hits"] = ids;
        return {{"hits", out}};
    }

    if (frame.op == ops::user_send) {
        if (!payload.is_object() || !payload.contains("content") || !payload["content"].is_string()) {
            throw ValidationError("user.send needs a string 'content'");
        }
        const std::string content = payload["content"].get<std::string>();
        event.summary = {{"content", content}};
        host.on_user_send(content);
        return nlohmann::json::object();
    }

    if (frame.op == ops::user_wait) {
        h.state_ = ExecState::waiting_user;
        host.on_state(ExecState::waiting_user);
        h.guard_->pause_wall();
        auto content = host.on_user_wait();
        h.guard_->resume_wall();
        if (!content || h.cancelled_) throw UserChannelClosed{};
        h.state_ = ExecState::running;
        host.on_state(ExecState::running);
        event.summary = {{"content", *content}};
        return {{"content", *content}};
    }

    if (frame.op == ops::log) {
        event.summary = payload.is_object() ? payload : nlohmann::json{{"message", payload}};
        return nlohmann::json::object();
    }

    throw ValidationError("unknown op '" + frame.op + "'");
}

void Executor::finalize(ExecutionHandle& h) {
    if (h.guard_) {
        h.guard_->stop();
        const auto usage = h.guard_->usage();
        h.record_.quota_usage.cpu_seconds = usage.cpu_seconds;
        h.record_.quota_usage.memory_bytes = usage.memory_bytes;
        h.record_.quota_usage.wall_seconds = usage.wall_seconds;
        if (auto dim = h.guard_->breached()) {
            h.record_.exit.status = ExitStatus::quota_killed;
            h.record_.exit.limit = dim;
            h.record_.exit.error = ErrorInfo{ErrorClass::quota, "quota exceeded: " + std::string(to_string(*dim))};
        }
    }
    if (h.channel_) h.channel_->close();
    h.listener_.reset();
    if (h.sandbox_) h.sandbox_->reap();

    h.cancelled_ = true;  // lets the capture threads drain and exit
    if (h.stdout_reader_.joinable()) h.stdout_reader_.join();
    if (h.stderr_reader_.joinable()) h.stderr_reader_.join();
    {
        std::lock_guard lock(h.io_mu_);
        h.record_.stdout_data = with_marker(h.stdout_buf_, h.stdout_truncated_, h.request_.limits.max_stdout_bytes);
        h.record_.stderr_data = with_marker(h.stderr_buf_, h.stderr_truncated_, h.request_.limits.max_stdout_bytes);
    }

    h.record_.ended_at = utc_timestamp();
    h.record_.wall_ms = elapsed_ms(h.started_);

    switch (h.record_.exit.status) {
        case ExitStatus::ok: ++counters_.ok; break;
        case ExitStatus::error: ++counters_.failed; break;
        case ExitStatus::quota_killed: ++counters_.quota_killed; break;
    }
    --counters_.active;
    if (options_.telemetry) options_.telemetry->write(h.record_);
    h.state_ = ExecState::done;
}

}  // namespace bprun
