#include "control/session.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <fstream>

#include "executor/ids.hpp"
#include "protocol/error.hpp"

namespace bprun {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(ControlCode code) {
    switch (code) {
        case ControlCode::not_found: return "not_found";
        case ControlCode::unauthorized: return "unauthorized";
        case ControlCode::denied: return "denied";
        case ControlCode::conflict: return "conflict";
        case ControlCode::invalid: return "invalid";
    }
    return "invalid";
}

std::string_view to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::idle: return "idle";
        case SessionStatus::running: return "running";
        case SessionStatus::awaiting_user: return "awaiting_user";
        case SessionStatus::finished: return "finished";
        case SessionStatus::failed: return "failed";
    }
    return "idle";
}

SessionStatus session_status_from_string(std::string_view name) {
    for (auto s : {SessionStatus::idle, SessionStatus::running, SessionStatus::awaiting_user, SessionStatus::finished,
                   SessionStatus::failed}) {
        if (to_string(s) == name) return s;
    }
    throw ControlError(ControlCode::invalid, "unknown session status '" + std::string(name) + "'");
}

bool transition_allowed(SessionStatus from, SessionStatus to) {
    using S = SessionStatus;
    switch (from) {
        case S::idle: return to == S::running;
        case S::running: return to == S::awaiting_user || to == S::finished || to == S::failed;
        case S::awaiting_user: return to == S::running;
        case S::finished:
        case S::failed: return false;
    }
    return false;
}

json to_json(const DialogueEntry& e) {
    json doc{{"turn_index", e.turn_index}, {"role", e.role}, {"content", e.content}, {"token_count", e.token_count}};
    if (e.tool_name) doc["tool_name"] = *e.tool_name;
    if (!e.tool_args.is_null()) doc["tool_args"] = e.tool_args;
    if (!e.tool_result.is_null()) doc["tool_result"] = e.tool_result;
    return doc;
}

DialogueEntry dialogue_entry_from_json(const json& doc) {
    DialogueEntry e;
    e.turn_index = doc.at("turn_index").get<int>();
    e.role = doc.at("role").get<std::string>();
    e.content = doc.value("content", std::string());
    e.token_count = doc.value("token_count", std::uint64_t{0});
    if (doc.contains("tool_name")) e.tool_name = doc["tool_name"].get<std::string>();
    if (doc.contains("tool_args")) e.tool_args = doc["tool_args"];
    if (doc.contains("tool_result")) e.tool_result = doc["tool_result"];
    return e;
}

json snapshot_entry(const DialogueEntry& e) {
    json doc{{"role", e.role}, {"content", e.content}};
    if (e.tool_name) doc["name"] = *e.tool_name;
    if (!e.tool_args.is_null()) doc["args"] = e.tool_args;
    if (!e.tool_result.is_null()) doc["result"] = e.tool_result;
    return doc;
}

json summary_json(const SessionState& s) {
    return {{"session_id", s.session_id}, {"user_id", s.user_id},        {"agent_id", s.agent_id},
            {"status", to_string(s.status)}, {"turns", s.history.size()}, {"exec_ids", s.exec_ids},
            {"created_at", s.created_at},  {"updated_at", s.updated_at}};
}

SessionStore::SessionStore(fs::path data_dir, bool fixed_clock)
    : dir_(std::move(data_dir) / "sessions"), fixed_clock_(fixed_clock) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw EngineError(ErrorClass::fatal, "cannot create " + dir_.string() + ": " + ec.message());
}

std::string SessionStore::now() const { return fixed_clock_ ? "1970-01-01T00:00:00.000Z" : utc_timestamp(); }

fs::path SessionStore::path_of(const std::string& session_id) const { return dir_ / (session_id + ".jsonl"); }

void SessionStore::append_line(const std::string& session_id, const json& doc) {
    // One write(2) per line with O_APPEND: a crash leaves at most one torn
    // tail line, which replay skips. fsync keeps "flushed before the SSE
    // event" true across power loss too.
    const std::string line = doc.dump() + "\n";
    const auto path = path_of(session_id);
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw EngineError(ErrorClass::fatal, "cannot open " + path.string() + ": " + std::strerror(errno));
    std::size_t off = 0;
    while (off < line.size()) {
        const ssize_t n = ::write(fd, line.data() + off, line.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) {
            const int err = errno;
            ::close(fd);
            throw EngineError(ErrorClass::fatal, "cannot write " + path.string() + ": " + std::strerror(err));
        }
        off += static_cast<std::size_t>(n);
    }
    ::fdatasync(fd);
    ::close(fd);
}

void SessionStore::create(SessionState& s) {
    s.created_at = s.updated_at = now();
    append_line(s.session_id, {{"type", "session"},
                               {"session_id", s.session_id},
                               {"user_id", s.user_id},
                               {"agent_id", s.agent_id},
                               {"at", s.created_at}});
}

void SessionStore::append_entry(SessionState& s, DialogueEntry e) {
    const int next = s.history.empty() ? 0 : s.history.back().turn_index + 1;
    e.turn_index = next;
    if (e.role == "system" && next != 0) throw ControlError(ControlCode::invalid, "system entries only open a session");
    json doc = to_json(e);
    doc["type"] = "entry";
    append_line(s.session_id, doc);
    s.history.push_back(std::move(e));
    s.updated_at = now();
}

void SessionStore::set_status(SessionState& s, SessionStatus to) {
    if (!transition_allowed(s.status, to)) {
        throw ControlError(ControlCode::conflict, "session " + s.session_id + " cannot go from " +
                                                      std::string(to_string(s.status)) + " to " +
                                                      std::string(to_string(to)));
    }
    s.updated_at = now();
    append_line(s.session_id, {{"type", "status"}, {"status", to_string(to)}, {"at", s.updated_at}});
    s.status = to;
}

void SessionStore::add_execution(SessionState& s, const std::string& exec_id) {
    append_line(s.session_id, {{"type", "execution"}, {"exec_id", exec_id}});
    s.exec_ids.push_back(exec_id);
}

SessionState replay_session_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ControlError(ControlCode::not_found, "cannot read " + path.string());
    SessionState s;
    bool header = false;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        const json doc = json::parse(line, nullptr, false);
        if (doc.is_discarded() || !doc.is_object()) continue;  // torn tail
        const auto type = doc.value("type", "");
        if (type == "session") {
            s.session_id = doc.value("session_id", "");
            s.user_id = doc.value("user_id", "");
            s.agent_id = doc.value("agent_id", "");
            s.created_at = s.updated_at = doc.value("at", "");
            header = true;
        } else if (type == "entry") {
            s.history.push_back(dialogue_entry_from_json(doc));
        } else if (type == "status") {
            s.status = session_status_from_string(doc.value("status", ""));
            s.updated_at = doc.value("at", s.updated_at);
        } else if (type == "execution") {
            s.exec_ids.push_back(doc.value("exec_id", ""));
        }
    }
    if (!header) throw ControlError(ControlCode::invalid, path.string() + " has no session header");
    return s;
}

std::vector<SessionState> SessionStore::load_all() const {
    std::vector<SessionState> out;
    for (const auto& entry : fs::directory_iterator(dir_)) {
        if (entry.path().extension() != ".jsonl") continue;
        try {
            out.push_back(replay_session_file(entry.path()));
        } catch (const std::exception&) {
            // Unreadable files stay on disk for inspection but are not served.
        }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.session_id < b.session_id; });
    return out;
}

}  // namespace bprun
