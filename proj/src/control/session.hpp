#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace bprun {

// Gateway-level failures, mapped 1:1 onto HTTP statuses and C API codes.
enum class ControlCode { not_found, unauthorized, denied, conflict, invalid };

std::string_view to_string(ControlCode code);

class ControlError : public std::runtime_error {
public:
    ControlError(ControlCode code, const std::string& message) : std::runtime_error(message), code_(code) {}
    ControlCode code() const noexcept { return code_; }

private:
    ControlCode code_;
};

enum class SessionStatus { idle, running, awaiting_user, finished, failed };

std::string_view to_string(SessionStatus s);
SessionStatus session_status_from_string(std::string_view name);  // throws ControlError(invalid)

// idle -> running -> (awaiting_user -> running)* -> finished | failed
bool transition_allowed(SessionStatus from, SessionStatus to);

struct DialogueEntry {
    int turn_index = 0;
    std::string role;  // system | user | assistant | tool
    std::string content;
    std::optional<std::string> tool_name;
    nlohmann::json tool_args;    // null when absent
    nlohmann::json tool_result;  // null when absent
    std::uint64_t token_count = 0;

    bool operator==(const DialogueEntry&) const = default;
};

nlohmann::json to_json(const DialogueEntry& e);
DialogueEntry dialogue_entry_from_json(const nlohmann::json& doc);

// What a blueprint sees of an entry inside its init snapshot.
nlohmann::json snapshot_entry(const DialogueEntry& e);

struct SessionState {
    std::string session_id;
    std::string user_id;
    std::string agent_id;
    SessionStatus status = SessionStatus::idle;
    std::vector<DialogueEntry> history;
    std::vector<std::string> exec_ids;
    std::string created_at;
    std::string updated_at;
};

nlohmann::json summary_json(const SessionState& s);

// One append-only JSONL file per session under <data_dir>/sessions/. Line
// kinds: session (header), entry, status, execution. The in-memory view is
// rebuilt by replaying the lines, so the file alone is the source of truth.
class SessionStore {
public:
    // `fixed_clock` pins every timestamp so files are byte-reproducible.
    SessionStore(std::filesystem::path data_dir, bool fixed_clock);

    // Scans the directory; returns the sessions found, sorted by id. Torn
    // trailing lines (crash mid-write) are ignored.
    std::vector<SessionState> load_all() const;

    void create(SessionState& s);
    void append_entry(SessionState& s, DialogueEntry e);
    // Throws ControlError(conflict) for a transition outside the graph.
    void set_status(SessionState& s, SessionStatus to);
    void add_execution(SessionState& s, const std::string& exec_id);

    std::filesystem::path path_of(const std::string& session_id) const;
    std::string now() const;

private:
    void append_line(const std::string& session_id, const nlohmann::json& doc);

    std::filesystem::path dir_;
    bool fixed_clock_;
};

// Replays the lines of one session file.
SessionState replay_session_file(const std::filesystem::path& path);

}  // namespace bprun
