#pragma once

#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "protocol/error.hpp"
#include "sandbox/quota.hpp"

namespace bprun {

struct TelemetryEvent {
    std::uint64_t seq = 0;
    std::uint64_t frame_id = 0;
    std::string op;
    nlohmann::json summary = nlohmann::json::object();
    double duration_ms = 0.0;
};

struct RetryEntry {
    std::uint64_t op_id = 0;  // frame id of the retried request
    int attempt = 0;          // 1-based attempt that failed
    ErrorClass error_class = ErrorClass::transient;
};

enum class ExitStatus { ok, error, quota_killed };

struct ExecutionExit {
    ExitStatus status = ExitStatus::ok;
    std::optional<ErrorInfo> error;           // status == error
    std::optional<QuotaDimension> limit;      // status == quota_killed
};

// Per-execution audit record. One JSON line in telemetry.log, schema "v":1.
struct TelemetryRecord {
    std::string exec_id;
    std::string agent_id;
    std::string session_id;
    std::string started_at;
    std::string ended_at;
    ExecutionExit exit;
    QuotaUsage quota_usage;
    std::vector<TelemetryEvent> events;
    std::string stdout_data;
    std::string stderr_data;
    std::vector<RetryEntry> retries;
    nlohmann::json network = nlohmann::json::object();
    double wall_ms = 0.0;  // steady-clock duration, independent of timestamps

    bool closed() const { return !ended_at.empty(); }
    std::size_t count_events(const std::string& op) const;
};

nlohmann::json to_json(const TelemetryEvent& event);
nlohmann::json to_json(const ExecutionExit& exit);
nlohmann::json to_json(const TelemetryRecord& record);
TelemetryRecord telemetry_record_from_json(const nlohmann::json& doc);

// Record with timestamps, durations and ids removed; two deterministic runs
// of the same task compare equal on this form.
nlohmann::json canonical_telemetry(const TelemetryRecord& record);

// Append-only JSONL log. Writes are serialized process-wide per instance.
class TelemetryLog {
public:
    explicit TelemetryLog(std::string path) : path_(std::move(path)) {}

    // Returns the exec id on success. Disk failures are reported on stderr and
    // return std::nullopt; they never propagate into the execution.
    std::optional<std::string> write(const TelemetryRecord& record);

    // The stored line for `exec_id`, byte-for-byte.
    std::optional<std::string> find_line(const std::string& exec_id) const;

    const std::string& path() const { return path_; }

private:
    std::string path_;
    mutable std::mutex mu_;
};

}  // namespace bprun
