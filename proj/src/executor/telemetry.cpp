#include "executor/telemetry.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

namespace bprun {

namespace {

std::string_view to_string(ExitStatus s) {
    switch (s) {
        case ExitStatus::ok: return "ok";
        case ExitStatus::error: return "error";
        case ExitStatus::quota_killed: return "quota_killed";
    }
    return "error";
}

QuotaDimension dimension_from_string(const std::string& s) {
    if (s == "cpu") return QuotaDimension::cpu;
    if (s == "memory") return QuotaDimension::memory;
    if (s == "frames") return QuotaDimension::frames;
    return QuotaDimension::wall_clock;
}

}  // namespace

std::size_t TelemetryRecord::count_events(const std::string& op) const {
    std::size_t n = 0;
    for (const auto& e : events) n += e.op == op ? 1 : 0;
    return n;
}

nlohmann::json to_json(const TelemetryEvent& event) {
    return {{"seq", event.seq},
            {"frame_id", event.frame_id},
            {"op", event.op},
            {"summary", event.summary},
            {"duration_ms", event.duration_ms}};
}

nlohmann::json to_json(const ExecutionExit& exit) {
    nlohmann::json doc{{"status", to_string(exit.status)}};
    if (exit.error) doc["error"] = to_json(*exit.error);
    if (exit.limit) doc["limit"] = to_string(*exit.limit);
    return doc;
}

nlohmann::json to_json(const TelemetryRecord& r) {
    nlohmann::json events = nlohmann::json::array();
    for (const auto& e : r.events) events.push_back(to_json(e));
    nlohmann::json retries = nlohmann::json::array();
    for (const auto& x : r.retries) {
        retries.push_back({{"op_id", x.op_id}, {"attempt", x.attempt}, {"error_class", to_string(x.error_class)}});
    }
    return {{"v", 1},
            {"exec_id", r.exec_id},
            {"agent_id", r.agent_id},
            {"session_id", r.session_id},
            {"started_at", r.started_at},
            {"ended_at", r.ended_at},
            {"exit", to_json(r.exit)},
            {"quota_usage", to_json(r.quota_usage)},
            {"events", events},
            {"stdout", r.stdout_data},
            {"stderr", r.stderr_data},
            {"retries", retries},
            {"network", r.network},
            {"wall_ms", r.wall_ms}};
}

TelemetryRecord telemetry_record_from_json(const nlohmann::json& doc) {
    TelemetryRecord r;
    r.exec_id = doc.value("exec_id", "");
    r.agent_id = doc.value("agent_id", "");
    r.session_id = doc.value("session_id", "");
    r.started_at = doc.value("started_at", "");
    r.ended_at = doc.value("ended_at", "");
    const auto& exit = doc.at("exit");
    const std::string status = exit.value("status", "error");
    r.exit.status = status == "ok" ? ExitStatus::ok : status == "quota_killed" ? ExitStatus::quota_killed
                                                                               : ExitStatus::error;
    if (exit.contains("error")) r.exit.error = error_info_from_json(exit["error"]);
    if (exit.contains("limit")) r.exit.limit = dimension_from_string(exit["limit"].get<std::string>());
    const auto& usage = doc.value("quota_usage", nlohmann::json::object());
    r.quota_usage.cpu_seconds = usage.value("cpu_seconds", 0.0);
    r.quota_usage.memory_bytes = usage.value("memory_bytes", std::uint64_t{0});
    r.quota_usage.wall_seconds = usage.value("wall_seconds", 0.0);
    r.quota_usage.frames = usage.value("frames", std::uint64_t{0});
    for (const auto& e : doc.value("events", nlohmann::json::array())) {
        r.events.push_back({e.value("seq", std::uint64_t{0}), e.value("frame_id", std::uint64_t{0}),
                            e.value("op", ""), e.value("summary", nlohmann::json::object()),
                            e.value("duration_ms", 0.0)});
    }
    r.stdout_data = doc.value("stdout", "");
    r.stderr_data = doc.value("stderr", "");
    for (const auto& x : doc.value("retries", nlohmann::json::array())) {
        r.retries.push_back({x.value("op_id", std::uint64_t{0}), x.value("attempt", 0),
                             error_class_from_string(x.value("error_class", "transient"))});
    }
    r.network = doc.value("network", nlohmann::json::object());
    r.wall_ms = doc.value("wall_ms", 0.0);
    return r;
}

nlohmann::json canonical_telemetry(const TelemetryRecord& record) {
    auto doc = to_json(record);
    for (const char* key : {"exec_id", "session_id", "started_at", "ended_at", "wall_ms", "quota_usage"}) {
        doc.erase(key);
    }
    for (auto& e : doc["events"]) e.erase("duration_ms");
    return doc;
}

std::optional<std::string> TelemetryLog::write(const TelemetryRecord& record) {
    const std::string line = to_json(record).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    std::lock_guard lock(mu_);
    std::error_code ec;
    auto parent = std::filesystem::path(path_).parent_path();
    if (!parent.empty()) std::filesystem::create_directories(parent, ec);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (out) {
        out << line << '\n';
        out.flush();
    }
    if (!out) {
        std::cerr << "telemetry: failed to append record " << record.exec_id << " to " << path_ << '\n';
        return std::nullopt;
    }
    return record.exec_id;
}

std::optional<std::string> TelemetryLog::find_line(const std::string& exec_id) const {
    std::lock_guard lock(mu_);
    std::ifstream in(path_, std::ios::binary);
    const std::string needle = "\"exec_id\":\"" + exec_id + "\"";
    for (std::string line; std::getline(in, line);) {
        if (line.find(needle) == std::string::npos) continue;
        auto doc = nlohmann::json::parse(line, nullptr, false);
        if (!doc.is_discarded() && doc.value("exec_id", "") == exec_id) return line;
    }
    return std::nullopt;
}

}  // namespace bprun
