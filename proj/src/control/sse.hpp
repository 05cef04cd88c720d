#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "executor/telemetry.hpp"

namespace bprun {

struct SseEvent {
    std::string type;
    nlohmann::json data = nlohmann::json::object();

    bool operator==(const SseEvent&) const = default;
};

// "event: <type>\n" "data: <one-line json>\n\n", nothing else.
std::string format_sse(const SseEvent& event);

// Maps one dispatched op onto stream events. Every event produced here
// carries "exec_id", "seq" and "op" so a client can line the stream up with
// the telemetry record. `finish` yields the terminal `done` event.
std::vector<SseEvent> relay_event(const std::string& exec_id, const TelemetryEvent& event,
                                  const nlohmann::json& request, const nlohmann::json& result);

// General event-stream parser: LF, CRLF or CR line ends, comment lines,
// multi-line data, optional space after the colon. Events without data are
// dropped, as a browser would.
class SseParser {
public:
    struct Raw {
        std::string type;  // "message" when no event field was given
        std::string data;
    };

    std::vector<Raw> feed(std::string_view bytes);
    // Pending bytes that did not yet end a line or an event.
    bool idle() const { return line_.empty() && data_.empty() && type_.empty() && !have_data_; }

private:
    void line(std::string_view l, std::vector<Raw>& out);

    std::string line_;
    std::string type_;
    std::string data_;
    bool have_data_ = false;
    bool last_cr_ = false;
};

// Strict check of what this server emits: a sequence of exactly
// "event: T\ndata: D\n\n" records with D a single-line JSON document. On
// success returns the parsed events; otherwise fills `why`.
bool parse_strict_sse(std::string_view bytes, std::vector<SseEvent>& out, std::string* why);

// (seq, op) pairs in first-seen order; events without a seq are skipped.
std::vector<std::pair<std::uint64_t, std::string>> stream_ops(const std::vector<SseEvent>& events);

}  // namespace bprun
