#include "control/sse.hpp"

#include <set>

namespace bprun {

using nlohmann::json;

std::string format_sse(const SseEvent& event) {
    // dump() escapes control characters, so the document is one line.
    return "event: " + event.type + "\ndata: " + event.data.dump() + "\n\n";
}

std::vector<SseEvent> relay_event(const std::string& exec_id, const TelemetryEvent& event, const json& request,
                                  const json& result) {
    auto base = [&] { return json{{"exec_id", exec_id}, {"seq", event.seq}, {"op", event.op}}; };
    const json& s = event.summary;

    if (event.op == "user.send") {
        json d = base();
        d["content"] = s.value("content", "");
        return {{"assistant.message", d}};
    }
    if (event.op == "tool.call") {
        json call = base();
        call["name"] = s.value("name", "");
        call["args"] = s.value("args", json::object());
        json res = base();
        res["name"] = call["name"];
        res["ok"] = result.is_object() && result.value("ok", false);
        res["result"] = result;
        return {{"tool.call", call}, {"tool.result", res}};
    }
    if (event.op == "llm.invoke") {
        json d = base();
        for (const char* k : {"model", "usage", "attempts", "finish_reason", "error"}) {
            if (s.contains(k)) d[k] = s[k];
        }
        return {{"llm.usage", d}};
    }
    if (event.op == "finish") {
        json d = base();
        d["status"] = s.value("status", "ok");
        if (s.contains("output")) d["output"] = s["output"];
        return {{"done", d}};
    }
    json d = base();
    d["status"] = "running";
    if (event.op == "kb.query" || event.op == "user.wait" || event.op == "log") {
        d["detail"] = s;
    } else {
        d["diagnostic"] = "unmapped op '" + event.op + "'";
        d["detail"] = request;
    }
    return {{"status", d}};
}

std::vector<SseParser::Raw> SseParser::feed(std::string_view bytes) {
    std::vector<Raw> out;
    for (char c : bytes) {
        if (last_cr_) {
            last_cr_ = false;
            if (c == '\n') continue;  // CRLF: the CR already ended the line
        }
        if (c == '\r' || c == '\n') {
            last_cr_ = c == '\r';
            line(line_, out);
            line_.clear();
        } else {
            line_ += c;
        }
    }
    return out;
}

void SseParser::line(std::string_view l, std::vector<Raw>& out) {
    if (l.empty()) {
        if (have_data_) {
            if (!data_.empty() && data_.back() == '\n') data_.pop_back();
            out.push_back({type_.empty() ? "message" : type_, data_});
        }
        type_.clear();
        data_.clear();
        have_data_ = false;
        return;
    }
    if (l.front() == ':') return;
    std::string_view field = l;
    std::string_view value;
    if (const auto colon = l.find(':'); colon != std::string_view::npos) {
        field = l.substr(0, colon);
        value = l.substr(colon + 1);
        if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    }
    if (field == "event") {
        type_ = value;
    } else if (field == "data") {
        data_.append(value);
        data_ += '\n';
        have_data_ = true;
    }
    // id and retry are legal but unused here.
}

bool parse_strict_sse(std::string_view bytes, std::vector<SseEvent>& out, std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        if (bytes.compare(pos, 7, "event: ") != 0) return fail("record at byte " + std::to_string(pos) + " does not start with 'event: '");
        const auto nl1 = bytes.find('\n', pos);
        if (nl1 == std::string_view::npos) return fail("unterminated event line");
        const std::string type(bytes.substr(pos + 7, nl1 - pos - 7));
        if (type.empty() || type.find_first_of("\r:") != std::string::npos) return fail("bad event type '" + type + "'");
        pos = nl1 + 1;
        if (bytes.compare(pos, 6, "data: ") != 0) return fail("event '" + type + "' has no 'data: ' line");
        const auto nl2 = bytes.find('\n', pos);
        if (nl2 == std::string_view::npos) return fail("unterminated data line");
        const std::string_view data = bytes.substr(pos + 6, nl2 - pos - 6);
        if (data.find('\r') != std::string_view::npos) return fail("carriage return inside data");
        pos = nl2 + 1;
        if (pos >= bytes.size() || bytes[pos] != '\n') return fail("event '" + type + "' is not followed by a blank line");
        ++pos;
        json doc = json::parse(data, nullptr, false);
        if (doc.is_discarded()) return fail("data of '" + type + "' is not a JSON document");
        out.push_back({type, std::move(doc)});
    }
    return true;
}

std::vector<std::pair<std::uint64_t, std::string>> stream_ops(const std::vector<SseEvent>& events) {
    std::vector<std::pair<std::uint64_t, std::string>> out;
    std::set<std::uint64_t> seen;
    for (const auto& e : events) {
        if (!e.data.is_object() || !e.data.contains("seq") || !e.data["seq"].is_number_unsigned()) continue;
        const auto seq = e.data["seq"].get<std::uint64_t>();
        if (seen.insert(seq).second) out.emplace_back(seq, e.data.value("op", ""));
    }
    return out;
}

}  // namespace bprun
