#include "protocol/frame.hpp"

#include <array>

namespace bprun {

namespace {

constexpr std::array<std::pair<FrameKind, std::string_view>, 5> kKindNames{{
    {FrameKind::init, "init"},
    {FrameKind::request, "request"},
    {FrameKind::result, "result"},
    {FrameKind::event, "event"},
    {FrameKind::finish, "finish"},
}};

constexpr std::array<std::string_view, 6> kRequestOps{
    ops::llm_invoke, ops::kb_query, ops::tool_call, ops::user_send, ops::user_wait, ops::log,
};

constexpr std::size_t kMaxNestingDepth = 256;

std::optional<FrameKind> kind_from_string(std::string_view name) {
    for (const auto& [k, n] : kKindNames) {
        if (n == name) return k;
    }
    return std::nullopt;
}

// Rejects pathological nesting before handing the body to the JSON parser.
bool nesting_within_limit(std::string_view body) {
    std::size_t depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (char c : body) {
        if (in_string) {
            if (escaped) {
                escaped = false;
            } else if (c == '\\') {
                escaped = true;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{' || c == '[') {
            if (++depth > kMaxNestingDepth) return false;
        } else if ((c == '}' || c == ']') && depth > 0) {
            --depth;
        }
    }
    return true;
}

std::uint32_t read_be32(std::span<const std::uint8_t> bytes) {
    return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
           (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

}  // namespace

std::string_view to_string(FrameKind kind) {
    for (const auto& [k, n] : kKindNames) {
        if (k == kind) return n;
    }
    return "event";
}

bool is_request_op(std::string_view op) {
    for (auto o : kRequestOps) {
        if (o == op) return true;
    }
    return false;
}

bool Frame::operator==(const Frame& other) const {
    return id == other.id && kind == other.kind && op == other.op && payload == other.payload &&
           ok == other.ok && error == other.error;
}

Frame Frame::request(std::uint64_t id, std::string_view op, nlohmann::json payload) {
    Frame f;
    f.id = id;
    f.kind = FrameKind::request;
    f.op = std::string(op);
    f.payload = std::move(payload);
    return f;
}

Frame Frame::success(std::uint64_t id, nlohmann::json payload) {
    Frame f;
    f.id = id;
    f.kind = FrameKind::result;
    f.payload = std::move(payload);
    return f;
}

Frame Frame::failure(std::uint64_t id, ErrorInfo error) {
    Frame f;
    f.id = id;
    f.kind = FrameKind::result;
    f.ok = false;
    f.payload = nlohmann::json::object();
    f.error = std::move(error);
    return f;
}

Frame Frame::finish(std::uint64_t id, nlohmann::json payload) {
    Frame f;
    f.id = id;
    f.kind = FrameKind::finish;
    f.payload = std::move(payload);
    return f;
}

Frame Frame::event(std::string_view op, nlohmann::json payload) {
    Frame f;
    f.kind = FrameKind::event;
    f.op = std::string(op);
    f.payload = std::move(payload);
    return f;
}

void validate_frame(const Frame& frame) {
    if (frame.kind == FrameKind::request && !is_request_op(frame.op)) {
        throw ValidationError("request frame has unknown op '" + frame.op + "'");
    }
    if (frame.kind != FrameKind::request && frame.kind != FrameKind::event && !frame.op.empty()) {
        throw ValidationError("op is only allowed on request and event frames");
    }
    if (frame.kind == FrameKind::result) {
        if (frame.ok == frame.error.has_value()) {
            throw ValidationError("result frame must carry an error exactly when ok=false");
        }
    } else {
        if (!frame.ok || frame.error) {
            throw ValidationError("only result frames carry ok/error");
        }
    }
    if (frame.error && frame.error->cls == ErrorClass::quota && frame.kind != FrameKind::result) {
        throw ValidationError("quota errors only appear on engine results");
    }
}

nlohmann::json frame_to_json(const Frame& frame) {
    nlohmann::json doc = nlohmann::json::object();
    doc["id"] = frame.id;
    doc["kind"] = to_string(frame.kind);
    if (!frame.op.empty()) doc["op"] = frame.op;
    doc["payload"] = frame.payload;
    if (frame.kind == FrameKind::result) {
        doc["ok"] = frame.ok;
        if (frame.error) doc["error"] = to_json(*frame.error);
    }
    return doc;
}

Frame frame_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ProtocolError("frame must be a JSON object");

    Frame f;
    auto id = doc.find("id");
    if (id == doc.end() || !id->is_number_unsigned()) {
        throw ProtocolError("frame.id must be a non-negative integer");
    }
    f.id = id->get<std::uint64_t>();

    auto kind = doc.find("kind");
    if (kind == doc.end() || !kind->is_string()) throw ProtocolError("frame.kind missing");
    auto parsed_kind = kind_from_string(kind->get_ref<const std::string&>());
    if (!parsed_kind) throw ProtocolError("unknown frame kind '" + kind->get<std::string>() + "'");
    f.kind = *parsed_kind;

    if (auto op = doc.find("op"); op != doc.end()) {
        if (!op->is_string()) throw ProtocolError("frame.op must be a string");
        f.op = op->get<std::string>();
    }

    auto payload = doc.find("payload");
    if (payload == doc.end()) throw ProtocolError("frame.payload missing");
    f.payload = *payload;

    if (f.kind == FrameKind::result) {
        auto ok = doc.find("ok");
        if (ok == doc.end() || !ok->is_boolean()) throw ProtocolError("result.ok missing");
        f.ok = ok->get<bool>();
        if (auto err = doc.find("error"); err != doc.end()) {
            f.error = error_info_from_json(*err);
        }
    } else if (doc.contains("ok") || doc.contains("error")) {
        throw ProtocolError("only result frames carry ok/error");
    }

    for (const auto& item : doc.items()) {
        const auto& key = item.key();
        if (key != "id" && key != "kind" && key != "op" && key != "payload" && key != "ok" &&
            key != "error") {
            throw ProtocolError("unexpected frame field '" + key + "'");
        }
    }

    try {
        validate_frame(f);
    } catch (const ValidationError& e) {
        throw ProtocolError(e.what());
    }
    return f;
}

std::vector<std::uint8_t> encode_frame(const Frame& frame) {
    validate_frame(frame);
    const std::string body =
        frame_to_json(frame).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    if (body.size() > kMaxFrameBodyBytes) {
        throw ValidationError("frame body of " + std::to_string(body.size()) +
                              " bytes exceeds the 8 MiB cap");
    }
    const auto n = static_cast<std::uint32_t>(body.size());
    std::vector<std::uint8_t> out;
    out.reserve(kFrameHeaderBytes + body.size());
    out.push_back(static_cast<std::uint8_t>(n >> 24));
    out.push_back(static_cast<std::uint8_t>(n >> 16));
    out.push_back(static_cast<std::uint8_t>(n >> 8));
    out.push_back(static_cast<std::uint8_t>(n));
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

std::optional<DecodedFrame> try_decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kFrameHeaderBytes) return std::nullopt;
    const std::uint32_t length = read_be32(bytes);
    if (length > kMaxFrameBodyBytes) {
        throw ProtocolError("frame header declares " + std::to_string(length) +
                            " bytes, above the 8 MiB cap");
    }
    if (bytes.size() - kFrameHeaderBytes < length) return std::nullopt;

    std::string_view body(reinterpret_cast<const char*>(bytes.data() + kFrameHeaderBytes), length);
    if (!nesting_within_limit(body)) throw ProtocolError("frame nesting too deep");
    auto doc = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
    if (doc.is_discarded()) throw ProtocolError("frame body is not a valid JSON document");

    return DecodedFrame{frame_from_json(doc), kFrameHeaderBytes + length};
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes) {
    auto decoded = try_decode_frame(bytes);
    if (!decoded) {
        throw ProtocolError(bytes.size() < kFrameHeaderBytes ? "truncated frame header"
                                                             : "truncated frame body");
    }
    return std::move(*decoded);
}

}  // namespace bprun
