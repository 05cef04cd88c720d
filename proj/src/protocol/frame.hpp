#pragma once

// Wire format for engine <-> blueprint traffic.
//
// Every frame is a 4-byte big-endian unsigned length followed by exactly that
// many bytes of a UTF-8 JSON document:
//
//   {"id":<u64>,"kind":"init|request|result|event|finish","op":"...",
//    "payload":<any>,"ok":<bool>,"error":{"class","message","retryable"}}
//
// `op` is present for requests (and optionally events), `ok` only on results,
// `error` only on results with ok=false. Keys are emitted in sorted order so
// the encoding is canonical and byte-comparable across runs.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protocol/error.hpp"

namespace bprun {

inline constexpr std::size_t kFrameHeaderBytes = 4;
inline constexpr std::size_t kMaxFrameBodyBytes = 8u * 1024u * 1024u;

enum class FrameKind { init, request, result, event, finish };

std::string_view to_string(FrameKind kind);

namespace ops {
inline constexpr std::string_view llm_invoke = "llm.invoke";
inline constexpr std::string_view kb_query = "kb.query";
inline constexpr std::string_view tool_call = "tool.call";
inline constexpr std::string_view user_send = "user.send";
inline constexpr std::string_view user_wait = "user.wait";
inline constexpr std::string_view log = "log";
}  // namespace ops

bool is_request_op(std::string_view op);

struct Frame {
    std::uint64_t id = 0;  // engine-originated frames use 0
    FrameKind kind = FrameKind::event;
    std::string op;
    nlohmann::json payload = nlohmann::json::object();
    bool ok = true;                  // meaningful on results only
    std::optional<ErrorInfo> error;  // set iff kind == result && !ok

    bool operator==(const Frame& other) const;

    static Frame request(std::uint64_t id, std::string_view op, nlohmann::json payload);
    static Frame success(std::uint64_t id, nlohmann::json payload);
    static Frame failure(std::uint64_t id, ErrorInfo error);
    static Frame finish(std::uint64_t id, nlohmann::json payload);
    static Frame event(std::string_view op, nlohmann::json payload);
};

// Throws ValidationError when the frame violates the type invariants.
void validate_frame(const Frame& frame);

nlohmann::json frame_to_json(const Frame& frame);
Frame frame_from_json(const nlohmann::json& doc);  // throws ProtocolError

// Throws ValidationError on invariant violations or when the body exceeds the cap.
std::vector<std::uint8_t> encode_frame(const Frame& frame);

struct DecodedFrame {
    Frame frame;
    std::size_t consumed = 0;
};

// Returns std::nullopt while the buffer does not yet hold a complete frame.
// Throws ProtocolError for oversized headers and malformed bodies.
std::optional<DecodedFrame> try_decode_frame(std::span<const std::uint8_t> bytes);

// Like try_decode_frame but treats an incomplete buffer as truncation.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes);

}  // namespace bprun
