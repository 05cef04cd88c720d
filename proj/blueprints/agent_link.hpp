#pragma once

// Minimal blueprint-side client for the engine protocol. Native blueprints
// link this; scripted blueprints speak the same frames through their SDK.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "protocol/channel.hpp"
#include "protocol/messages.hpp"

namespace bprun::blueprint {

inline constexpr int kExitMissingEnv = 64;
inline constexpr int kExitProtocol = 65;

// An ok=false result re-raised on the blueprint side.
class RemoteError : public std::runtime_error {
public:
    explicit RemoteError(ErrorInfo info) : std::runtime_error(info.message), info(std::move(info)) {}
    ErrorInfo info;
};

class AgentLink {
public:
    // Reads AGENT_RPC_ADDR, connects and consumes `init`. Exits the process
    // with 64 when the variable is missing and 65 on handshake failure.
    static AgentLink connect();

    const nlohmann::json& init() const { return init_; }
    const nlohmann::json& snapshot() const { return init_["snapshot"]; }
    bool toggle(const std::string& name) const;
    std::string model() const { return init_.value("model", std::string("default")); }

    LlmResponse llm(std::vector<ChatMessage> messages, std::vector<ToolSpec> tools = {});
    // The tool result document ({ok, value|error}).
    nlohmann::json tool(const std::string& name, nlohmann::json args);
    nlohmann::json kb(const std::string& kb_id, const std::string& query, int top_k = 3);
    void send_user(const std::string& text);
    std::string wait_user();
    void log(const std::string& level, const std::string& message, nlohmann::json data = nullptr);
    [[noreturn]] void finish(const std::string& status, nlohmann::json output = nullptr);

    // Sends a raw frame and returns the matching result payload.
    nlohmann::json call(std::string_view op, nlohmann::json payload);
    FrameChannel& channel() { return *channel_; }
    std::uint64_t next_id() { return ++last_id_; }

private:
    explicit AgentLink(UniqueFd fd) : channel_(std::make_unique<FrameChannel>(std::move(fd))) {}

    std::unique_ptr<FrameChannel> channel_;
    nlohmann::json init_;
    std::uint64_t last_id_ = 0;
};

struct DcVerdict {
    bool approve = false;
    std::string reason;
};

// First line must be exactly APPROVE or "REVISE: <reason>"; anything else throws.
DcVerdict parse_verdict(const std::string& text);

// Double-check gate: asks the model to validate a proposed irreversible
// action against a policy excerpt. Fails closed.
DcVerdict double_check(AgentLink& link, const std::string& tool, const nlohmann::json& args,
                       const std::string& rationale, const std::string& policy);

// Parses a model reply that must be a single JSON object.
nlohmann::json parse_json_reply(const LlmResponse& response);

}  // namespace bprun::blueprint
