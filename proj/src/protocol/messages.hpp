#pragma once

// Standardized LLM request/response documents. Every provider speaks these,
// so blueprints never see provider-specific shapes.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace bprun {

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ToolSpec {
    std::string name;
    std::string description;
    nlohmann::json parameters = nlohmann::json::object();

    bool operator==(const ToolSpec&) const = default;
};

struct ToolCall {
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();

    bool operator==(const ToolCall&) const = default;
};

struct Usage {
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    bool operator==(const Usage&) const = default;
};

enum class FinishReason { stop, tool_call, length };

struct LlmRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    std::vector<ToolSpec> tools;
    double temperature = 0.0;
    int max_tokens = 1024;
};

struct LlmResponse {
    ChatMessage message{"assistant", ""};
    std::vector<ToolCall> tool_calls;
    Usage usage;
    FinishReason finish_reason = FinishReason::stop;

    bool operator==(const LlmResponse&) const = default;
};

bool is_valid_role(std::string_view role);
// snake_case identifier, 1..64 chars
bool is_valid_tool_name(std::string_view name);

std::string_view to_string(FinishReason reason);

nlohmann::json to_json(const ChatMessage& m);
nlohmann::json to_json(const ToolSpec& spec);
nlohmann::json to_json(const ToolCall& call);
nlohmann::json to_json(const LlmRequest& request);
nlohmann::json to_json(const LlmResponse& response);

// Parsers throw ValidationError describing the offending field.
ChatMessage chat_message_from_json(const nlohmann::json& doc);
ToolSpec tool_spec_from_json(const nlohmann::json& doc);
ToolCall tool_call_from_json(const nlohmann::json& doc);
LlmRequest llm_request_from_json(const nlohmann::json& doc);
LlmResponse llm_response_from_json(const nlohmann::json& doc);

}  // namespace bprun
