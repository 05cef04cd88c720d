#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "protocol/error.hpp"
#include "protocol/messages.hpp"

namespace bprun {

// Deterministic token estimator: ceil(utf8_bytes / 4). A stand-in for a real
// tokenizer; swap by implementing TokenEstimator.
std::uint64_t token_estimate(std::string_view text);

// Fills usage.prompt_tokens/completion_tokens from the estimator.
Usage estimate_usage(const LlmRequest& request, const LlmResponse& response);

class LlmProvider {
public:
    virtual ~LlmProvider() = default;
    // Throws EngineError carrying a classified ErrorInfo on failure.
    virtual LlmResponse invoke(const LlmRequest& request) = 0;
    virtual std::string name() const = 0;
};

struct ScriptStep {
    std::optional<std::string> last_user_contains;
    LlmResponse response;
    int fail_first = 0;
    nlohmann::json only_if;  // {toggle: bool, ...}; null when unconditional
};

struct MockScript {
    std::vector<ScriptStep> steps;

    static MockScript from_json(const nlohmann::json& doc);
    static MockScript load(const std::string& path);

    // Drops steps whose only_if conditions do not hold for the given toggles.
    MockScript specialize(const nlohmann::json& toggles) const;
};

// Replays a MockScript in order. A predicate miss or running past the end is
// a fatal script error, never a silent skip.
class MockProvider final : public LlmProvider {
public:
    explicit MockProvider(MockScript script) : script_(std::move(script)) {}

    LlmResponse invoke(const LlmRequest& request) override;
    std::string name() const override { return "mock"; }

    std::size_t consumed() const;
    std::size_t failures_injected() const;

private:
    mutable std::mutex mu_;
    MockScript script_;
    std::size_t cursor_ = 0;
    int failures_on_step_ = 0;
    std::size_t failures_total_ = 0;
};

// Echoes the last user message back; used to check provider uniformity.
class LoopbackProvider final : public LlmProvider {
public:
    LlmResponse invoke(const LlmRequest& request) override;
    std::string name() const override { return "loopback"; }
};

// Adapter for OpenAI-compatible chat completion endpoints.
class HttpChatProvider final : public LlmProvider {
public:
    struct Options {
        std::string base_url;  // e.g. http://127.0.0.1:8080
        std::string path = "/v1/chat/completions";
        std::string api_key;
        std::string model;
        int timeout_ms = 30000;
    };

    explicit HttpChatProvider(Options options) : options_(std::move(options)) {}

    LlmResponse invoke(const LlmRequest& request) override;
    std::string name() const override { return "http"; }

private:
    Options options_;
};

// Builds a provider from an agent's model binding:
//   {"provider":"mock","script":"path"} | {"provider":"loopback"} |
//   {"provider":"http","base_url":...,"model":...,"api_key_env":...}
std::unique_ptr<LlmProvider> make_provider(const nlohmann::json& binding,
                                           const nlohmann::json& toggles,
                                           const std::string& base_dir);

}  // namespace bprun
