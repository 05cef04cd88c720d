#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace bprun {

// Five-class error taxonomy shared by the engine and blueprint processes.
enum class ErrorClass { transient, fatal, quota, validation, protocol };

std::string_view to_string(ErrorClass cls);
ErrorClass error_class_from_string(std::string_view name);  // throws ProtocolError on unknown

struct ErrorInfo {
    ErrorClass cls = ErrorClass::fatal;
    std::string message;

    // Only transient failures are worth another attempt.
    bool retryable() const { return cls == ErrorClass::transient; }

    bool operator==(const ErrorInfo&) const = default;
};

nlohmann::json to_json(const ErrorInfo& info);
ErrorInfo error_info_from_json(const nlohmann::json& doc);

// Base exception for everything the engine raises. Carries the classified error.
class EngineError : public std::runtime_error {
public:
    explicit EngineError(ErrorInfo info)
        : std::runtime_error(info.message), info_(std::move(info)) {}
    EngineError(ErrorClass cls, std::string message)
        : EngineError(ErrorInfo{cls, std::move(message)}) {}

    const ErrorInfo& info() const noexcept { return info_; }
    ErrorClass cls() const noexcept { return info_.cls; }

private:
    ErrorInfo info_;
};

class ProtocolError : public EngineError {
public:
    explicit ProtocolError(std::string message)
        : EngineError(ErrorClass::protocol, std::move(message)) {}
};

class ValidationError : public EngineError {
public:
    explicit ValidationError(std::string message)
        : EngineError(ErrorClass::validation, std::move(message)) {}
};

// Where a raw failure came from, before classification.
enum class FailureSource {
    provider,        // LLM provider or remote tool endpoint
    blueprint,       // the sandboxed blueprint process
    protocol,        // frame decoding / sequencing
    quota_guard,     // resource governor
    tool_arguments,  // schema validation of tool arguments
    engine,          // internal engine failure
    unknown,
};

struct RawFailure {
    FailureSource source = FailureSource::unknown;
    std::string code;         // e.g. "timeout", "rate_limit", "exit_nonzero"
    std::string description;  // free text, copied into ErrorInfo::message
};

// Total, deterministic mapping from raw failures to classified errors.
ErrorInfo classify_error(const RawFailure& failure);

}  // namespace bprun
