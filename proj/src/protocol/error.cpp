#include "protocol/error.hpp"

#include <array>
#include <utility>

namespace bprun {

namespace {

constexpr std::array<std::pair<ErrorClass, std::string_view>, 5> kClassNames{{
    {ErrorClass::transient, "transient"},
    {ErrorClass::fatal, "fatal"},
    {ErrorClass::quota, "quota"},
    {ErrorClass::validation, "validation"},
    {ErrorClass::protocol, "protocol"},
}};

bool one_of(std::string_view code, std::initializer_list<std::string_view> options) {
    for (auto o : options) {
        if (code == o) return true;
    }
    return false;
}

}  // namespace

std::string_view to_string(ErrorClass cls) {
    for (const auto& [c, name] : kClassNames) {
        if (c == cls) return name;
    }
    return "fatal";
}

ErrorClass error_class_from_string(std::string_view name) {
    for (const auto& [c, n] : kClassNames) {
        if (n == name) return c;
    }
    throw ProtocolError("unknown error class '" + std::string(name) + "'");
}

nlohmann::json to_json(const ErrorInfo& info) {
    return nlohmann::json{
        {"class", to_string(info.cls)},
        {"message", info.message},
        {"retryable", info.retryable()},
    };
}

ErrorInfo error_info_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ProtocolError("error must be an object");
    auto cls_it = doc.find("class");
    auto msg_it = doc.find("message");
    auto retry_it = doc.find("retryable");
    if (cls_it == doc.end() || !cls_it->is_string()) throw ProtocolError("error.class missing");
    if (msg_it == doc.end() || !msg_it->is_string()) throw ProtocolError("error.message missing");
    if (retry_it == doc.end() || !retry_it->is_boolean()) throw ProtocolError("error.retryable missing");

    ErrorInfo info{error_class_from_string(cls_it->get<std::string>()), msg_it->get<std::string>()};
    if (info.retryable() != retry_it->get<bool>()) {
        throw ProtocolError("error.retryable must be true exactly for transient errors");
    }
    return info;
}

ErrorInfo classify_error(const RawFailure& failure) {
    const auto& code = failure.code;
    ErrorClass cls = ErrorClass::fatal;
    switch (failure.source) {
        case FailureSource::provider:
            if (one_of(code, {"timeout", "rate_limit", "connection_reset", "connection_refused",
                              "unavailable", "http_5xx"})) {
                cls = ErrorClass::transient;
            } else if (one_of(code, {"bad_request", "schema"})) {
                cls = ErrorClass::validation;
            }
            break;
        case FailureSource::blueprint:
            cls = ErrorClass::fatal;
            break;
        case FailureSource::protocol:
            // The peer broke the wire contract; the execution cannot continue.
            cls = ErrorClass::fatal;
            break;
        case FailureSource::quota_guard:
            cls = ErrorClass::quota;
            break;
        case FailureSource::tool_arguments:
            cls = ErrorClass::validation;
            break;
        case FailureSource::engine:
        case FailureSource::unknown:
            cls = ErrorClass::fatal;
            break;
    }

    std::string message = failure.description;
    if (message.empty()) message = code.empty() ? std::string("unclassified failure") : code;
    return ErrorInfo{cls, std::move(message)};
}

}  // namespace bprun
