#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "control/control_layer.hpp"

namespace httplib {
class Server;
}

namespace bprun {

// HTTP front of the control layer:
//   POST /v1/sessions                     {user_id, agent_id} + X-Agent-Token
//   POST /v1/sessions/{id}/messages       {content} -> text/event-stream
//   GET  /v1/sessions/{id}/history?up_to=N
//   GET  /v1/executions/{id}/telemetry
//   GET  /v1/status
// Errors are {"error":{"code","message"}} with 400/401/403/404/409.
class HttpGateway {
public:
    explicit HttpGateway(ControlLayer& layer);
    ~HttpGateway();

    // Port 0 picks a free port. Returns the bound port; throws EngineError on failure.
    int bind(const std::string& host, int port);
    void serve();          // blocks until stop()
    void start();          // serve() on a background thread
    void stop();

private:
    ControlLayer& layer_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
};

int http_status_for(ControlCode code);

// Client for the endpoints above. Failures come back as ControlError with
// the server's code, or EngineError(transient) when the server is unreachable.
class GatewayClient {
public:
    explicit GatewayClient(std::string base_url);
    ~GatewayClient();

    nlohmann::json create_session(const std::string& user_id, const std::string& agent_id, const std::string& token);

    // Calls `on_event` for each event as it arrives; returns the raw bytes.
    std::string post_message(const std::string& session_id, const std::string& token, const std::string& content,
                             const std::function<void(const SseEvent&)>& on_event = {});

    nlohmann::json history(const std::string& session_id, const std::string& token,
                           std::optional<int> up_to = std::nullopt);
    std::string telemetry(const std::string& exec_id, const std::string& token);
    nlohmann::json status();

private:
    std::string base_url_;
};

}  // namespace bprun
