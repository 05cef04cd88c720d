#include "control/http.hpp"

#include <httplib.h>

namespace bprun {

using nlohmann::json;

int http_status_for(ControlCode code) {
    switch (code) {
        case ControlCode::not_found: return 404;
        case ControlCode::unauthorized: return 401;
        case ControlCode::denied: return 403;
        case ControlCode::conflict: return 409;
        case ControlCode::invalid: return 400;
    }
    return 400;
}

namespace {

void send_json(httplib::Response& res, int status, const json& doc) {
    res.status = status;
    res.set_content(doc.dump(), "application/json");
}

void send_error(httplib::Response& res, ControlCode code, const std::string& message) {
    send_json(res, http_status_for(code), {{"error", {{"code", to_string(code)}, {"message", message}}}});
}

json body_of(const httplib::Request& req) {
    json doc = json::parse(req.body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) throw ControlError(ControlCode::invalid, "body must be a JSON object");
    return doc;
}

std::string string_field(const json& doc, const char* key) {
    if (!doc.contains(key) || !doc[key].is_string()) {
        throw ControlError(ControlCode::invalid, std::string("'") + key + "' must be a string");
    }
    return doc[key].get<std::string>();
}

// Wraps a handler so every failure becomes a JSON error response.
template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const ControlError& e) {
            send_error(res, e.code(), e.what());
        } catch (const EngineError& e) {
            send_json(res, e.cls() == ErrorClass::validation ? 400 : 500,
                      {{"error", {{"code", to_string(e.cls())}, {"message", e.what()}}}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", {{"code", "internal"}, {"message", e.what()}}}});
        }
    };
}

}  // namespace

HttpGateway::HttpGateway(ControlLayer& layer) : layer_(layer), server_(std::make_unique<httplib::Server>()) {
    auto& s = *server_;
    // Streams hold a worker for their whole life; leave room for many.
    s.new_task_queue = [] { return new httplib::ThreadPool(32); };

    s.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const json body = body_of(req);
               const auto st = layer_.create_session(string_field(body, "user_id"), string_field(body, "agent_id"),
                                                     req.get_header_value("X-Agent-Token"));
               send_json(res, 201, summary_json(st));
           }));

    s.Post(R"(/v1/sessions/([^/]+)/messages)", guarded([this](const httplib::Request& req, httplib::Response& res) {
               const json body = body_of(req);
               auto stream = layer_.post_message(req.matches[1], req.get_header_value("X-Agent-Token"),
                                                 string_field(body, "content"));
               res.status = 200;
               res.set_header("Cache-Control", "no-cache");
               res.set_chunked_content_provider(
                   "text/event-stream", [stream](std::size_t, httplib::DataSink& sink) {
                       auto e = stream->next(std::chrono::milliseconds(500));
                       if (e) {
                           const auto bytes = format_sse(*e);
                           return sink.write(bytes.data(), bytes.size());
                       }
                       if (stream->finished()) sink.done();
                       return sink.is_writable();
                   });
           }));

    s.Get(R"(/v1/sessions/([^/]+)/history)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              std::optional<int> up_to;
              if (req.has_param("up_to")) {
                  const auto v = req.get_param_value("up_to");
                  try {
                      std::size_t used = 0;
                      up_to = std::stoi(v, &used);
                      if (used != v.size() || *up_to < 0) throw 0;
                  } catch (...) {
                      throw ControlError(ControlCode::invalid, "up_to must be a non-negative integer");
                  }
              }
              const auto entries =
                  layer_.fetch_history(req.matches[1], req.get_header_value("X-Agent-Token"), up_to);
              json arr = json::array();
              for (const auto& e : entries) arr.push_back(to_json(e));
              const auto st = layer_.session(req.matches[1]);
              send_json(res, 200, {{"session_id", st.session_id}, {"status", to_string(st.status)}, {"entries", arr}});
          }));

    s.Get(R"(/v1/executions/([^/]+)/telemetry)", guarded([this](const httplib::Request& req, httplib::Response& res) {
              res.status = 200;
              res.set_content(layer_.telemetry_line(req.matches[1], req.get_header_value("X-Agent-Token")),
                              "application/json");
          }));

    s.Get("/v1/status", guarded([this](const httplib::Request&, httplib::Response& res) {
              send_json(res, 200, layer_.status());
          }));
}

HttpGateway::~HttpGateway() { stop(); }

int HttpGateway::bind(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = server_->bind_to_any_port(host);
    } else if (!server_->bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) throw EngineError(ErrorClass::fatal, "cannot listen on " + host + ":" + std::to_string(port));
    return bound;
}

void HttpGateway::serve() { server_->listen_after_bind(); }

void HttpGateway::start() {
    thread_ = std::thread([this] { serve(); });
    server_->wait_until_ready();
}

void HttpGateway::stop() {
    if (server_) server_->stop();
    if (thread_.joinable()) thread_.join();
}

// ---------------------------------------------------------------------------

GatewayClient::GatewayClient(std::string base_url) : base_url_(std::move(base_url)) {}
GatewayClient::~GatewayClient() = default;

namespace {

[[noreturn]] void throw_response(const httplib::Result& r) {
    if (!r) throw EngineError(ErrorClass::transient, "agentd unreachable: " + httplib::to_string(r.error()));
    const json doc = json::parse(r->body, nullptr, false);
    const std::string code = doc.is_object() && doc.contains("error") ? doc["error"].value("code", "") : "";
    const std::string msg = doc.is_object() && doc.contains("error") ? doc["error"].value("message", r->body) : r->body;
    for (auto c : {ControlCode::not_found, ControlCode::unauthorized, ControlCode::denied, ControlCode::conflict,
                   ControlCode::invalid}) {
        if (to_string(c) == code) throw ControlError(c, msg);
    }
    throw EngineError(ErrorClass::fatal, "HTTP " + std::to_string(r->status) + ": " + msg);
}

httplib::Client make_client(const std::string& base) {
    httplib::Client c(base);
    c.set_read_timeout(std::chrono::seconds(300));
    c.set_connection_timeout(std::chrono::seconds(5));
    return c;
}

}  // namespace

json GatewayClient::create_session(const std::string& user_id, const std::string& agent_id, const std::string& token) {
    auto c = make_client(base_url_);
    auto r = c.Post("/v1/sessions", {{"X-Agent-Token", token}}, json{{"user_id", user_id}, {"agent_id", agent_id}}.dump(),
                    "application/json");
    if (!r || r->status != 201) throw_response(r);
    return json::parse(r->body);
}

std::string GatewayClient::post_message(const std::string& session_id, const std::string& token,
                                        const std::string& content,
                                        const std::function<void(const SseEvent&)>& on_event) {
    auto c = make_client(base_url_);
    std::string raw;
    std::string error_body;
    int status = 0;
    SseParser parser;
    httplib::Request req;
    req.method = "POST";
    req.path = "/v1/sessions/" + session_id + "/messages";
    req.headers = {{"X-Agent-Token", token}, {"Accept", "text/event-stream"}};
    req.body = json{{"content", content}}.dump();
    req.set_header("Content-Type", "application/json");
    req.response_handler = [&](const httplib::Response& res) {
        status = res.status;
        return true;
    };
    req.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        if (status != 200) {
            error_body.append(data, len);
            return true;
        }
        raw.append(data, len);
        for (auto& e : parser.feed(std::string_view(data, len))) {
            json doc = json::parse(e.data, nullptr, false);
            if (on_event) on_event({e.type, doc.is_discarded() ? json(e.data) : doc});
        }
        return true;
    };
    auto r = c.send(req);
    if (!r) throw EngineError(ErrorClass::transient, "agentd unreachable: " + httplib::to_string(r.error()));
    if (status != 200) {
        r->body = error_body;
        throw_response(r);
    }
    return raw;
}

json GatewayClient::history(const std::string& session_id, const std::string& token, std::optional<int> up_to) {
    auto c = make_client(base_url_);
    std::string path = "/v1/sessions/" + session_id + "/history";
    if (up_to) path += "?up_to=" + std::to_string(*up_to);
    auto r = c.Get(path, {{"X-Agent-Token", token}});
    if (!r || r->status != 200) throw_response(r);
    return json::parse(r->body);
}

std::string GatewayClient::telemetry(const std::string& exec_id, const std::string& token) {
    auto c = make_client(base_url_);
    auto r = c.Get("/v1/executions/" + exec_id + "/telemetry", {{"X-Agent-Token", token}});
    if (!r || r->status != 200) throw_response(r);
    return r->body;
}

json GatewayClient::status() {
    auto c = make_client(base_url_);
    auto r = c.Get("/v1/status");
    if (!r || r->status != 200) throw_response(r);
    return json::parse(r->body);
}

}  // namespace bprun
