#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <random>

#include "control/control_layer.hpp"
#include "control/daemon.hpp"
#include "control/http.hpp"
#include "support.hpp"

using namespace bprun;
using namespace bprun::test;

namespace {

constexpr SessionStatus kAll[] = {SessionStatus::idle, SessionStatus::running, SessionStatus::awaiting_user,
                                  SessionStatus::finished, SessionStatus::failed};

json waiter_config(const std::string& id = "waiter") {
    return {{"agent_id", id},
            {"agent_token", "tok-" + id},
            {"system_prompt", "You are a patient echo."},
            {"blueprint", {{"dir", fixture_agent_dir("waiter").string()}, {"entry_file", "waiter"}, {"runtime", "native"}}},
            {"model", {{"provider", "loopback"}}},
            {"deny_users", {"mallory"}}};
}

// Control layer over a private data dir with the waiter fixture registered.
struct Stack {
    fs::path data;
    std::unique_ptr<Engine> engine;
    std::unique_ptr<AgentRegistry> agents;
    std::unique_ptr<ControlLayer> layer;

    explicit Stack(const fs::path& data_dir) : data(data_dir) { boot(); }

    void boot() {
        engine = std::make_unique<Engine>();
        agents = std::make_unique<AgentRegistry>(engine->sandbox.get());
        agents->add(agent_config_from_json(waiter_config(), data, {}));
        auto crash = waiter_config("crasher");
        crash["blueprint"] = {{"dir", fixture_agent_dir("crash").string()}, {"entry_file", "crash"}, {"runtime", "native"}};
        agents->add(agent_config_from_json(crash, data, {}));
        layer = std::make_unique<ControlLayer>(ControlOptions{data, true}, *agents, *engine->executor, engine->log.get());
    }
    void reboot() {
        layer.reset();
        boot();
    }
};

std::vector<std::string> types_of(const std::vector<SseEvent>& evs) {
    std::vector<std::string> out;
    for (const auto& e : evs) out.push_back(e.type);
    return out;
}

std::string last_status(const std::vector<SseEvent>& evs) {
    for (auto it = evs.rbegin(); it != evs.rend(); ++it) {
        if (it->type == "status") return it->data.value("status", "");
    }
    return "";
}

ControlCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const ControlError& e) {
        return e.code();
    }
    FAIL("expected a ControlError");
    return ControlCode::invalid;
}

}  // namespace

TEST_CASE("status graph") {
    std::set<std::pair<SessionStatus, SessionStatus>> allowed = {
        {SessionStatus::idle, SessionStatus::running},
        {SessionStatus::running, SessionStatus::awaiting_user},
        {SessionStatus::running, SessionStatus::finished},
        {SessionStatus::running, SessionStatus::failed},
        {SessionStatus::awaiting_user, SessionStatus::running},
    };
    for (auto a : kAll) {
        CHECK(session_status_from_string(to_string(a)) == a);
        for (auto b : kAll) CHECK(transition_allowed(a, b) == (allowed.count({a, b}) == 1));
    }
    CHECK(code_of([] { session_status_from_string("paused"); }) == ControlCode::invalid);
}

TEST_CASE("random walks over the status graph keep disk and memory in step") {
    TempDir dir("walk");
    SessionStore store(dir.path(), true);
    std::mt19937 rng(4242);
    for (int walk = 0; walk < 200; ++walk) {
        SessionState s;
        s.session_id = "S" + std::to_string(walk);
        s.user_id = "u";
        s.agent_id = "a";
        store.create(s);
        for (int step = 0; step < 12; ++step) {
            const auto to = kAll[rng() % 5];
            const auto from = s.status;
            const auto lines_before = read_file(store.path_of(s.session_id)).size();
            if (transition_allowed(from, to)) {
                store.set_status(s, to);
                CHECK(s.status == to);
            } else {
                CHECK(code_of([&] { store.set_status(s, to); }) == ControlCode::conflict);
                CHECK(s.status == from);
                CHECK(read_file(store.path_of(s.session_id)).size() == lines_before);
            }
        }
        const auto replayed = replay_session_file(store.path_of(s.session_id));
        CHECK(replayed.status == s.status);
    }
    CHECK(store.load_all().size() == 200);
}

TEST_CASE("session files are append-only JSONL and survive torn tails") {
    TempDir dir("store");
    SessionStore store(dir.path(), true);
    SessionState s;
    s.session_id = "S1";
    s.user_id = "u1";
    s.agent_id = "a1";
    store.create(s);
    store.append_entry(s, {0, "system", "sys", std::nullopt, nullptr, nullptr, 1});
    store.set_status(s, SessionStatus::running);
    store.append_entry(s, {0, "user", "hello", std::nullopt, nullptr, nullptr, 2});
    DialogueEntry tool{0, "tool", "{}", std::string("get_order"), {{"id", 1}}, {{"ok", true}}, 1};
    store.append_entry(s, tool);
    store.add_execution(s, "E1");
    CHECK(s.history.size() == 3);
    CHECK(s.history[2].turn_index == 2);
    CHECK(s.created_at == "1970-01-01T00:00:00.000Z");
    CHECK(code_of([&] { store.append_entry(s, {0, "system", "late", std::nullopt, nullptr, nullptr, 0}); }) ==
          ControlCode::invalid);

    const auto path = store.path_of("S1");
    const auto text = read_file(path);
    std::istringstream lines(text);
    std::vector<std::string> kinds;
    for (std::string line; std::getline(lines, line);) kinds.push_back(json::parse(line).value("type", ""));
    CHECK(kinds == std::vector<std::string>{"session", "entry", "status", "entry", "entry", "execution"});

    {
        std::ofstream out(path, std::ios::app);
        out << R"({"type":"entry","entry":{"turn_ind)";
    }
    const auto back = replay_session_file(path);
    CHECK(back.history == s.history);
    CHECK(back.exec_ids == std::vector<std::string>{"E1"});
    CHECK(back.status == SessionStatus::running);
    CHECK(dialogue_entry_from_json(to_json(tool)) == tool);
    CHECK(snapshot_entry(tool)["name"] == "get_order");
    CHECK(summary_json(back)["status"] == "running");
}

TEST_CASE("SSE formatting is exact") {
    const SseEvent e{"assistant.message", {{"content", "a\nb"}, {"seq", 3}}};
    CHECK(format_sse(e) == "event: assistant.message\ndata: {\"content\":\"a\\nb\",\"seq\":3}\n\n");
    std::vector<SseEvent> out;
    std::string why;
    CHECK(parse_strict_sse(format_sse(e) + format_sse({"done", {{"x", 1}}}), out, &why));
    REQUIRE(out.size() == 2);
    CHECK(out[0] == e);

    for (const std::string bad : {"event: x\ndata: {}\n", "event: x\r\ndata: {}\r\n\r\n", ": hi\nevent: x\ndata: {}\n\n",
                                  "event: x\ndata: {\ndata: }\n\n", "data: {}\n\n", "event: x\ndata: nope\n\n",
                                  "event:x\ndata: {}\n\n"}) {
        CAPTURE(bad);
        out.clear();
        CHECK_FALSE(parse_strict_sse(bad, out, &why));
        CHECK_FALSE(why.empty());
    }
}

TEST_CASE("general SSE parser") {
    const std::string stream =
        ": comment\r\nevent: a\r\ndata: {\"k\":1}\r\n\r\n"
        "data: line1\ndata:line2\n\n"
        "event: b\rdata: x\r\r"
        "event: empty\n\n"
        "id: 5\nretry: 10\nevent: c\ndata\n\n";
    // Every split point must give the same result.
    for (std::size_t cut = 0; cut <= stream.size(); ++cut) {
        SseParser p;
        auto evs = p.feed(std::string_view(stream).substr(0, cut));
        auto rest = p.feed(std::string_view(stream).substr(cut));
        evs.insert(evs.end(), rest.begin(), rest.end());
        REQUIRE(evs.size() == 4);
        CHECK(evs[0].type == "a");
        CHECK(evs[0].data == "{\"k\":1}");
        CHECK(evs[1].type == "message");
        CHECK(evs[1].data == "line1\nline2");
        CHECK(evs[2].type == "b");
        CHECK(evs[2].data == "x");
        CHECK(evs[3].type == "c");
        CHECK(evs[3].data == "");
        CHECK(p.idle());
    }
}

TEST_CASE("ops map onto stream events") {
    TelemetryEvent call{4, 9, "tool.call", {{"name", "get_order"}, {"args", {{"id", 1}}}, {"ok", true}}, 1.0};
    auto evs = relay_event("E", call, {{"name", "get_order"}, {"args", {{"id", 1}}}}, {{"ok", true}, {"value", 2}});
    REQUIRE(types_of(evs) == std::vector<std::string>{"tool.call", "tool.result"});
    for (const auto& e : evs) {
        CHECK(e.data["exec_id"] == "E");
        CHECK(e.data["seq"] == 4);
        CHECK(e.data["op"] == "tool.call");
    }
    CHECK(evs[0].data["args"]["id"] == 1);
    CHECK(evs[1].data["result"]["value"] == 2);
    CHECK(stream_ops(evs) == std::vector<std::pair<std::uint64_t, std::string>>{{4, "tool.call"}});

    TelemetryEvent send{1, 1, "user.send", {{"content", "hi"}}, 0};
    CHECK(relay_event("E", send, {{"content", "hi"}}, json::object())[0].type == "assistant.message");
    TelemetryEvent llm{2, 2, "llm.invoke", {{"model", "m"}, {"attempts", 1}}, 0};
    CHECK(relay_event("E", llm, json::object(), json::object())[0].type == "llm.usage");
    TelemetryEvent fin{3, 3, "finish", {{"status", "ok"}}, 0};
    CHECK(relay_event("E", fin, json::object(), json::object())[0].type == "done");
    for (const char* op : {"kb.query", "user.wait", "log", "weird.op"}) {
        TelemetryEvent ev{5, 5, op, json::object(), 0};
        CHECK(relay_event("E", ev, json::object(), json::object())[0].type == "status");
    }
}

TEST_CASE("control layer: multi-turn session, conflicts, history and resume") {
    TempDir dir("ctl");
    Stack st(dir.path());
    auto& L = *st.layer;

    CHECK(code_of([&] { L.create_session("u", "ghost", "x"); }) == ControlCode::not_found);
    CHECK(code_of([&] { L.create_session("u", "waiter", "wrong"); }) == ControlCode::unauthorized);
    CHECK(code_of([&] { L.create_session("mallory", "waiter", "tok-waiter"); }) == ControlCode::denied);
    CHECK(code_of([&] { L.create_session("", "waiter", "tok-waiter"); }) == ControlCode::invalid);

    const auto s = L.create_session("alice", "waiter", "tok-waiter");
    CHECK(s.status == SessionStatus::idle);
    REQUIRE(s.history.size() == 1);
    CHECK(s.history[0].role == "system");
    const auto ctx = L.assemble_context(s, "hi");
    REQUIRE(ctx.size() == 2);
    CHECK(ctx[1]["content"] == "hi");

    auto first = L.post_message(s.session_id, "tok-waiter", "hi");
    CHECK(code_of([&] { L.post_message(s.session_id, "tok-waiter", "again"); }) == ControlCode::conflict);
    auto ev1 = first->collect();
    CHECK(ev1.front().type == "status");
    CHECK(ev1.front().data["status"] == "running");
    CHECK(last_status(ev1) == "awaiting_user");
    bool saw_ready = false;
    for (const auto& e : ev1) saw_ready |= e.type == "assistant.message" && e.data["content"] == "ready";
    CHECK(saw_ready);
    CHECK(L.session(s.session_id).status == SessionStatus::awaiting_user);

    auto ev2 = L.post_message(s.session_id, "tok-waiter", "one")->collect();
    CHECK(last_status(ev2) == "awaiting_user");
    bool saw_echo = false;
    for (const auto& e : ev2) saw_echo |= e.type == "assistant.message" && e.data["content"] == "echo: one";
    CHECK(saw_echo);

    auto ev3 = L.post_message(s.session_id, "tok-waiter", "bye")->collect();
    REQUIRE_FALSE(ev3.empty());
    CHECK(ev3.back().type == "done");
    CHECK(ev3.back().data["exit"]["status"] == "ok");
    CHECK(last_status(ev3) == "finished");
    CHECK(code_of([&] { L.post_message(s.session_id, "tok-waiter", "more"); }) == ControlCode::conflict);

    const auto hist = L.fetch_history(s.session_id, "tok-waiter", std::nullopt);
    std::vector<std::string> roles;
    for (const auto& e : hist) roles.push_back(e.role + ":" + e.content);
    CHECK(roles == std::vector<std::string>{"system:You are a patient echo.", "user:hi", "assistant:ready", "user:one",
                                            "assistant:echo: one", "user:bye", "assistant:goodbye"});
    for (std::size_t i = 0; i < hist.size(); ++i) CHECK(hist[i].turn_index == static_cast<int>(i));
    CHECK(L.fetch_history(s.session_id, "tok-waiter", 2).size() == 3);
    CHECK(L.fetch_history(s.session_id, "tok-waiter", 0).size() == 1);
    CHECK(code_of([&] { L.fetch_history(s.session_id, "bad", std::nullopt); }) == ControlCode::unauthorized);
    CHECK(code_of([&] { L.fetch_history("nope", "tok-waiter", std::nullopt); }) == ControlCode::not_found);

    const auto state = L.session(s.session_id);
    REQUIRE(state.exec_ids.size() == 1);
    const auto line = L.telemetry_line(state.exec_ids[0], "tok-waiter");
    CHECK(json::parse(line)["exec_id"] == state.exec_ids[0]);
    CHECK(code_of([&] { L.telemetry_line(state.exec_ids[0], "tok-crasher"); }) == ControlCode::unauthorized);
    CHECK(code_of([&] { L.telemetry_line("nope", "tok-waiter"); }) == ControlCode::not_found);

    const auto status = L.status();
    CHECK(status["sessions"]["finished"] == 1);
    CHECK(status["streams_opened"] == 3);
}

TEST_CASE("control layer: failed executions and restarts") {
    TempDir dir("ctl2");
    std::string waiting_id, running_id;
    {
        Stack st(dir.path());
        const auto c = st.layer->create_session("bob", "crasher", "tok-crasher");
        auto evs = st.layer->post_message(c.session_id, "tok-crasher", "go")->collect();
        CHECK(last_status(evs) == "failed");
        bool saw_error = false;
        for (const auto& e : evs) saw_error |= e.type == "error";
        CHECK(saw_error);
        CHECK(evs.back().type == "done");
        CHECK(evs.back().data["exit"]["status"] == "error");
        CHECK(st.layer->session(c.session_id).status == SessionStatus::failed);

        const auto w = st.layer->create_session("bob", "waiter", "tok-waiter");
        st.layer->post_message(w.session_id, "tok-waiter", "hi")->collect();
        waiting_id = w.session_id;

        // Fake a process that died mid-run: a session left in running on disk.
        SessionState r;
        r.session_id = "ZZZ-running";
        r.user_id = "bob";
        r.agent_id = "waiter";
        SessionStore raw(dir.path(), true);
        raw.create(r);
        raw.set_status(r, SessionStatus::running);
        running_id = r.session_id;
    }
    Stack again(dir.path());
    CHECK(again.layer->session(running_id).status == SessionStatus::failed);
    CHECK(again.layer->session(waiting_id).status == SessionStatus::awaiting_user);
    // The waiting session resumes with a fresh execution that sees the whole history.
    auto evs = again.layer->post_message(waiting_id, "tok-waiter", "bye")->collect();
    CHECK(last_status(evs) == "awaiting_user");  // new run greets again, then waits
    CHECK(again.layer->session(waiting_id).exec_ids.size() == 2);
}

TEST_CASE("daemon config parsing") {
    const auto c = parse_daemon_config(R"(# agentd
data_dir = "var/data"
listen = 0.0.0.0:9000
registry = reg.json
deterministic = true
runtime.pypy = /usr/bin/pypy3
)",
                                       "/srv");
    CHECK(c.data_dir == "/srv/var/data");
    CHECK(c.listen_host == "0.0.0.0");
    CHECK(c.listen_port == 9000);
    CHECK(c.registry == "/srv/reg.json");
    CHECK(c.deterministic);
    CHECK(c.runtimes.at("pypy") == "/usr/bin/pypy3");
    try {
        parse_daemon_config("data_dir = x\nflavour = mint\n", "/");
        FAIL("expected error");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_daemon_config("listen = 1.2.3.4\n", "/"), ValidationError);
    CHECK_THROWS_AS(parse_daemon_config("deterministic = maybe\ndata_dir=x\n", "/"), ValidationError);
    CHECK_THROWS_AS(parse_daemon_config("# nothing\n", "/"), ValidationError);
}

TEST_CASE("HTTP gateway end to end with the retail demo agent") {
    TempDir dir("http");
    DaemonConfig cfg;
    cfg.data_dir = dir / "data";
    cfg.registry = source_dir() / "fixtures/agents/registry.json";
    cfg.blueprint_root = binary_dir() / "blueprints";
    cfg.deterministic = true;
    Daemon daemon(cfg);
    HttpGateway gw(daemon.control());
    const int port = gw.bind("127.0.0.1", 0);
    gw.start();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);
    GatewayClient client(base);

    const auto s = client.create_session("u1", "retail-demo", "retail-token");
    CHECK(s["status"] == "idle");
    const std::string sid = s["session_id"];

    std::string all_raw;
    std::vector<SseEvent> all;
    for (const std::string msg : {"Tell me about the Wireless Mouse", "Please cancel order #W1002", "yes",
                                  "That's all, thanks."}) {
        std::vector<SseEvent> live;
        const auto raw = client.post_message(sid, "retail-token", msg, [&](const SseEvent& e) { live.push_back(e); });
        std::vector<SseEvent> parsed;
        std::string why;
        CHECK_MESSAGE(parse_strict_sse(raw, parsed, &why), why);
        CHECK(parsed == live);
        all.insert(all.end(), parsed.begin(), parsed.end());
        all_raw += raw;
    }
    REQUIRE_FALSE(all.empty());
    CHECK(all.back().type == "done");
    CHECK(all.back().data["exit"]["status"] == "ok");

    // Stream order equals the telemetry record's op order.
    const auto hist = client.history(sid, "retail-token", std::nullopt);
    CHECK(hist["status"] == "finished");
    const auto exec_id = all.back().data["exec_id"].get<std::string>();
    const auto rec = json::parse(client.telemetry(exec_id, "retail-token"));
    std::vector<std::pair<std::uint64_t, std::string>> want;
    for (const auto& e : rec["events"]) want.emplace_back(e["seq"].get<std::uint64_t>(), e["op"].get<std::string>());
    CHECK(stream_ops(all) == want);

    CHECK(client.history(sid, "retail-token", 1)["entries"].size() == 2);
    CHECK(client.status()["sessions"]["finished"] == 1);

    // Error mapping.
    httplib::Client raw(base);
    auto r = raw.Post("/v1/sessions", {{"X-Agent-Token", "ops-token"}}, R"({"user_id":"u","agent_id":"retail-demo"})",
                      "application/json");
    REQUIRE(r);
    CHECK(r->status == 401);
    CHECK(json::parse(r->body)["error"]["code"] == "unauthorized");
    r = raw.Post("/v1/sessions", {{"X-Agent-Token", "retail-token"}}, R"({"user_id":"blocked-user","agent_id":"retail-demo"})",
                 "application/json");
    CHECK(r->status == 403);
    r = raw.Post("/v1/sessions", {{"X-Agent-Token", "retail-token"}}, R"({"user_id":"u","agent_id":"nobody"})",
                 "application/json");
    CHECK(r->status == 404);
    r = raw.Post("/v1/sessions", "not json", "application/json");
    CHECK(r->status == 400);
    r = raw.Post("/v1/sessions/" + sid + "/messages", {{"X-Agent-Token", "retail-token"}}, R"({"content":"again"})",
                 "application/json");
    CHECK(r->status == 409);
    r = raw.Get("/v1/sessions/" + sid + "/history?up_to=-1", {{"X-Agent-Token", "retail-token"}});
    CHECK(r->status == 400);
    r = raw.Get("/v1/executions/nope/telemetry", {{"X-Agent-Token", "retail-token"}});
    CHECK(r->status == 404);
    CHECK(code_of([&] { client.post_message(sid, "retail-token", "x", {}); }) == ControlCode::conflict);

    gw.stop();
    GatewayClient gone(base);
    try {
        gone.status();
        FAIL("expected transient error");
    } catch (const EngineError& e) {
        CHECK(e.cls() == ErrorClass::transient);
    }
}
