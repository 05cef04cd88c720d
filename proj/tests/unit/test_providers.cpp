#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <httplib.h>

#include <random>
#include <thread>

#include "executor/retry.hpp"
#include "oracles.hpp"
#include "providers/knowledge_base.hpp"
#include "providers/llm.hpp"
#include "providers/schema.hpp"
#include "providers/tool_registry.hpp"
#include "support.hpp"

using namespace bprun;
using namespace bprun::test;

namespace {

const json kOrderSchema = json::parse(R"({
  "type":"object",
  "properties":{
    "order_id":{"type":"string"},
    "qty":{"type":"integer","minimum":1,"maximum":9},
    "mode":{"type":"string","enum":["fast","slow"]},
    "items":{"type":"array","minItems":1,"items":{"type":"object","properties":{"item_id":{"type":"string"}},"required":["item_id"]}}
  },
  "required":["order_id"],
  "additionalProperties":false
})");

// Tiny HTTP server on an ephemeral port, stopped on scope exit.
struct LocalServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
    ~LocalServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
};

LlmRequest user_request(const std::string& text) {
    LlmRequest r;
    r.model = "m";
    r.messages = {{"system", "be brief"}, {"user", text}};
    return r;
}

}  // namespace

TEST_CASE("schema validation reports every violation with a path") {
    CHECK(validate_schema(kOrderSchema, {{"order_id", "#1"}, {"qty", 3}}).empty());
    const auto v = validate_schema(kOrderSchema, {{"qty", 0}, {"mode", "warp"}, {"items", json::array({json::object()})},
                                                  {"bogus", true}});
    std::set<std::string> paths;
    for (const auto& x : v) paths.insert(x.path);
    CHECK(paths.count("order_id"));
    CHECK(paths.count("qty"));
    CHECK(paths.count("mode"));
    CHECK(paths.count("items[0].item_id"));
    CHECK(paths.count("bogus"));
    CHECK_FALSE(validate_schema(kOrderSchema, json::array()).empty());
    CHECK_FALSE(validate_schema(kOrderSchema, {{"order_id", "x"}, {"qty", 2.5}}).empty());
    CHECK_FALSE(validate_schema(kOrderSchema, {{"order_id", "x"}, {"items", json::array()}}).empty());
    CHECK_FALSE(describe(v).empty());
}

TEST_CASE("tool registry validates before dispatch") {
    ToolRegistry reg;
    int calls = 0;
    reg.register_builtin({"get_order", "look up", kOrderSchema}, [&](const json& args) {
        ++calls;
        if (args["order_id"] == "#missing") throw ToolFailure("order not found");
        return json{{"id", args["order_id"]}};
    });
    CHECK_THROWS_AS(reg.register_builtin({"get_order", "", json::object()}, [](const json&) { return json(); }),
                    ValidationError);
    CHECK_THROWS_AS(reg.register_builtin({"Bad Name", "", json::object()}, [](const json&) { return json(); }),
                    ValidationError);

    CHECK(reg.dispatch("get_order", {{"order_id", "#1"}}) == json{{"ok", true}, {"value", {{"id", "#1"}}}});
    CHECK(reg.dispatch("get_order", {{"order_id", "#missing"}}) ==
          json{{"ok", false}, {"error", "order not found"}});
    try {
        reg.dispatch("get_order", {{"qty", 1}});
        FAIL("expected a validation error");
    } catch (const EngineError& e) {
        CHECK(e.cls() == ErrorClass::validation);
    }
    CHECK(calls == 2);
    CHECK_THROWS_AS(reg.dispatch("nope", json::object()), ValidationError);
    CHECK(reg.specs().size() == 1);
    CHECK(reg.binding("get_order").kind == ToolBinding::Kind::builtin);
}

TEST_CASE("remote tools go over HTTP and classify failures") {
    LocalServer srv;
    srv.server.Post("/tool", [](const httplib::Request& req, httplib::Response& res) {
        auto body = json::parse(req.body);
        res.set_content(json{{"ok", true}, {"value", {{"got", body["args"]}, {"name", body["name"]}}}}.dump(),
                        "application/json");
    });
    srv.server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    srv.server.Post("/garbage", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("<html>", "text/html");
    });
    srv.server.Post("/slow", [](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(std::chrono::milliseconds(600));
        res.set_content(R"({"ok":true,"value":1})", "application/json");
    });
    srv.start();

    ToolRegistry reg;
    const json any{{"type", "object"}};
    reg.register_remote({"remote_echo", "", any}, srv.url() + "/tool");
    reg.register_remote({"remote_broken", "", any}, srv.url() + "/broken");
    reg.register_remote({"remote_garbage", "", any}, srv.url() + "/garbage");
    reg.register_remote({"remote_slow", "", any}, srv.url() + "/slow", 150);

    const auto r = reg.dispatch("remote_echo", {{"x", 1}});
    CHECK(r["value"]["got"]["x"] == 1);
    CHECK(r["value"]["name"] == "remote_echo");
    auto cls_of = [&](const std::string& name) {
        try {
            reg.dispatch(name, json::object());
        } catch (const EngineError& e) {
            return e.cls();
        }
        return ErrorClass::protocol;  // sentinel: no throw
    };
    CHECK(cls_of("remote_broken") == ErrorClass::transient);
    CHECK(cls_of("remote_garbage") == ErrorClass::fatal);
    CHECK(cls_of("remote_slow") == ErrorClass::transient);
}

TEST_CASE("knowledge base ranking equals a dense brute-force computation") {
    std::mt19937 rng(99);
    const std::vector<std::string> lexicon = {"refund", "baggage", "fee", "cancel", "order", "policy", "window",
                                              "days",   "gold",    "silver", "upgrade", "seat", "Zürich", "mouse"};
    for (int round = 0; round < 60; ++round) {
        const int n_docs = 1 + static_cast<int>(rng() % 20);
        std::vector<KbDocument> docs;
        std::vector<std::pair<std::string, std::string>> plain;
        for (int d = 0; d < n_docs; ++d) {
            std::string body;
            const int len = 1 + static_cast<int>(rng() % 25);
            for (int w = 0; w < len; ++w) body += lexicon[rng() % lexicon.size()] + (w % 4 == 3 ? ". " : " ");
            char id[8];
            std::snprintf(id, sizeof id, "d%02d", d);
            docs.push_back({id, id, body});
            plain.emplace_back(id, body);
        }
        std::string query;
        for (int w = 0, q = 1 + static_cast<int>(rng() % 4); w < q; ++w) query += lexicon[rng() % lexicon.size()] + " ";
        if (round % 10 == 0) query += "unseen";

        KnowledgeBase kb("k", docs);
        const auto got = kb.query(query, 100);
        const auto want = oracle::tfidf_rank(plain, query);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].score == doctest::Approx(want[i].score).epsilon(1e-9));
            if (got[i].doc_id != want[i].id) CHECK(std::fabs(got[i].score - want[i].score) < 1e-9);
        }
        const auto top3 = kb.query(query, 3);
        CHECK(top3.size() == std::min<std::size_t>(3, want.size()));
    }
}

TEST_CASE("knowledge base edge cases") {
    KnowledgeBase kb("faq", {{"a", "A", "Refund window is 30 days"}, {"b", "B", "Baggage fee policy"}});
    CHECK(kb.query("", 5).empty());
    CHECK(kb.query("spaceship", 5).empty());
    CHECK_THROWS_AS(kb.query("refund", 0), ValidationError);
    const auto hits = kb.query("REFUND days", 5);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].doc_id == "a");
    CHECK(hits[0].excerpt == "Refund window is 30 days");
    CHECK(kb_tokenize("Hello, WORLD-42 ünï") == std::vector<std::string>{"hello", "world", "42", "ünï"});

    KbStore store;
    store.add(std::make_shared<KnowledgeBase>(kb));
    CHECK(store.contains("faq"));
    CHECK_THROWS_AS(store.get("nope"), EngineError);

    TempDir dir("kb");
    write_file(dir / "b.md", "# Baggage\n\nTwo bags free.\n");
    write_file(dir / "a.txt", "\n  Refunds\nWithin 30 days.\n");
    write_file(dir / "skip.json", "{}");
    auto ingested = KnowledgeBase::ingest_directory("d", dir.path().string());
    REQUIRE(ingested.documents().size() == 2);
    CHECK(ingested.documents()[0].doc_id == "a");
    CHECK(ingested.documents()[0].title == "Refunds");
    CHECK(ingested.documents()[1].title == "Baggage");
}

TEST_CASE("mock provider replays steps, injects failures and refuses misalignment") {
    auto script = MockScript::from_json(json::parse(R"({"steps":[
      {"match":{"last_user_contains":"hello"},"fail_first":2,"response":{"message":{"role":"assistant","content":"hi"}}},
      {"only_if":{"dc_enabled":true},"response":{"message":{"role":"assistant","content":"confirm?"}}},
      {"response":{"message":{"role":"assistant","content":""},"tool_calls":[{"name":"echo","arguments":{"text":"x"}}],"finish_reason":"tool_call"}}
    ]})"));
    CHECK(script.steps.size() == 3);
    CHECK(script.specialize({{"dc_enabled", false}}).steps.size() == 2);
    CHECK(script.specialize(json::object()).steps.size() == 3);

    MockProvider p(script);
    for (int i = 0; i < 2; ++i) {
        try {
            p.invoke(user_request("hello there"));
            FAIL("expected injected failure");
        } catch (const EngineError& e) {
            CHECK(e.cls() == ErrorClass::transient);
        }
    }
    const auto r = p.invoke(user_request("hello there"));
    CHECK(r.message.content == "hi");
    CHECK(r.usage.prompt_tokens == token_estimate("be briefhello there"));
    CHECK(p.failures_injected() == 2);
    CHECK(p.invoke(user_request("anything")).message.content == "confirm?");
    CHECK(p.invoke(user_request("x")).tool_calls.at(0).name == "echo");
    try {
        p.invoke(user_request("x"));
        FAIL("expected exhaustion");
    } catch (const EngineError& e) {
        CHECK(e.cls() == ErrorClass::fatal);
        CHECK(std::string(e.what()).find("exhausted") != std::string::npos);
    }

    MockProvider strict(script);
    CHECK_THROWS_AS(strict.invoke(user_request("goodbye")), EngineError);
    CHECK_THROWS_AS(MockScript::from_json(json::parse(R"({"steps":[{"fail_first":1}]})")), ValidationError);
    CHECK_THROWS_AS(MockScript::from_json(json::parse(R"({"nope":1})")), ValidationError);
}

TEST_CASE("token estimate rounds up bytes over four") {
    CHECK(token_estimate("") == 0);
    CHECK(token_estimate("abcd") == 1);
    CHECK(token_estimate("abcde") == 2);
    CHECK(token_estimate("ü") == 1);
    LoopbackProvider lp;
    CHECK(lp.invoke(user_request("ping")).message.content == "ping");
}

TEST_CASE("retry attempts follow the policy") {
    RetryPolicy policy;
    policy.zero_delay = true;
    auto run = [&](int max_retries, ErrorClass cls, int failures) {
        policy.max_retries = max_retries;
        int attempts = 0;
        std::vector<int> failed;
        try {
            with_retry(
                [&] {
                    ++attempts;
                    if (attempts <= failures) throw EngineError(cls, "x");
                    return attempts;
                },
                policy, [&](int a, const ErrorInfo&) { failed.push_back(a); });
        } catch (const EngineError&) {
        }
        return std::make_pair(attempts, failed);
    };
    CHECK(run(2, ErrorClass::transient, 2).first == 3);
    CHECK(run(1, ErrorClass::transient, 2).first == 2);
    CHECK(run(0, ErrorClass::transient, 5).first == 1);
    CHECK(run(5, ErrorClass::fatal, 5).first == 1);
    CHECK(run(5, ErrorClass::validation, 5).first == 1);
    CHECK(run(5, ErrorClass::quota, 5).first == 1);
    CHECK(run(2, ErrorClass::transient, 2).second == std::vector<int>{1, 2});
    policy.max_retries = -1;
    CHECK_THROWS_AS(with_retry([] { return 0; }, policy, [](int, const ErrorInfo&) {}), ValidationError);

    RetryPolicy timed;
    std::vector<long long> slept;
    timed.max_retries = 3;
    try {
        with_retry([]() -> int { throw EngineError(ErrorClass::transient, "t"); }, timed,
                   [](int, const ErrorInfo&) {}, [&](std::chrono::milliseconds d) { slept.push_back(d.count()); });
    } catch (const EngineError&) {
    }
    CHECK(slept == std::vector<long long>{200, 400, 800});
}

TEST_CASE("HTTP chat provider speaks the chat-completions shape") {
    LocalServer srv;
    std::atomic<int> hits{0};
    json seen;
    std::mutex mu;
    srv.server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        {
            std::lock_guard lock(mu);
            seen = json::parse(req.body);
            seen["auth"] = req.get_header_value("Authorization");
        }
        res.set_content(R"({"choices":[{"message":{"role":"assistant","content":null,
            "tool_calls":[{"type":"function","function":{"name":"echo","arguments":"{\"text\":\"hi\"}"}}]},
            "finish_reason":"tool_calls"}],"usage":{"prompt_tokens":11,"completion_tokens":3}})",
                        "application/json");
    });
    srv.server.Post("/limited", [](const httplib::Request&, httplib::Response& res) { res.status = 429; });
    srv.server.Post("/bad", [](const httplib::Request&, httplib::Response& res) { res.status = 400; });
    srv.server.Post("/down", [](const httplib::Request&, httplib::Response& res) { res.status = 502; });
    srv.start();

    ::setenv("BPRUN_TEST_KEY", "sekret", 1);
    auto p = make_provider({{"provider", "http"}, {"base_url", srv.url()}, {"model", "tiny"}, {"api_key_env", "BPRUN_TEST_KEY"}},
                           json::object(), ".");
    LlmRequest req = user_request("hi");
    req.model.clear();
    req.tools = {{"echo", "echo", {{"type", "object"}}}};
    const auto r = p->invoke(req);
    CHECK(r.finish_reason == FinishReason::tool_call);
    REQUIRE(r.tool_calls.size() == 1);
    CHECK(r.tool_calls[0].arguments == json{{"text", "hi"}});
    CHECK(r.usage.prompt_tokens == 11);
    CHECK(r.usage.completion_tokens == 3);
    CHECK(seen["model"] == "tiny");
    CHECK(seen["auth"] == "Bearer sekret");
    CHECK(seen["tools"][0]["function"]["name"] == "echo");

    auto cls_for = [&](const std::string& path, const std::string& base) {
        HttpChatProvider::Options o;
        o.base_url = base;
        o.path = path;
        o.timeout_ms = 500;
        HttpChatProvider hp(o);
        try {
            hp.invoke(user_request("x"));
        } catch (const EngineError& e) {
            return e.cls();
        }
        return ErrorClass::protocol;
    };
    CHECK(cls_for("/limited", srv.url()) == ErrorClass::transient);
    CHECK(cls_for("/down", srv.url()) == ErrorClass::transient);
    CHECK(cls_for("/bad", srv.url()) == ErrorClass::validation);
    CHECK(cls_for("/x", "http://127.0.0.1:1") == ErrorClass::transient);
}

TEST_CASE("provider factory") {
    TempDir dir("prov");
    write_file(dir / "s.mockscript",
               R"({"steps":[{"only_if":{"rt":false},"response":{"message":{"role":"assistant","content":"a"}}},
                            {"response":{"message":{"role":"assistant","content":"b"}}}]})");
    auto p = make_provider({{"provider", "mock"}, {"script", "s.mockscript"}}, {{"rt", true}}, dir.path().string());
    CHECK(p->name() == "mock");
    CHECK(p->invoke(user_request("x")).message.content == "b");
    CHECK(make_provider({{"provider", "loopback"}}, {}, ".")->name() == "loopback");
    CHECK_THROWS_AS(make_provider({{"provider", "mock"}}, {}, "."), ValidationError);
    CHECK_THROWS_AS(make_provider({{"provider", "http"}}, {}, "."), ValidationError);
    CHECK_THROWS_AS(make_provider({{"provider", "carrier-pigeon"}}, {}, "."), ValidationError);
}
