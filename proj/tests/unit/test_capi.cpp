// Exercises the shared library through its C header only.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "bprun/bprun.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Takes ownership of a library string.
std::string take(char* s) {
    std::string out = s ? s : "";
    bpr_string_free(s);
    return out;
}

json take_json(char* s) { return json::parse(take(s)); }

struct Tmp {
    fs::path p;
    explicit Tmp(const char* tag) {
        p = fs::temp_directory_path() / (std::string("bprun-capi-") + tag + "-" + std::to_string(::getpid()));
        fs::remove_all(p);
        fs::create_directories(p);
    }
    ~Tmp() { fs::remove_all(p); }
};

std::string daemon_text(const fs::path& data) {
    return "data_dir = \"" + data.string() + "\"\n" + "registry = \"" BPRUN_SOURCE_DIR "/fixtures/agents/registry.json\"\n" +
           "blueprint_root = \"" BPRUN_BINARY_DIR "/blueprints\"\n" + "deterministic = true\n";
}

int collect(const char* type, const char* data, void* user) {
    static_cast<std::vector<std::pair<std::string, json>>*>(user)->emplace_back(type, json::parse(data));
    return 0;
}

}  // namespace

TEST_CASE("status names and errors") {
    CHECK(std::string(bpr_version()).size() > 0);
    CHECK(std::string(bpr_status_name(BPR_OK)) == "ok");
    CHECK(std::string(bpr_status_name(BPR_ERR_CONFLICT)) == "conflict");
    bpr_daemon* d = nullptr;
    CHECK(bpr_daemon_open("/nonexistent/agentd.toml", &d) != BPR_OK);
    CHECK(d == nullptr);
    CHECK(std::strlen(bpr_last_error()) > 0);
    CHECK(bpr_daemon_open_text("flavour = mint\n", nullptr, &d) == BPR_ERR_INVALID);
    CHECK(std::string(bpr_last_error()).find("line 1") != std::string::npos);
    bpr_string_free(nullptr);
    bpr_daemon_close(nullptr);
}

TEST_CASE("daemon in process: sessions, history, telemetry, status") {
    Tmp tmp("daemon");
    bpr_daemon* d = nullptr;
    REQUIRE(bpr_daemon_open_text(daemon_text(tmp.p / "data").c_str(), nullptr, &d) == BPR_OK);

    char* out = nullptr;
    CHECK(bpr_session_create(d, "u1", "retail-demo", "wrong", &out) == BPR_ERR_UNAUTHORIZED);
    CHECK(bpr_session_create(d, "blocked-user", "retail-demo", "retail-token", &out) == BPR_ERR_DENIED);
    CHECK(bpr_session_create(d, "u1", "nobody", "retail-token", &out) == BPR_ERR_NOT_FOUND);
    REQUIRE(bpr_session_create(d, "u1", "retail-demo", "retail-token", &out) == BPR_OK);
    const auto session = take_json(out);
    const std::string sid = session["session_id"];

    std::vector<std::pair<std::string, json>> events;
    for (const char* msg : {"Tell me about the Wireless Mouse", "Please cancel order #W1002", "yes", "That's all, thanks."}) {
        REQUIRE(bpr_session_post(d, sid.c_str(), "retail-token", msg, collect, &events) == BPR_OK);
    }
    REQUIRE_FALSE(events.empty());
    CHECK(events.back().first == "done");
    CHECK(bpr_session_post(d, sid.c_str(), "retail-token", "again", nullptr, nullptr) == BPR_ERR_CONFLICT);

    REQUIRE(bpr_session_history(d, sid.c_str(), "retail-token", 1, &out) == BPR_OK);
    CHECK(take_json(out).size() == 2);
    REQUIRE(bpr_session_history(d, sid.c_str(), "retail-token", -1, &out) == BPR_OK);
    CHECK(take_json(out).size() > 4);

    const std::string exec_id = events.back().second["exec_id"];
    REQUIRE(bpr_execution_telemetry(d, exec_id.c_str(), "retail-token", &out) == BPR_OK);
    CHECK(take_json(out)["exec_id"] == exec_id);
    CHECK(bpr_execution_telemetry(d, exec_id.c_str(), "ops-token", &out) == BPR_ERR_UNAUTHORIZED);

    REQUIRE(bpr_daemon_status(d, &out) == BPR_OK);
    CHECK(take_json(out)["sessions"]["finished"] == 1);

    // Same daemon over HTTP.
    int port = 0;
    REQUIRE(bpr_daemon_listen(d, "127.0.0.1", 0, &port) == BPR_OK);
    CHECK(port > 0);
    bpr_client* c = nullptr;
    REQUIRE(bpr_client_open(("http://127.0.0.1:" + std::to_string(port)).c_str(), &c) == BPR_OK);
    REQUIRE(bpr_client_create_session(c, "u2", "retail-demo", "retail-token", &out) == BPR_OK);
    const std::string sid2 = take_json(out)["session_id"];
    std::vector<std::pair<std::string, json>> ev2;
    char* raw = nullptr;
    REQUIRE(bpr_client_post(c, sid2.c_str(), "retail-token", "Tell me about the Wireless Mouse", collect, &ev2, &raw) ==
            BPR_OK);
    const auto raw_s = take(raw);
    CHECK(raw_s.rfind("event: status\ndata: ", 0) == 0);
    CHECK_FALSE(ev2.empty());
    REQUIRE(bpr_client_history(c, sid2.c_str(), "retail-token", -1, &out) == BPR_OK);
    CHECK(take_json(out)["session_id"] == sid2);
    REQUIRE(bpr_client_status(c, &out) == BPR_OK);
    CHECK(take_json(out).contains("agents"));
    CHECK(bpr_client_telemetry(c, "missing", "retail-token", &out) == BPR_ERR_NOT_FOUND);
    CHECK(bpr_client_post(c, "missing", "retail-token", "x", nullptr, nullptr, nullptr) == BPR_ERR_NOT_FOUND);
    bpr_client_close(c);
    CHECK(bpr_daemon_stop(d) == BPR_OK);

    bpr_client* dead = nullptr;
    REQUIRE(bpr_client_open(("http://127.0.0.1:" + std::to_string(port)).c_str(), &dead) == BPR_OK);
    CHECK(bpr_client_status(dead, &out) == BPR_ERR_TRANSIENT);
    bpr_client_close(dead);
    bpr_daemon_close(d);
}

TEST_CASE("agent configs and registry files") {
    Tmp tmp("reg");
    char* out = nullptr;
    const std::string retail = BPRUN_SOURCE_DIR "/fixtures/agents/retail/agent.json";
    const std::string ops = BPRUN_SOURCE_DIR "/fixtures/agents/ops/agent.json";
    REQUIRE(bpr_agent_validate(retail.c_str(), BPRUN_BINARY_DIR "/blueprints", &out) == BPR_OK);
    const auto summary = take_json(out);
    CHECK(summary["agent_id"] == "retail-demo");
    CHECK(summary["runtime"] == "native");
    CHECK_FALSE(summary["tools"].empty());

    {
        std::ofstream bad(tmp.p / "bad.json");
        bad << R"({"agent_id":"x","agent_token":"t","system_prompt":"s",
                   "blueprint":{"dir":"/nonexistent","entry_file":"main.py","runtime":"python3"},"model":{"provider":"loopback"}})";
    }
    CHECK(bpr_agent_validate((tmp.p / "bad.json").c_str(), nullptr, &out) == BPR_ERR_INVALID);

    const auto reg = (tmp.p / "registry.json").string();
    CHECK(bpr_registry_add(reg.c_str(), retail.c_str(), BPRUN_BINARY_DIR "/blueprints") == BPR_OK);
    CHECK(bpr_registry_add(reg.c_str(), ops.c_str(), BPRUN_BINARY_DIR "/blueprints") == BPR_OK);
    CHECK(bpr_registry_add(reg.c_str(), retail.c_str(), BPRUN_BINARY_DIR "/blueprints") == BPR_ERR_CONFLICT);
    std::ifstream in(reg);
    CHECK(json::parse(in)["agents"].size() == 2);
}

TEST_CASE("bench harness: run, ablate, replay") {
    Tmp tmp("bench");
    bpr_bench* b = nullptr;
    CHECK(bpr_bench_open("{}", &b) == BPR_ERR_INVALID);
    CHECK(bpr_bench_open("not json", &b) == BPR_ERR_INVALID);
    const json opts{{"fixture_root", BPRUN_SOURCE_DIR "/fixtures/bench"},
                    {"blueprint_root", BPRUN_BINARY_DIR "/blueprints"},
                    {"work_dir", (tmp.p / "work").string()}};
    REQUIRE(bpr_bench_open(opts.dump().c_str(), &b) == BPR_OK);

    char* out = nullptr;
    CHECK(bpr_bench_run(b, R"({"variant":"telepathy"})", &out) == BPR_ERR_INVALID);
    CHECK(bpr_bench_run(b, R"({"trials":0})", &out) == BPR_ERR_INVALID);
    const json req{{"domain", "retail"}, {"trials", 2}, {"out", (tmp.p / "out").string()}};
    REQUIRE(bpr_bench_run(b, req.dump().c_str(), &out) == BPR_OK);
    const auto run = take_json(out);
    CHECK(run["label"] == "blueprint");
    CHECK(run["total"] == 24);
    CHECK(run["passed"] == 22);
    CHECK(run["trial_consistency"]["identical"] == true);
    CHECK(run["failures"].size() == 2);
    CHECK(fs::exists(tmp.p / "out/report.json"));

    REQUIRE(bpr_bench_ablate(b, R"({"grid":"dc","domain":"airline"})", &out) == BPR_OK);
    const auto abl = take_json(out);
    REQUIRE(abl["ablation"].size() == 2);
    CHECK(abl["ablation"][0]["sca"] == true);
    CHECK(abl["ablation"][0]["average"] == 62.5);
    CHECK(abl["ablation"][1]["average"] == 87.5);
    CHECK(bpr_bench_ablate(b, R"({"grid":"sca,warp"})", &out) == BPR_ERR_INVALID);

    // Replay a successful execution from the telemetry log.
    std::ifstream results(tmp.p / "out/results.jsonl");
    std::string exec_id, task_id;
    for (std::string line; std::getline(results, line);) {
        const auto r = json::parse(line);
        if (r["variant"] == "blueprint" && r["success"] == true) {
            exec_id = r["exec_id"];
            task_id = r["task_id"];
            break;
        }
    }
    REQUIRE_FALSE(exec_id.empty());
    const auto log = (tmp.p / "work/telemetry.log").string();
    REQUIRE(bpr_telemetry_find(log.c_str(), exec_id.c_str(), &out) == BPR_OK);
    const auto record = take(out);
    REQUIRE(bpr_bench_replay(b, record.c_str(), task_id.c_str(), &out) == BPR_OK);
    const auto rep = take_json(out);
    CHECK(rep["matches"] == true);
    CHECK(rep["domain"] == "retail");
    CHECK(rep["state_hash"] == rep["expected_state_hash"]);
    CHECK(bpr_telemetry_find(log.c_str(), "nope", &out) == BPR_ERR_NOT_FOUND);
    CHECK(bpr_bench_replay(b, R"({"v":1,"exec_id":"x","agent_id":"stranger","events":[]})", nullptr, &out) ==
          BPR_ERR_NOT_FOUND);
    bpr_bench_close(b);
}
