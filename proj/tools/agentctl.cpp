// agentctl: registration, line-mode chat, benchmark runs and replay.
// Exit codes: 0 success, 1 trial failures (or a failed run / hash mismatch),
// 2 harness or usage error.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "bprun/bprun.h"

#ifndef BPRUN_FIXTURE_DIR
#define BPRUN_FIXTURE_DIR "fixtures/bench"
#endif
#ifndef BPRUN_BLUEPRINT_DIR
#define BPRUN_BLUEPRINT_DIR "blueprints"
#endif

using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kFailures = 1;
constexpr int kHarness = 2;

std::string env_or(const char* name, const char* fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

int report_error(const char* what) {
    std::fprintf(stderr, "agentctl: %s: %s\n", what, bpr_last_error());
    return kHarness;
}

// Takes ownership of a bprun string.
std::string take(char* s) {
    std::string out = s ? s : "";
    bpr_string_free(s);
    return out;
}

json parse_toggles(const std::string& text) {
    json t = json::object();
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        if (item.empty()) continue;
        const auto eq = item.find('=');
        const std::string key = item.substr(0, eq);
        const std::string val = eq == std::string::npos ? "on" : item.substr(eq + 1);
        if (val != "on" && val != "off") throw CLI::ValidationError("--toggles", "values are on|off");
        if (key == "dc") t["dc_enabled"] = val == "on";
        else if (key == "rt") t["consolidated_tools"] = val == "on";
        else throw CLI::ValidationError("--toggles", "unknown toggle '" + key + "' (dc, rt)");
    }
    return t;
}

struct BenchPaths {
    std::string fixtures = env_or("BPRUN_FIXTURES", BPRUN_FIXTURE_DIR);
    std::string blueprints = env_or("BPRUN_BLUEPRINTS", BPRUN_BLUEPRINT_DIR);
};

bpr_bench* open_bench(const BenchPaths& p, const std::string& work_dir) {
    const bool deterministic = env_or("AGENT_DETERMINISTIC", "0") == "1";
    const json opts{{"fixture_root", p.fixtures},
                    {"blueprint_root", p.blueprints},
                    {"work_dir", work_dir},
                    {"deterministic", deterministic}};
    bpr_bench* b = nullptr;
    if (bpr_bench_open(opts.dump().c_str(), &b) != BPR_OK) return nullptr;
    return b;
}

int cmd_register(const std::string& config, const std::string& registry, const std::string& blueprints) {
    char* summary = nullptr;
    if (bpr_agent_validate(config.c_str(), blueprints.c_str(), &summary) != BPR_OK) return report_error("register");
    const json s = json::parse(take(summary));
    if (bpr_registry_add(registry.c_str(), config.c_str(), blueprints.c_str()) != BPR_OK) return report_error("register");
    std::printf("registered %s (runtime %s, %zu tools) in %s\n", s["agent_id"].get<std::string>().c_str(),
                s["runtime"].get<std::string>().c_str(), s["tools"].size(), registry.c_str());
    return kOk;
}

struct ChatState {
    bool verbose = false;
    std::string last_status;
};

int print_event(const char* type, const char* data, void* user) {
    auto& st = *static_cast<ChatState*>(user);
    const json d = json::parse(data, nullptr, false);
    const std::string t = type;
    if (t == "assistant.message") {
        std::printf("agent> %s\n", d.value("content", "").c_str());
    } else if (t == "status" && d.contains("session_id")) {
        st.last_status = d.value("status", "");
        if (st.verbose) std::printf("  [status %s]\n", st.last_status.c_str());
    } else if (t == "error") {
        std::printf("  [error %s]\n", d.dump().c_str());
    } else if (st.verbose) {
        std::printf("  [%s %s]\n", type, data);
    }
    std::fflush(stdout);
    return 0;
}

int cmd_chat(const std::string& agent_id, const std::string& server, const std::string& token,
             const std::string& user_id, bool verbose) {
    bpr_client* c = nullptr;
    if (bpr_client_open(server.c_str(), &c) != BPR_OK) return report_error("chat");
    char* session = nullptr;
    if (bpr_client_create_session(c, user_id.c_str(), agent_id.c_str(), token.c_str(), &session) != BPR_OK) {
        const int rc = report_error("chat");
        bpr_client_close(c);
        return rc;
    }
    const json s = json::parse(take(session));
    const std::string sid = s["session_id"];
    std::printf("session %s with %s (type a message; EOF quits)\n", sid.c_str(), agent_id.c_str());
    ChatState st{verbose, "idle"};
    int rc = kOk;
    for (std::string line; std::printf("you> "), std::fflush(stdout), std::getline(std::cin, line);) {
        if (line.empty()) continue;
        if (bpr_client_post(c, sid.c_str(), token.c_str(), line.c_str(), print_event, &st, nullptr) != BPR_OK) {
            rc = report_error("chat");
            break;
        }
        if (st.last_status == "finished" || st.last_status == "failed") {
            std::printf("session %s\n", st.last_status.c_str());
            rc = st.last_status == "finished" ? kOk : kFailures;
            break;
        }
    }
    bpr_client_close(c);
    return rc;
}

int cmd_bench_run(const BenchPaths& paths, const std::string& domain, const std::string& variant, int trials,
                  int concurrency, const std::string& out, const std::string& toggles, bool baseline, bool quiet) {
    std::filesystem::create_directories(out);
    bpr_bench* b = open_bench(paths, out);
    if (!b) return report_error("bench run");
    json req{{"domain", domain},           {"variant", variant}, {"trials", trials},
             {"concurrency", concurrency}, {"out", out},         {"baseline", baseline}};
    try {
        req["toggles"] = parse_toggles(toggles);
    } catch (const CLI::Error& e) {
        bpr_bench_close(b);
        std::fprintf(stderr, "agentctl: %s\n", e.what());
        return kHarness;
    }
    char* summary = nullptr;
    const auto st = bpr_bench_run(b, req.dump().c_str(), &summary);
    bpr_bench_close(b);
    if (st != BPR_OK) return report_error("bench run");
    const json s = json::parse(take(summary));
    if (!quiet) std::printf("%s\n", s["report_text"].get<std::string>().c_str());
    const auto& tc = s["trial_consistency"];
    std::printf("%s: %d/%d trials passed; trials identical: %s; pass^1 variance %.6g; report in %s\n",
                s["label"].get<std::string>().c_str(), s["passed"].get<int>(), s["total"].get<int>(),
                tc["identical"].get<bool>() ? "yes" : "no", tc["pass1_variance"].get<double>(), out.c_str());
    for (const auto& f : s["failures"]) {
        std::printf("  FAIL %s#%d: %s\n", f["task_id"].get<std::string>().c_str(), f["trial"].get<int>(),
                    f["diagnostic"].get<std::string>().c_str());
    }
    return s["failures"].empty() ? kOk : kFailures;
}

int cmd_bench_ablate(const BenchPaths& paths, const std::string& domain, const std::string& grid, int trials,
                     int concurrency, const std::string& out) {
    std::filesystem::create_directories(out);
    bpr_bench* b = open_bench(paths, out);
    if (!b) return report_error("bench ablate");
    const json req{{"domain", domain}, {"grid", grid}, {"trials", trials}, {"concurrency", concurrency}, {"out", out}};
    char* summary = nullptr;
    const auto st = bpr_bench_ablate(b, req.dump().c_str(), &summary);
    bpr_bench_close(b);
    if (st != BPR_OK) return report_error("bench ablate");
    const json s = json::parse(take(summary));
    std::printf("%s\nreport in %s\n", s["report_text"].get<std::string>().c_str(), out.c_str());
    // Ablation rows are expected to fail some tasks; only harness errors count.
    return kOk;
}

int cmd_replay(const BenchPaths& paths, const std::string& exec_id, const std::string& log, const std::string& server,
               const std::string& token, const std::string& task) {
    std::string record;
    char* line = nullptr;
    if (!server.empty()) {
        bpr_client* c = nullptr;
        if (bpr_client_open(server.c_str(), &c) != BPR_OK) return report_error("replay");
        const auto st = bpr_client_telemetry(c, exec_id.c_str(), token.c_str(), &line);
        bpr_client_close(c);
        if (st != BPR_OK) return report_error("replay");
    } else if (bpr_telemetry_find(log.c_str(), exec_id.c_str(), &line) != BPR_OK) {
        return report_error("replay");
    }
    record = take(line);
    const json rec = json::parse(record);

    std::printf("execution %s  agent %s  exit %s\n", exec_id.c_str(), rec.value("agent_id", "").c_str(),
                rec.value("exit", json::object()).dump().c_str());
    const auto events = rec.value("events", json::array());
    for (const auto& e : events) {
        std::printf("  #%-3llu %-11s %s\n", static_cast<unsigned long long>(e.value("seq", 0ULL)),
                    e.value("op", "").c_str(), e.value("summary", json::object()).dump().c_str());
    }
    std::printf("%zu events\n", events.size());

    bpr_bench* b = open_bench(paths, (std::filesystem::temp_directory_path() / "agentctl-replay").string());
    if (!b) return report_error("replay");
    char* result = nullptr;
    const auto st = bpr_bench_replay(b, record.c_str(), task.empty() ? nullptr : task.c_str(), &result);
    bpr_bench_close(b);
    if (st == BPR_ERR_NOT_FOUND && task.empty()) {
        std::printf("no benchmark domain for this agent; state replay skipped\n");
        return kOk;
    }
    if (st != BPR_OK) return report_error("replay");
    const json r = json::parse(take(result));
    std::printf("replayed %zu tool calls on fresh %s state: %s\n", r["tool_calls"].size(),
                r["domain"].get<std::string>().c_str(), r["state_hash"].get<std::string>().c_str());
    if (r.contains("matches")) {
        std::printf("expected for %s: %s -> %s\n", task.c_str(), r["expected_state_hash"].get<std::string>().c_str(),
                    r["matches"].get<bool>() ? "match" : "MISMATCH");
        return r["matches"].get<bool>() ? kOk : kFailures;
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"bprun control tool"};
    app.require_subcommand(1);
    BenchPaths paths;
    int rc = kOk;

    auto* reg = app.add_subcommand("register", "validate an agent config and add it to a registry file");
    std::string reg_config;
    std::string reg_file = env_or("BPRUN_REGISTRY", "registry.json");
    reg->add_option("config", reg_config, "agent JSON config")->required()->check(CLI::ExistingFile);
    reg->add_option("--registry", reg_file, "registry file read by agentd");
    reg->add_option("--blueprints", paths.blueprints, "native blueprint build directory");
    reg->callback([&] { rc = cmd_register(reg_config, reg_file, paths.blueprints); });

    auto* chat = app.add_subcommand("chat", "line-mode conversation with a registered agent");
    std::string chat_agent;
    std::string server = env_or("AGENTD_URL", "http://127.0.0.1:8787");
    std::string token = env_or("AGENT_TOKEN", "");
    std::string user_id = env_or("USER", "cli-user");
    bool verbose = false;
    chat->add_option("agent_id", chat_agent)->required();
    chat->add_option("--server", server, "agentd base URL");
    chat->add_option("--token", token, "agent token (X-Agent-Token)");
    chat->add_option("--user", user_id, "user id");
    chat->add_flag("-v,--verbose", verbose, "print every stream event");
    chat->callback([&] { rc = cmd_chat(chat_agent, server, token, user_id, verbose); });

    auto* bench = app.add_subcommand("bench", "benchmark harness");
    bench->require_subcommand(1);
    std::string domain = "all";
    std::string variant = "blueprint";
    int trials = 1;
    int concurrency = 2;
    std::string out = "bench-out";
    std::string toggles;
    bool no_baseline = false;
    bool quiet = false;
    std::string grid = "sca,dc,rt";

    auto* run = bench->add_subcommand("run", "run one agent variant over the fixture tasks");
    run->add_option("--domain", domain)->check(CLI::IsMember({"retail", "airline", "all"}));
    run->add_option("--variant", variant)->check(CLI::IsMember({"blueprint", "fc", "react", "act"}));
    run->add_option("--trials", trials)->check(CLI::PositiveNumber);
    run->add_option("--concurrency", concurrency)->check(CLI::PositiveNumber);
    run->add_option("--out", out, "report directory");
    run->add_option("--toggles", toggles, "blueprint toggles, e.g. dc=off,rt=on");
    run->add_flag("--no-baseline", no_baseline, "skip the fc run used for per-task deltas");
    run->add_flag("-q,--quiet", quiet, "summary line only");
    run->add_option("--fixtures", paths.fixtures);
    run->add_option("--blueprints", paths.blueprints);
    run->callback([&] {
        rc = cmd_bench_run(paths, domain, variant, trials, concurrency, out, toggles, !no_baseline, quiet);
    });

    auto* ablate = bench->add_subcommand("ablate", "pass^1 over toggle combinations");
    ablate->add_option("--grid", grid, "toggles to vary: any of sca,dc,rt");
    ablate->add_option("--domain", domain)->check(CLI::IsMember({"retail", "airline", "all"}));
    ablate->add_option("--trials", trials)->check(CLI::PositiveNumber);
    ablate->add_option("--concurrency", concurrency)->check(CLI::PositiveNumber);
    ablate->add_option("--out", out, "report directory");
    ablate->add_option("--fixtures", paths.fixtures);
    ablate->add_option("--blueprints", paths.blueprints);
    ablate->callback([&] { rc = cmd_bench_ablate(paths, domain, grid, trials, concurrency, out); });

    auto* replay = app.add_subcommand("replay", "show an execution's telemetry and replay its tool calls");
    std::string exec_id;
    std::string log = "bench-out/telemetry.log";
    std::string replay_server;
    std::string task;
    replay->add_option("exec_id", exec_id)->required();
    replay->add_option("--log", log, "telemetry log to search");
    replay->add_option("--server", replay_server, "fetch the record from agentd instead");
    replay->add_option("--token", token, "agent token for --server");
    replay->add_option("--task", task, "compare the replayed state with this task's expected hash");
    replay->add_option("--fixtures", paths.fixtures);
    replay->add_option("--blueprints", paths.blueprints);
    replay->callback([&] { rc = cmd_replay(paths, exec_id, log, replay_server, token, task); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kHarness;
    }
    return rc;
}
