// Prints one PASS/FAIL line per acceptance criterion; exits non-zero on any FAIL.
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <thread>

#include "bench/metrics.hpp"
#include "bench/report.hpp"
#include "bench/trial.hpp"
#include "control/daemon.hpp"
#include "control/http.hpp"
#include "control/sse.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bprun;
using namespace bprun::bench;
using namespace bprun::test;

namespace {

// Collects failed expectations for one criterion.
struct Check {
    std::vector<std::string> failures;
    std::string detail;

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
};

std::vector<pid_t> pids_owned_by(uid_t uid) {
    std::vector<pid_t> out;
    for (const auto& e : fs::directory_iterator("/proc")) {
        const auto name = e.path().filename().string();
        if (name.find_first_not_of("0123456789") != std::string::npos) continue;
        std::ifstream in(e.path() / "status");
        for (std::string line; std::getline(in, line);) {
            if (line.rfind("Uid:", 0) == 0) {
                if (std::stoul(line.substr(4)) == uid) out.push_back(std::stoi(name));
                break;
            }
        }
    }
    return out;
}

struct Bench {
    TempDir work{"accept-bench"};
    Harness harness{[this] {
        HarnessOptions o;
        o.fixture_root = source_dir() / "fixtures/bench";
        o.blueprint_root = binary_dir() / "blueprints";
        o.work_dir = work.path();
        o.deterministic = std::getenv("AGENT_DETERMINISTIC") && std::string(std::getenv("AGENT_DETERMINISTIC")) == "1";
        return o;
    }()};
    std::vector<TrialResult> five;  // blueprint, all tasks, 5 trials
    double five_seconds = 0;
};

Bench& bench() {
    static Bench b;
    return b;
}

json toggles(bool dc, bool rt) { return {{"dc_enabled", dc}, {"consolidated_tools", rt}}; }

void determinism(Check& c) {
    auto& b = bench();
    const auto tasks = b.harness.tasks("all");
    c.expect(tasks.size() == 20, "fixture task count is not 20");
    const auto t0 = std::chrono::steady_clock::now();
    b.five = b.harness.run_many(tasks, Variant::blueprint, json::object(), 5, 2);
    b.five_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    VariantRun run;
    run.variant = Variant::blueprint;
    run.results = b.five;
    const auto tc = trial_consistency(run);
    c.expect(tc.identical, "trials differ");
    c.expect(tc.pass1_variance == 0.0, "pass^1 variance is not 0");
    c.expect(tc.pass1_by_trial.size() == 5, "expected 5 trials");

    // Canonical traces and telemetry must be byte-identical across trials.
    std::map<std::string, std::string> first;
    for (const auto& r : b.five) {
        const auto doc = comparable(r).dump();
        auto [it, fresh] = first.emplace(r.task_id, doc);
        if (!fresh && it->second != doc) c.expect(false, r.task_id + " trial " + std::to_string(r.trial) + " differs");
        c.expect(!r.telemetry.is_null(), r.task_id + " has no canonical telemetry");
    }
    c.expect(b.five_seconds < 120, "took longer than 2 minutes");
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu results, pass^1 per trial %.4f, variance %g, %.1fs", b.five.size(),
                  tc.pass1_by_trial.empty() ? 0.0 : tc.pass1_by_trial[0], tc.pass1_variance, b.five_seconds);
    c.detail = buf;
}

void metric_math(Check& c) {
    const double avg = domain_weighted_average({69.2, 46.0});
    c.expect(round_one_decimal(avg) == 57.6 && std::fabs(avg - 57.6) < 1e-9, "domain average of 69.2 and 46.0");
    c.expect(reduction_percent(11, 2) == 81.8, "reduction 11 -> 2");
    c.expect(reduction_percent(9, 7) == 22.2, "reduction 9 -> 7");
    int cases = 0;
    for (int n = 1; n <= 8; ++n) {
        for (int s = 0; s <= n; ++s) {
            for (int k = 1; k <= n; ++k, ++cases) {
                const double got = pass_hat_k(n, s, k);
                const double want = oracle::pass_hat_k_enumerated(n, s, k);
                if (std::fabs(got - want) > 1e-12) {
                    c.expect(false, "pass^" + std::to_string(k) + " n=" + std::to_string(n) + " s=" + std::to_string(s));
                }
            }
        }
    }
    c.detail = "avg " + std::to_string(avg) + ", " + std::to_string(cases) + " pass^k cases vs enumeration";
}

void consolidation(Check& c) {
    auto& h = bench().harness;
    const auto* task = h.find_task("R05");
    if (!task) return c.expect(false, "exchange task R05 missing");
    const auto bp = h.run_trial(*task, Variant::blueprint, toggles(true, true), 0);
    const auto fc = h.run_trial(*task, Variant::fc, json::object(), 0);
    c.expect(bp.success, "blueprint fails the exchange task");
    c.expect(bp.tool_calls == 2, "blueprint tool calls " + std::to_string(bp.tool_calls) + " != 2");
    c.expect(fc.tool_calls == 11, "fc tool calls " + std::to_string(fc.tool_calls) + " != 11");
    const double red = fc.tool_calls > 0 ? reduction_percent(fc.tool_calls, bp.tool_calls) : 0;
    c.expect(red >= 70 && red == 81.8, "reduction " + std::to_string(red));
    c.detail = "fc " + std::to_string(fc.tool_calls) + " calls, blueprint " + std::to_string(bp.tool_calls) +
               ", reduction " + std::to_string(red).substr(0, 4) + "%";
}

void dc_direction(Check& c) {
    auto& h = bench().harness;
    for (const char* id : {"A03", "A06"}) {
        const auto* task = h.find_task(id);
        if (!task) {
            c.expect(false, std::string(id) + " missing");
            continue;
        }
        c.expect(h.run_trial(*task, Variant::blueprint, toggles(true, true), 0).success, std::string(id) + " fails with dc on");
        c.expect(!h.run_trial(*task, Variant::blueprint, toggles(false, true), 0).success,
                 std::string(id) + " passes with dc off");
    }
    const auto abl = run_ablation(h, h.tasks("all"), parse_grid("sca,dc,rt"), 1, 2);
    int pairs = 0;
    for (const auto& on : abl.rows) {
        if (!on.dc) continue;
        for (const auto& off : abl.rows) {
            if (off.dc || off.sca != on.sca || off.rt != on.rt) continue;
            ++pairs;
            for (std::size_t d = 0; d < on.pass1.size(); ++d) {
                c.expect(on.pass1[d].second >= off.pass1[d].second,
                         on.pass1[d].first + " pass^1 drops with dc on (rt=" + (on.rt ? "on" : "off") + ")");
            }
        }
    }
    c.expect(pairs == 2, "ablation grid lacks dc pairs");
    c.detail = "A03/A06 flip with dc; " + std::to_string(pairs) + " dc on/off pairs compared per domain";
}

void quota(Check& c) {
    Engine engine;
    ScriptedHost host;
    std::string detail;
    {
        auto req = python_request(source_dir() / "tests/fixtures/blueprints/spin", "spin.bp");
        req.limits.wall_clock_seconds = 1.0;
        req.limits.cpu_seconds = 30;
        auto handle = engine.executor->launch(req, {});
        const uid_t uid = handle->sandbox()->uid();
        const pid_t pid = handle->sandbox()->pid();
        const auto rec = engine.executor->serve(*handle, host);
        c.expect(rec.exit.status == ExitStatus::quota_killed, "spin not quota-killed");
        c.expect(rec.exit.limit && *rec.exit.limit == QuotaDimension::wall_clock, "spin killed on another dimension");
        c.expect(rec.wall_ms >= 1000 && rec.wall_ms <= 3000, "spin wall " + std::to_string(rec.wall_ms) + "ms");
        handle.reset();
        std::this_thread::sleep_for(std::chrono::seconds(2));
        c.expect(!process_alive(pid), "spin leader survived");
        if (::geteuid() == 0) c.expect(pids_owned_by(uid).empty(), "spin descendants survived");
        detail = "spin killed at " + std::to_string(static_cast<long>(rec.wall_ms)) + "ms (limit 1000)";
    }
    {
        auto req = python_request(source_dir() / "tests/fixtures/blueprints/balloon", "balloon.bp");
        req.limits.memory_bytes = 96ull * 1024 * 1024;
        req.limits.wall_clock_seconds = 20;
        auto handle = engine.executor->launch(req, {});
        const uid_t uid = handle->sandbox()->uid();
        const pid_t pid = handle->sandbox()->pid();
        const auto rec = engine.executor->serve(*handle, host);
        c.expect(rec.exit.status == ExitStatus::quota_killed, "balloon not quota-killed");
        c.expect(rec.exit.limit && *rec.exit.limit == QuotaDimension::memory, "balloon killed on another dimension");
        handle.reset();
        std::this_thread::sleep_for(std::chrono::seconds(2));
        c.expect(!process_alive(pid), "balloon leader survived");
        if (::geteuid() == 0) c.expect(pids_owned_by(uid).empty(), "balloon descendants survived");
        detail += ", balloon killed on memory at " + std::to_string(rec.quota_usage.memory_bytes >> 20) + " MiB";
    }
    c.detail = detail;
}

void retry(Check& c) {
    ToolRegistry tools;
    auto attempt = [&](const std::string& script, int max_retries, const std::string& user) {
        Engine engine;
        MockProvider mock(MockScript::from_json(json::parse(script)));
        auto req = fixture_request("llm_once", user);
        req.retry.max_retries = max_retries;
        ScriptedHost host;
        return engine.executor->run(req, {&mock, &tools, nullptr}, host);
    };
    const std::string flaky =
        R"({"steps":[{"fail_first":2,"response":{"message":{"role":"assistant","content":"fine"}}}]})";
    const std::string strict =
        R"({"steps":[{"match":{"last_user_contains":"expected-only"},"response":{"message":{"role":"assistant","content":"x"}}}]})";

    const auto two = attempt(flaky, 2, "hello");
    const auto one = attempt(flaky, 1, "hello");
    const auto fatal = attempt(strict, 5, "unexpected");
    auto attempts = [](const TelemetryRecord& r) {
        return r.events.empty() ? -1 : r.events[0].summary.value("attempts", -1);
    };
    c.expect(two.exit.status == ExitStatus::ok && attempts(two) == 3, "max_retries=2 should succeed on attempt 3");
    c.expect(two.retries.size() == 2, "max_retries=2 should log 2 retries");
    c.expect(one.exit.status != ExitStatus::ok && attempts(one) == 2, "max_retries=1 should fail after 2 attempts");
    c.expect(attempts(fatal) == 1 && fatal.retries.empty(), "fatal error was retried");
    c.detail = "attempts " + std::to_string(attempts(two)) + " / " + std::to_string(attempts(one)) + " / fatal " +
               std::to_string(attempts(fatal));
}

void protocol(Check& c) {
    std::mt19937 rng(20240611);
    // A third pure noise, a third valid frames, a third valid frames with damage.
    auto valid = [&](int i) {
        json payload = {{"n", static_cast<int>(rng() % 1000)}, {"text", std::string(rng() % 40, 'a' + i % 26)}};
        switch (i % 4) {
            case 0: return encode_frame(Frame::request(1 + rng() % 100, ops::log, payload));
            case 1: return encode_frame(Frame::success(1 + rng() % 100, payload));
            case 2: return encode_frame(Frame::event(ops::log, payload));
            default: return encode_frame(Frame::request(1 + rng() % 100, ops::llm_invoke, {{"messages", json::array()}}));
        }
    };
    int frames = 0, errors = 0;
    for (int i = 0; i < 10000; ++i) {
        std::vector<std::uint8_t> buf;
        if (i % 3 == 0) {
            buf.resize(rng() % 96);
            for (auto& b : buf) b = static_cast<std::uint8_t>(rng());
        } else {
            buf = valid(i);
            if (i % 3 == 2) {
                for (int flips = 1 + rng() % 3; flips > 0; --flips) buf[rng() % buf.size()] ^= 1u << (rng() % 8);
                if (rng() % 4 == 0) buf.resize(rng() % buf.size());
            }
        }
        try {
            decode_frame(buf);
            ++frames;
        } catch (const ProtocolError&) {
            ++errors;
        } catch (const std::exception& e) {
            c.expect(false, std::string("decoder threw a non-protocol error: ") + e.what());
        }
    }
    c.expect(frames + errors == 10000, "fuzz outcomes do not add up");

    Engine engine;
    ScriptedHost host;
    auto handle = engine.executor->launch(fixture_request("malformed"), {});
    const pid_t pid = handle->sandbox()->pid();
    const auto t0 = std::chrono::steady_clock::now();
    const auto rec = engine.executor->serve(*handle, host);
    const auto took = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(took < 2.0, "malformed blueprint took " + std::to_string(took) + "s");
    c.expect(rec.exit.error && rec.exit.error->cls == ErrorClass::fatal, "malformed blueprint exit is not fatal");
    c.expect(rec.closed(), "telemetry record not closed");
    c.expect(!process_alive(pid), "malformed blueprint still alive");
    const auto line = engine.log->find_line(rec.exec_id);
    c.expect(line.has_value(), "telemetry record not logged");
    if (line) {
        const auto doc = json::parse(*line);
        c.expect(doc.contains("exit") && doc.contains("events") && doc.contains("quota_usage"), "record incomplete");
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "fuzz %d frames / %d protocol errors; malformed run ended in %.0fms", frames, errors,
                  took * 1000);
    c.detail = buf;
}

void sse(Check& c) {
    TempDir dir("accept-http");
    DaemonConfig cfg;
    cfg.data_dir = dir / "data";
    cfg.registry = source_dir() / "fixtures/agents/registry.json";
    cfg.blueprint_root = binary_dir() / "blueprints";
    cfg.deterministic = true;
    Daemon daemon(cfg);
    HttpGateway gw(daemon.control());
    const int port = gw.bind("127.0.0.1", 0);
    gw.start();
    GatewayClient client("http://127.0.0.1:" + std::to_string(port));
    const std::string sid = client.create_session("u1", "retail-demo", "retail-token")["session_id"];
    std::vector<SseEvent> all;
    std::size_t bytes = 0;
    for (const std::string msg :
         {"Tell me about the Wireless Mouse", "Please cancel order #W1002", "yes", "That's all, thanks."}) {
        const auto raw = client.post_message(sid, "retail-token", msg, {});
        bytes += raw.size();
        std::vector<SseEvent> parsed;
        std::string why;
        if (!parse_strict_sse(raw, parsed, &why)) c.expect(false, "stream rejected: " + why);
        all.insert(all.end(), parsed.begin(), parsed.end());
    }
    gw.stop();
    if (all.empty() || all.back().type != "done") return c.expect(false, "stream did not end with done");
    const auto exec_id = all.back().data["exec_id"].get<std::string>();
    const auto rec = json::parse(*daemon.telemetry().find_line(exec_id));
    std::vector<std::pair<std::uint64_t, std::string>> want;
    for (const auto& e : rec["events"]) want.emplace_back(e["seq"].get<std::uint64_t>(), e["op"].get<std::string>());
    c.expect(stream_ops(all) == want, "stream order differs from telemetry");

    // Success soundness over every successful deterministic trial.
    auto& b = bench();
    int checked = 0;
    for (const auto& r : b.five) {
        if (!r.success) continue;
        ++checked;
        const auto* task = b.harness.find_task(r.task_id);
        if (!task || b.harness.replay_hash(*task, r.trace) != task->expected_state_hash) {
            c.expect(false, "replay of " + r.task_id + " trial " + std::to_string(r.trial) + " misses expected state");
        }
    }
    c.expect(checked > 0, "no successful trials to replay");
    c.detail = std::to_string(all.size()) + " events / " + std::to_string(bytes) + " bytes parsed, " +
               std::to_string(want.size()) + " ops matched, " + std::to_string(checked) + " successful trials replayed";
}

void retrieval(Check& c) {
    std::mt19937 rng(7);
    const std::vector<std::string> lexicon = {"refund", "baggage", "fee",  "cancel", "order",   "policy", "window",
                                              "days",   "gold",    "silver", "upgrade", "seat", "Zürich", "mouse"};
    int corpora = 0, ranked = 0;
    for (int round = 0; round < 200; ++round, ++corpora) {
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
        KnowledgeBase kb("k", docs);
        const auto got = kb.query(query, 100);
        const auto want = oracle::tfidf_rank(plain, query);
        if (got.size() != want.size()) {
            c.expect(false, "corpus " + std::to_string(round) + ": result count differs");
            continue;
        }
        for (std::size_t i = 0; i < got.size(); ++i, ++ranked) {
            const bool same = got[i].doc_id == want[i].id && std::fabs(got[i].score - want[i].score) < 1e-9;
            if (!same) c.expect(false, "corpus " + std::to_string(round) + " rank " + std::to_string(i) + " differs");
        }
    }
    c.detail = std::to_string(corpora) + " corpora of <= 20 docs, " + std::to_string(ranked) + " ranked hits compared";
}

}  // namespace

int main() {
    ::setenv("AGENT_DETERMINISTIC", "1", 1);
    const std::vector<std::pair<const char*, std::function<void(Check&)>>> criteria = {
        {"determinism", determinism},   {"metric-math", metric_math}, {"tool-consolidation", consolidation},
        {"dc-direction", dc_direction}, {"quota-enforcement", quota}, {"retry-semantics", retry},
        {"protocol-robustness", protocol}, {"sse-conformance", sse},  {"retrieval-oracle", retrieval},
    };
    int failed = 0;
    for (const auto& [name, fn] : criteria) {
        Check c;
        try {
            fn(c);
        } catch (const std::exception& e) {
            c.failures.push_back(std::string("exception: ") + e.what());
        }
        if (c.failures.empty()) {
            std::printf("PASS %s: %s\n", name, c.detail.c_str());
        } else {
            ++failed;
            std::string why;
            for (std::size_t i = 0; i < c.failures.size() && i < 5; ++i) why += (i ? "; " : "") + c.failures[i];
            std::printf("FAIL %s: %s\n", name, why.c_str());
        }
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
