#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "bench/metrics.hpp"
#include "bench/report.hpp"
#include "bench/trial.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace bprun;
using namespace bprun::bench;
using namespace bprun::test;

namespace {

Harness& harness() {
    static TempDir work("bench");
    static Harness h([] {
        HarnessOptions o;
        o.fixture_root = source_dir() / "fixtures/bench";
        o.blueprint_root = binary_dir() / "blueprints";
        o.work_dir = work.path();
        return o;
    }());
    return h;
}

int passed(const std::vector<TrialResult>& rs) {
    int n = 0;
    for (const auto& r : rs) n += r.success ? 1 : 0;
    return n;
}

const TrialResult& find(const std::vector<TrialResult>& rs, const std::string& id) {
    for (const auto& r : rs) {
        if (r.task_id == id) return r;
    }
    throw std::runtime_error("no result for " + id);
}

json bp(bool dc, bool rt) { return {{"dc_enabled", dc}, {"consolidated_tools", rt}}; }

}  // namespace

TEST_CASE("pass^k matches subset enumeration for every n <= 8") {
    for (int n = 1; n <= 8; ++n) {
        for (int s = 0; s <= n; ++s) {
            for (int k = 1; k <= n; ++k) {
                CAPTURE(n);
                CAPTURE(s);
                CAPTURE(k);
                CHECK(pass_hat_k(n, s, k) == doctest::Approx(oracle::pass_hat_k_enumerated(n, s, k)).epsilon(1e-12));
            }
        }
    }
    CHECK(pass_hat_k(4, 3, 1) == 0.75);
    CHECK(pass_hat_k(5, 3, 2) == doctest::Approx(0.3));
    CHECK_THROWS_AS(pass_hat_k(3, 1, 4), ValidationError);
    CHECK_THROWS_AS(pass_hat_k(3, 4, 1), ValidationError);
    CHECK_THROWS_AS(pass_hat_k(3, 1, 0), ValidationError);
    CHECK(mean_pass_hat_k({4, 2, 0}, 4, 1) == doctest::Approx(0.5));
}

TEST_CASE("rounding, averages and reductions") {
    CHECK(round_one_decimal(43.55) == 43.6);
    CHECK(round_one_decimal(0.05) == 0.1);
    CHECK(round_one_decimal(2.25) == 2.3);
    CHECK(round_one_decimal(66.6666) == 66.7);
    CHECK(round_one_decimal(58.3333) == 58.3);
    CHECK(round_one_decimal(87.5) == 87.5);
    CHECK(round_one_decimal(0.0) == 0.0);
    CHECK(domain_weighted_average({66.666666, 50.0}) == doctest::Approx(58.333333));
    CHECK(domain_weighted_average({100.0}) == 100.0);
    CHECK_THROWS_AS(domain_weighted_average({}), ValidationError);
    CHECK(reduction_percent(11, 2) == 81.8);
    CHECK(reduction_percent(9, 7) == 22.2);
    CHECK(reduction_percent(10, 10) == 0.0);
    CHECK(reduction_percent(4, 5) == -25.0);
    CHECK_THROWS_AS(reduction_percent(0, 1), ValidationError);
}

TEST_CASE("state digests agree with the reference implementation") {
    // Frozen from tools/state_hash.py.
    const std::map<std::string, std::string> want = {
        {"fixtures/bench/retail/state.json", "36f63f5e08afebf130eebc48a10204bdf9f99d5b98bf65b5af7f5945e222269a"},
        {"fixtures/bench/airline/state.json", "e4ae200f5e85fe60398dfb4546f6e4518f5da793b1934aab038e742ca5d67fa7"},
        {"fixtures/agents/ops/state.json", "bd6b34af47eaffb21e747924d462dcd8f55bc13c7d9be4806908990951f86bd4"},
    };
    for (const auto& [rel, digest] : want) {
        CAPTURE(rel);
        auto state = json::parse(read_file(source_dir() / rel));
        CHECK(state_hash(state) == digest);
        DomainStore store("x", state);
        CHECK(store.hash() == digest);
        state[state.begin().key()]["__extra__"] = 1;
        CHECK(state_hash(state) != digest);
    }
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("expression evaluator") {
    CHECK(evaluate_expression("2 + 3 * 4") == 14);
    CHECK(evaluate_expression("(2 + 3) * 4") == 20);
    CHECK(evaluate_expression("10 / 4") == 2.5);
    CHECK(evaluate_expression("-3 + 5") == 2);
    CHECK(evaluate_expression("29.99 * 3") == doctest::Approx(89.97));
    CHECK_THROWS(evaluate_expression("2 +"));
    CHECK_THROWS(evaluate_expression("1 / 0"));
    CHECK_THROWS(evaluate_expression("import os"));
}

TEST_CASE("user simulator") {
    UserSimulator sim({{std::nullopt, "Hi, I need help"}, {std::string("Proposed action"), "yes"}, {std::nullopt, "thanks"}});
    CHECK(sim.opening() == "Hi, I need help");
    CHECK(sim.respond("Which order?") == kFallbackUtterance);
    CHECK(sim.respond("Proposed action: cancel #W1") == "yes");
    CHECK(sim.respond("Done.") == "thanks");
    CHECK(sim.exhausted());
    CHECK(sim.respond("anything else?") == kStopSignal);
    CHECK(sim.respond("hello?") == kStopSignal);
}

TEST_CASE("fixtures load and golden actions reproduce the expected states") {
    auto& h = harness();
    CHECK(h.tasks("retail").size() == 12);
    CHECK(h.tasks("airline").size() == 8);
    CHECK(h.tasks("all").size() == 20);
    CHECK_THROWS(h.tasks("bakery"));
    for (const auto* t : h.tasks("all")) {
        CAPTURE(t->task_id);
        CHECK(t->expected_state_hash.size() == 64);
        CHECK(h.replay_actions(t->domain, t->golden_actions) == t->expected_state_hash);
    }
    CHECK(h.find_task("R05") != nullptr);
    CHECK(h.find_task("Z99") == nullptr);
    CHECK(h.domain_for_agent("retail-bench").value_or("") == "retail");
    CHECK_FALSE(h.domain_for_agent("nobody"));
}

TEST_CASE("variant outcomes over all tasks") {
    auto& h = harness();
    const auto tasks = h.tasks("all");
    struct Want {
        Variant v;
        json toggles;
        int passed;
    };
    const std::vector<Want> wants = {
        {Variant::fc, json::object(), 12},   {Variant::react, json::object(), 10}, {Variant::act, json::object(), 8},
        {Variant::blueprint, bp(false, false), 14}, {Variant::blueprint, bp(true, false), 17},
        {Variant::blueprint, bp(false, true), 16},  {Variant::blueprint, bp(true, true), 18},
    };
    std::map<std::string, std::vector<TrialResult>> by_label;
    for (const auto& w : wants) {
        const auto rs = h.run_many(tasks, w.v, w.toggles, 1, 2);
        const auto label = variant_label(w.v, w.toggles);
        CAPTURE(label);
        CHECK(passed(rs) == w.passed);
        for (const auto& r : rs) {
            CAPTURE(r.task_id);
            if (r.success) {
                CHECK(r.state_matches);
                CHECK(r.outputs_present);
                // Replaying the recorded tool calls lands on the same state.
                CHECK(h.replay_hash(*h.find_task(r.task_id), r.trace) == r.final_state_hash);
            }
            if (w.v == Variant::blueprint) {
                CHECK(r.telemetry_tool_calls == r.tool_calls);
                CHECK_FALSE(r.exec_id.empty());
            }
        }
        by_label[label] = rs;
    }
    const auto& fc = by_label["fc"];
    const auto& full = by_label["blueprint"];
    CHECK(find(full, "R05").tool_calls == 2);
    CHECK(find(fc, "R05").tool_calls == 11);
    CHECK(reduction_percent(find(fc, "R05").tool_calls, find(full, "R05").tool_calls) == 81.8);
    CHECK(find(full, "A04").tool_calls == 7);
    CHECK(find(fc, "A04").tool_calls == 9);
    for (const char* id : {"A03", "A06"}) {
        CAPTURE(id);
        CHECK(find(full, id).success);
        CHECK_FALSE(find(by_label["blueprint[dc=off]"], id).success);
    }
    CHECK_FALSE(find(full, "R06").success);
    CHECK_FALSE(find(full, "A08").success);
}

TEST_CASE("role accounting") {
    const json trace = json::array({
        {{"role", "system"}, {"content", "abcd"}},
        {{"role", "user"}, {"content", "abcdefgh"}},
        {{"role", "assistant"}, {"content", "abc"}},
        {{"role", "tool"}, {"name", "t"}, {"result", {{"ok", true}}}},
        {{"role", "assistant"}, {"content", "abcde"}},
    });
    const auto roles = count_roles(trace);
    CHECK(roles.at("system") == RoleCounts{1, 1});
    CHECK(roles.at("user") == RoleCounts{1, 2});
    CHECK(roles.at("assistant") == RoleCounts{2, 3});
    CHECK(roles.at("tool") == RoleCounts{1, 3});  // {"ok":true} is 11 bytes
}

TEST_CASE("ablation table") {
    CHECK(parse_grid("sca,dc,rt") == std::set<std::string>{"sca", "dc", "rt"});
    CHECK_THROWS_AS(parse_grid("sca,warp"), ValidationError);
    CHECK(ablation_cells({"sca", "dc", "rt"}).size() == 5);
    CHECK(ablation_cells({"dc"}).size() == 2);
    CHECK(ablation_cells({"sca"}).size() == 2);

    auto& h = harness();
    const auto result = run_ablation(h, h.tasks("all"), parse_grid("sca,dc,rt"), 1, 2);
    struct Row {
        bool sca, dc, rt;
        double retail, airline, avg;
    };
    const std::vector<Row> want = {
        {false, false, false, 66.7, 50.0, 58.3}, {true, false, false, 75.0, 62.5, 68.8},
        {true, true, false, 83.3, 87.5, 85.4},   {true, false, true, 91.7, 62.5, 77.1},
        {true, true, true, 91.7, 87.5, 89.6},
    };
    REQUIRE(result.rows.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) {
        CAPTURE(i);
        const auto& r = result.rows[i];
        CHECK(r.sca == want[i].sca);
        CHECK(r.dc == want[i].dc);
        CHECK(r.rt == want[i].rt);
        CHECK(r.pass1.at(0) == std::make_pair(std::string("retail"), want[i].retail));
        CHECK(r.pass1.at(1) == std::make_pair(std::string("airline"), want[i].airline));
        CHECK(r.average == want[i].avg);
    }
}

TEST_CASE("reports are reproducible and complete") {
    auto& h = harness();
    BenchRequest req;
    req.trials = 3;
    TempDir a("ra"), b("rb");
    std::string first_json, first_text;
    for (auto* dir : {&a, &b}) {
        auto report = run_benchmark(h, req);
        REQUIRE(report.runs.size() == 2);
        CHECK(report.runs[0].label() == "fc");
        CHECK(report.runs[1].label() == "blueprint");
        const auto tc = trial_consistency(report.runs[1]);
        CHECK(tc.identical);
        CHECK(tc.pass1_variance == 0.0);
        CHECK(tc.pass1_by_trial.size() == 3);
        CHECK(tc.differing_tasks.empty());
        emit_report(report, dir->path());
        const auto js = read_file(dir->path() / "report.json");
        const auto txt = read_file(dir->path() / "report.txt");
        if (first_json.empty()) {
            first_json = js;
            first_text = txt;
        } else {
            CHECK(js == first_json);
            CHECK(txt == first_text);
        }
        CHECK(fs::exists(dir->path() / "traces/blueprint/R05.2.json"));
        std::ifstream results(dir->path() / "results.jsonl");
        int lines = 0;
        for (std::string line; std::getline(results, line);) {
            const auto r = json::parse(line);
            CHECK(fs::exists(dir->path() / r["trace_path"].get<std::string>()));
            ++lines;
        }
        CHECK(lines == 2 * 20 * 3);
    }
    const auto doc = json::parse(first_json);
    CHECK(doc["trials"] == 3);
    const auto& bpv = doc["variants"][1];
    CHECK(bpv["label"] == "blueprint");
    CHECK(bpv["domains"]["retail"]["pass1_percent"] == 91.7);
    CHECK(bpv["domains"]["airline"]["pass1_percent"] == 87.5);
    CHECK(bpv["domains"]["retail"]["pass_hat_k"].size() == 3);
    CHECK(bpv["average_pass1"] == 89.6);
    bool saw_r05 = false;
    for (const auto& d : doc["deltas"]) {
        if (d["task_id"] == "R05") {
            saw_r05 = true;
            CHECK(d["tool_call_reduction_percent"] == 81.8);
        }
    }
    CHECK(saw_r05);
    CHECK(first_text.find("Pass^1") != std::string::npos);
    CHECK(first_text.find("89.6") != std::string::npos);

    CHECK_THROWS_AS(emit_report(*std::make_unique<BenchmarkReport>(), "/proc/forbidden"), EngineError);
}
