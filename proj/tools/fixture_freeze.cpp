// Fills expected_state_hash in <bench>/<domain>/tasks.json by replaying each
// task's golden_actions on the domain's initial state.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bench/domain.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

static json read_json(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return json::parse(ss.str());
}

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: fixture_freeze <bench-fixture-dir>\n";
        return 2;
    }
    int bad = 0;
    for (const auto& entry : fs::directory_iterator(argv[1])) {
        const auto tasks_path = entry.path() / "tasks.json";
        if (!fs::exists(tasks_path)) continue;
        auto doc = read_json(tasks_path);
        const auto initial = read_json(entry.path() / "state.json");
        for (auto& t : doc["tasks"]) {
            auto store = std::make_shared<bprun::bench::DomainStore>(doc["domain"].get<std::string>(), initial);
            bprun::ToolRegistry tools;
            bprun::bench::register_domain_tools(tools, store, true);
            for (const auto& a : t["golden_actions"]) {
                auto r = tools.dispatch(a["name"].get<std::string>(), a["args"]);
                if (!r["ok"].get<bool>()) {
                    std::cerr << t["task_id"].get<std::string>() << ": golden action failed: " << r.dump() << "\n";
                    ++bad;
                }
            }
            t["expected_state_hash"] = store->hash();
            std::cout << t["task_id"].get<std::string>() << " " << store->hash() << "\n";
        }
        std::ofstream(tasks_path) << doc.dump(2) << "\n";
    }
    return bad == 0 ? 0 : 1;
}
