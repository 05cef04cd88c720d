// OutOfMemoryError triage: jstat first, a heap dump only when the old
// generation is full, then analysis of the dump. The model extracts the pid
// and writes the final summary; it never chooses the next diagnostic step.

#include <sstream>

#include "common.hpp"

using namespace bprun;
using namespace bprun::blueprint;
using nlohmann::json;

namespace {

constexpr double kOldGenFull = 90.0;

// Old-generation utilisation is the fourth column of `jstat -gcutil`.
double old_gen_percent(const std::string& output) {
    std::istringstream in(output);
    std::string header, values;
    std::getline(in, header);
    std::getline(in, values);
    std::istringstream cols(values);
    double s0, s1, eden, old;
    if (!(cols >> s0 >> s1 >> eden >> old)) throw std::invalid_argument("unexpected jstat output");
    return old;
}

}  // namespace

int main() {
    auto link = AgentLink::connect();
    try {
        const auto text = opening_message(link);
        auto req = parse_json_reply(link.llm(
            {{"system", system_prompt(link) + "\nExtract the JVM process id. Reply with one JSON object {\"pid\": <int>}."},
             {"user", text}}));
        const json pid = req.value("pid", json());
        if (!pid.is_number_integer()) {
            link.send_user("Which process id is failing?");
            link.finish("ok", {{"diagnosis", nullptr}});
        }

        auto stat = link.tool("run_jstat", {{"pid", pid}});
        if (!stat["ok"].get<bool>()) {
            link.send_user("jstat failed: " + tool_error(stat));
            link.finish("error");
        }
        const double old = old_gen_percent(stat["value"]["output"]);
        link.log("info", "old generation utilisation", {{"percent", old}});

        std::string report;
        if (old >= kOldGenFull) {
            auto dump = link.tool("run_jmap", {{"pid", pid}});
            if (!dump["ok"].get<bool>()) {
                link.send_user("jmap failed: " + tool_error(dump));
                link.finish("error");
            }
            auto analysis = link.tool("analyze_heap_dump", {{"dump_path", dump["value"]["dump_path"]}});
            auto summary = link.llm({{"system", "Summarise the heap analysis for an on-call engineer in two sentences."},
                                     {"user", analysis["value"].dump()}});
            report = "Old generation is " + std::to_string(static_cast<int>(old)) + "% full. " + summary.message.content;
        } else {
            report = "Old generation is only " + std::to_string(static_cast<int>(old)) +
                     "% full, so no heap dump was taken. Check native memory and thread counts next.";
        }
        link.send_user(report);
        link.send_user("Reply with any follow-up, or 'close' to finish.");
        const auto reply = link.wait_user();
        link.send_user(is_stop(reply) || lower(reply).find("close") != std::string::npos
                           ? "Closing the incident."
                           : "Noted: " + reply + ". Closing the incident.");
        link.finish("ok", {{"old_gen_percent", old}});
    } catch (const RemoteError& e) {
        link.finish("error", {{"error", to_json(e.info)}});
    } catch (const std::exception& e) {
        link.log("error", e.what());
        link.finish("error", {{"error", e.what()}});
    }
}
