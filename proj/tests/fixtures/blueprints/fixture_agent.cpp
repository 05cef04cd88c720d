// Test blueprints, one behaviour per FIXTURE_MODE.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "../../../blueprints/common.hpp"

extern char** environ;

using namespace bprun;
using namespace bprun::blueprint;
using nlohmann::json;

namespace {

[[maybe_unused]] std::string last_user(const AgentLink& link) { return opening_message(link); }

[[maybe_unused]] json try_write(const std::filesystem::path& p) {
    std::ofstream out(p);
    out << "x";
    out.close();
    const bool ok = out.good() && std::filesystem::exists(p);
    return {{"path", p.string()}, {"ok", ok}};
}

[[maybe_unused]] json try_read(const std::string& p) {
    std::ifstream in(p);
    std::string s;
    const bool ok = in.good() && static_cast<bool>(std::getline(in, s));
    return {{"path", p}, {"ok", ok}};
}

}  // namespace

int main() {
    auto link = AgentLink::connect();
    const std::string mode = FIXTURE_MODE;

    if (mode == "echo") {
        auto r = link.llm({{"user", last_user(link)}});
        auto t = link.tool("echo", {{"text", r.message.content}});
        link.finish("ok", {{"reply", r.message.content}, {"tool", t}});
    }
    if (mode == "llm_once") {
        try {
            auto r = link.llm({{"user", last_user(link)}});
            link.finish("ok", {{"reply", r.message.content}});
        } catch (const RemoteError& e) {
            link.finish("error", {{"error", to_json(e.info)}});
        }
    }
    if (mode == "malformed") {
        const char bad[] = "\x00\x00\x00\x14not json at all!!!!!";
        [[maybe_unused]] auto n = ::write(link.channel().fd(), bad, sizeof(bad) - 1);
        std::this_thread::sleep_for(std::chrono::seconds(60));
        return 0;
    }
    if (mode == "flood") {
        for (;;) link.log("debug", "tick");
    }
    if (mode == "crash") {
        link.log("info", "about to crash");
        std::_Exit(3);
    }
    if (mode == "envdump") {
        json env = json::array();
        for (char** e = environ; *e; ++e) env.push_back(*e);
        std::printf("%s\n", env.dump().c_str());
        std::fflush(stdout);
        link.log("info", "environment", {{"env", env}});
        link.finish("ok", {{"env", env}});
    }
    if (mode == "write_attempt") {
        const auto self_dir = std::filesystem::read_symlink("/proc/self/exe").parent_path();
        json out{{"blueprint_dir", try_write(self_dir / "injected.txt")},
                 {"scratch", try_write(std::filesystem::current_path() / "scratch.txt")},
                 {"cwd", std::filesystem::current_path().string()}};
        if (link.init().contains("probe_path")) out["probe"] = try_read(link.init()["probe_path"]);
        link.log("info", "write attempt", out);
        if (link.init().value("hold", false)) link.wait_user();
        link.finish("ok", out);
    }
    if (mode == "connect_attempt") {
        const std::string host = link.init().value("target_host", "127.0.0.1");
        const int port = link.init().value("target_port", 9);
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<uint16_t>(port));
        ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
        const int rc = fd < 0 ? -1 : ::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr));
        const int err = rc == 0 ? 0 : errno;
        if (fd >= 0) ::close(fd);
        json out{{"connected", rc == 0}, {"errno", err}, {"error", rc == 0 ? "" : std::strerror(err)}};
        link.log("info", "connect attempt", out);
        link.finish("ok", out);
    }
    if (mode == "waiter") {
        link.send_user("ready");
        for (;;) {
            auto text = link.wait_user();
            if (text == "bye" || is_stop(text)) {
                link.send_user("goodbye");
                link.finish("ok");
            }
            link.send_user("echo: " + text);
        }
    }
    if (mode == "stdout_spam") {
        std::string chunk(4096, 'x');
        for (int i = 0; i < 64; ++i) std::fwrite(chunk.data(), 1, chunk.size(), stdout);
        std::fflush(stdout);
        link.finish("ok");
    }
    if (mode == "sleeper") {
        std::this_thread::sleep_for(std::chrono::seconds(60));
    }
    if (mode == "forker") {
        // Leaves a detached grandchild behind; the reaper must still catch it.
        if (::fork() == 0) {
            ::setsid();
            std::this_thread::sleep_for(std::chrono::seconds(60));
            std::_Exit(0);
        }
        link.log("info", "forked");
        link.finish("ok");
    }
    link.finish("error", {{"error", "unknown fixture mode " + mode}});
}
