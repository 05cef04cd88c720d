// agentd: serves the session/SSE gateway until SIGINT or SIGTERM.
#include <csignal>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "bprun/bprun.h"

int main(int argc, char** argv) {
    CLI::App app{"bprun agent daemon"};
    std::string config = "agentd.toml";
    std::string listen;
    app.add_option("-c,--config", config, "key/value config file")->check(CLI::ExistingFile);
    app.add_option("-l,--listen", listen, "host:port, overrides the config");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    // Block before any thread exists so only sigwait sees them.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);
    std::signal(SIGPIPE, SIG_IGN);

    bpr_daemon* d = nullptr;
    if (bpr_daemon_open(config.c_str(), &d) != BPR_OK) {
        std::fprintf(stderr, "agentd: %s\n", bpr_last_error());
        return 2;
    }
    std::string host;
    int port = -1;
    if (!listen.empty()) {
        const auto colon = listen.rfind(':');
        if (colon == std::string::npos) {
            std::fprintf(stderr, "agentd: --listen must be host:port\n");
            bpr_daemon_close(d);
            return 2;
        }
        host = listen.substr(0, colon);
        port = std::atoi(listen.c_str() + colon + 1);
    }
    int bound = 0;
    if (bpr_daemon_listen(d, host.empty() ? nullptr : host.c_str(), port, &bound) != BPR_OK) {
        std::fprintf(stderr, "agentd: %s\n", bpr_last_error());
        bpr_daemon_close(d);
        return 2;
    }
    std::printf("agentd listening on port %d\n", bound);
    std::fflush(stdout);

    int sig = 0;
    sigwait(&set, &sig);
    std::fprintf(stderr, "agentd: signal %d, shutting down\n", sig);
    bpr_daemon_close(d);
    return 0;
}
