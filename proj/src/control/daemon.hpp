#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "control/agent_config.hpp"
#include "control/control_layer.hpp"
#include "executor/executor.hpp"

namespace bprun {

// agentd.toml: flat `key = value` lines, `#` comments, values optionally
// double-quoted. Recognized keys:
//   data_dir, listen (host:port), registry, blueprint_root, telemetry_log,
//   sandbox_root, catalog, deterministic (true|false), runtime.<tag> = <interpreter>
struct DaemonConfig {
    std::filesystem::path data_dir;
    std::string listen_host = "127.0.0.1";
    int listen_port = 8787;
    std::filesystem::path registry;
    std::filesystem::path blueprint_root;
    std::filesystem::path telemetry_log;  // default: <data_dir>/telemetry.log
    std::filesystem::path sandbox_root;   // default: a private temp dir
    std::filesystem::path catalog;
    bool deterministic = false;
    std::map<std::string, std::string> runtimes;  // merged over the defaults
};

// Throws ValidationError with the offending line number. Relative paths
// resolve against `base_dir`.
DaemonConfig parse_daemon_config(std::string_view text, const std::filesystem::path& base_dir);
DaemonConfig load_daemon_config(const std::filesystem::path& path);

// Everything agentd runs: sandbox, executor, registry and the gateway.
class Daemon {
public:
    explicit Daemon(DaemonConfig config);
    ~Daemon();

    const DaemonConfig& config() const { return config_; }
    AgentRegistry& agents() { return *agents_; }
    Executor& executor() { return *executor_; }
    TelemetryLog& telemetry() { return *telemetry_; }
    ControlLayer& control() { return *control_; }
    Sandbox& sandbox() { return *sandbox_; }

private:
    DaemonConfig config_;
    std::unique_ptr<Sandbox> sandbox_;
    std::unique_ptr<IdGenerator> ids_;
    std::unique_ptr<TelemetryLog> telemetry_;
    std::unique_ptr<Executor> executor_;
    std::unique_ptr<AgentRegistry> agents_;
    std::unique_ptr<ControlLayer> control_;
};

}  // namespace bprun
