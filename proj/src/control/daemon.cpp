#include "control/daemon.hpp"

#include <fstream>
#include <sstream>

#include "sandbox/manifest.hpp"

namespace bprun {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

DaemonConfig parse_daemon_config(std::string_view text, const fs::path& base_dir) {
    DaemonConfig c;
    std::istringstream in{std::string(text)};
    int lineno = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        auto where = [&] { return "agentd config line " + std::to_string(lineno) + ": "; };
        std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ValidationError(where() + "expected key = value");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        std::string value = trim(std::string_view(line).substr(eq + 1));
        if (!value.empty() && value.front() == '"') {
            const auto close = value.find('"', 1);
            if (close == std::string::npos) throw ValidationError(where() + "unterminated string");
            value = value.substr(1, close - 1);
        } else if (const auto hash = value.find(" #"); hash != std::string::npos) {
            value = trim(std::string_view(value).substr(0, hash));
        }

        if (key == "data_dir") c.data_dir = resolve(base_dir, value);
        else if (key == "registry") c.registry = resolve(base_dir, value);
        else if (key == "blueprint_root") c.blueprint_root = resolve(base_dir, value);
        else if (key == "telemetry_log") c.telemetry_log = resolve(base_dir, value);
        else if (key == "sandbox_root") c.sandbox_root = resolve(base_dir, value);
        else if (key == "catalog") c.catalog = resolve(base_dir, value);
        else if (key == "deterministic") {
            if (value != "true" && value != "false") throw ValidationError(where() + "deterministic must be true or false");
            c.deterministic = value == "true";
        } else if (key == "listen") {
            const auto colon = value.rfind(':');
            if (colon == std::string::npos) throw ValidationError(where() + "listen must be host:port");
            c.listen_host = value.substr(0, colon);
            try {
                std::size_t used = 0;
                c.listen_port = std::stoi(value.substr(colon + 1), &used);
                if (used != value.size() - colon - 1 || c.listen_port < 0 || c.listen_port > 65535) throw 0;
            } catch (...) {
                throw ValidationError(where() + "bad port in '" + value + "'");
            }
        } else if (key.rfind("runtime.", 0) == 0 && key.size() > 8) {
            c.runtimes[key.substr(8)] = value;
        } else {
            throw ValidationError(where() + "unknown key '" + key + "'");
        }
    }
    if (c.data_dir.empty()) throw ValidationError("agentd config: data_dir is required");
    return c;
}

DaemonConfig load_daemon_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_daemon_config(ss.str(), fs::absolute(path).parent_path());
}

Daemon::Daemon(DaemonConfig config) : config_(std::move(config)) {
    fs::create_directories(config_.data_dir);
    SandboxConfig sc;
    sc.root_dir = config_.sandbox_root;
    sc.runtimes = default_runtimes();
    for (const auto& [tag, interp] : config_.runtimes) sc.runtimes[tag] = interp;
    if (!config_.catalog.empty()) sc.catalog = load_catalog(config_.catalog.string());
    sandbox_ = std::make_unique<Sandbox>(std::move(sc));
    ids_ = std::make_unique<IdGenerator>(config_.deterministic, 1);
    telemetry_ = std::make_unique<TelemetryLog>(
        (config_.telemetry_log.empty() ? config_.data_dir / "telemetry.log" : config_.telemetry_log).string());
    ExecutorOptions eo;
    eo.sandbox = sandbox_.get();
    eo.telemetry = telemetry_.get();
    eo.ids = ids_.get();
    executor_ = std::make_unique<Executor>(eo);
    agents_ = std::make_unique<AgentRegistry>(sandbox_.get());
    if (!config_.registry.empty()) agents_->load_file(config_.registry, config_.blueprint_root);
    control_ = std::make_unique<ControlLayer>(ControlOptions{config_.data_dir, config_.deterministic}, *agents_,
                                              *executor_, telemetry_.get());
}

Daemon::~Daemon() {
    if (control_) control_->shutdown();
}

}  // namespace bprun
