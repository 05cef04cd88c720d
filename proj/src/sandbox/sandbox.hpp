#pragma once

// Child-process sandboxes for blueprint programs.
//
// Guarantees, in order of strength on Linux when the engine runs as root:
//   - scrubbed environment: AGENT_* variables passed by the engine plus a
//     pinned PATH and HOME, nothing inherited;
//   - per-execution scratch directory (mode 0700, owned by a per-execution uid)
//     that is the working directory and is removed at reap;
//   - read-only staged copy of the blueprint directory;
//   - a fresh network namespace, so only the engine's unix socket is reachable;
//   - its own process group, killed and reaped as a unit.
// Without root the uid switch is skipped and the network policy is reported
// as advisory when no namespace can be created.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <sys/types.h>

#include <json.hpp>

#include "protocol/channel.hpp"
#include "sandbox/manifest.hpp"
#include "sandbox/quota.hpp"

namespace bprun {

enum class NetworkPolicy { deny, engine_socket_only };

std::string_view to_string(NetworkPolicy policy);

struct NetworkDescriptor {
    NetworkPolicy policy = NetworkPolicy::engine_socket_only;
    bool enforced = false;  // false means advisory only
    std::string mechanism;  // "netns" or "none"

    nlohmann::json to_json() const;
};

struct SandboxSpec {
    std::string runtime;
    std::string entry_file;                    // relative to blueprint_dir
    std::filesystem::path blueprint_dir;
    std::map<std::string, std::string> env;    // AGENT_* only
    NetworkPolicy network = NetworkPolicy::engine_socket_only;
    QuotaSpec limits;
};

struct SandboxConfig {
    std::filesystem::path root_dir;  // parent of per-execution directories
    // runtime tag -> interpreter path; an empty path executes the entry file directly
    std::map<std::string, std::string> runtimes;
    std::optional<DependencyCatalog> catalog;
    bool drop_privileges = true;  // only effective when running as root
    uid_t uid_base = 62000;
    std::uint32_t uid_span = 1000;
};

// Default runtime table: python3, node and the engine-internal native tag.
std::map<std::string, std::string> default_runtimes();

// A prepared-then-started sandbox. Destruction kills and reaps the process
// tree and deletes the per-execution directory.
class SandboxProcess {
public:
    ~SandboxProcess();
    SandboxProcess(const SandboxProcess&) = delete;
    SandboxProcess& operator=(const SandboxProcess&) = delete;

    const std::filesystem::path& exec_dir() const { return exec_dir_; }
    const std::filesystem::path& scratch_dir() const { return scratch_dir_; }
    const std::filesystem::path& staged_blueprint_dir() const { return blueprint_dir_; }
    const std::string& socket_path() const { return socket_path_; }
    uid_t uid() const { return uid_; }
    // Set only when the child runs under its own uid.
    std::optional<uid_t> owned_uid() const { return switch_uid_ ? std::optional<uid_t>(uid_) : std::nullopt; }

    // Listening socket for the protocol connection (owned by the caller after take).
    UniqueFd take_listener() { return std::move(listener_); }

    // Starts the child with `env` (must only contain AGENT_* keys).
    // Throws EngineError(fatal) when exec fails.
    void start(const std::map<std::string, std::string>& env);

    pid_t pid() const { return pid_; }
    pid_t pgid() const { return pid_; }
    int stdout_fd() const { return stdout_.get(); }
    int stderr_fd() const { return stderr_.get(); }
    UniqueFd take_stdout() { return std::move(stdout_); }
    UniqueFd take_stderr() { return std::move(stderr_); }

    const NetworkDescriptor& network() const { return network_; }
    std::vector<std::string> environment() const { return env_list_; }

    // SIGKILL to the whole tree. Safe to call repeatedly and from other threads.
    void kill_tree();

    // Non-blocking check; returns the wait status once the leader has exited.
    std::optional<int> poll_exit();

    // Blocks until the leader exits or the timeout passes.
    std::optional<int> wait_exit(std::chrono::milliseconds timeout);

    // Kills, reaps every member and waits (up to 2 s) until no member remains.
    // Returns true when the tree is fully gone.
    bool reap();

private:
    friend class Sandbox;
    SandboxProcess() = default;

    SandboxSpec spec_;
    std::string interpreter_;
    std::filesystem::path exec_dir_;
    std::filesystem::path scratch_dir_;
    std::filesystem::path blueprint_dir_;
    std::string socket_path_;
    UniqueFd listener_;
    UniqueFd stdout_;
    UniqueFd stderr_;
    uid_t uid_ = 0;
    bool switch_uid_ = false;
    pid_t pid_ = -1;
    std::optional<int> exit_status_;
    NetworkDescriptor network_;
    std::vector<std::string> env_list_;
    bool reaped_ = false;
};

class Sandbox {
public:
    explicit Sandbox(SandboxConfig config);
    ~Sandbox();
    Sandbox(const Sandbox&) = delete;
    Sandbox& operator=(const Sandbox&) = delete;

    bool supports(const std::string& runtime) const { return config_.runtimes.count(runtime) != 0; }
    const SandboxConfig& config() const { return config_; }

    // Validates the launch request and its blueprint.manifest (if present), stages the
    // blueprint copy, creates the scratch directory and the listening socket.
    // Throws ValidationError for unsupported runtimes or manifest violations,
    // EngineError(fatal) for missing interpreters or unreadable entry files.
    std::unique_ptr<SandboxProcess> prepare(const SandboxSpec& spec, const std::string& exec_id);

private:
    SandboxConfig config_;
    bool owns_root_ = false;
    std::uint32_t next_uid_ = 0;
};

// Probe whether this host can give children a private network namespace.
bool network_isolation_available();

// Marks this process as a child subreaper so orphaned sandbox descendants can
// be reaped by process group.
void become_subreaper();

}  // namespace bprun
