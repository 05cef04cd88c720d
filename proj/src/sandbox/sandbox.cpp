#include "sandbox/sandbox.hpp"

#include <atomic>
#include <mutex>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <thread>

#include <fcntl.h>
#include <grp.h>
#include <sched.h>
#include <signal.h>
#include <sys/prctl.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include "protocol/error.hpp"
#include "sandbox/proc_stats.hpp"

namespace bprun {

namespace fs = std::filesystem;

namespace {

// fs::copy holds non-CLOEXEC write fds; a fork in another thread meanwhile
// would leak them into that child and make our exec fail with ETXTBSY.
std::mutex g_stage_mu;

constexpr const char* kPinnedPath = "/usr/local/bin:/usr/bin:/bin";

// Child-side failure report: which setup step failed and errno.
struct SpawnFailure {
    std::int32_t step;
    std::int32_t err;
};

constexpr std::int32_t kStepUid = 1;
constexpr std::int32_t kStepChdir = 2;
constexpr std::int32_t kStepStdio = 3;
constexpr std::int32_t kStepExec = 4;

const char* step_name(std::int32_t step) {
    switch (step) {
        case kStepUid: return "privilege drop";
        case kStepChdir: return "chdir to scratch";
        case kStepStdio: return "stdio setup";
        case kStepExec: return "exec";
    }
    return "setup";
}

void make_read_only(const fs::path& root) {
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (ec) break;
        const auto& p = it->path();
        if (it->is_directory()) {
            ::chmod(p.c_str(), 0555);
        } else {
            struct stat st{};
            if (::stat(p.c_str(), &st) == 0) ::chmod(p.c_str(), (st.st_mode & 0111) ? 0555 : 0444);
        }
    }
    ::chmod(root.c_str(), 0555);
}

void remove_tree(const fs::path& root) {
    std::error_code ec;
    if (!fs::exists(root, ec)) return;
    ::chmod(root.c_str(), 0700);
    for (auto it = fs::recursive_directory_iterator(root, ec); it != fs::recursive_directory_iterator();
         it.increment(ec)) {
        if (ec) break;
        if (it->is_directory(ec)) ::chmod(it->path().c_str(), 0700);
    }
    fs::remove_all(root, ec);
}

bool path_within(const fs::path& child, const fs::path& parent) {
    auto c = fs::weakly_canonical(child).string();
    auto p = fs::weakly_canonical(parent).string();
    return c.size() > p.size() && c.compare(0, p.size(), p) == 0 && c[p.size()] == '/';
}

void apply_limits(const QuotaSpec& q) {
    rlimit rl{};
    const auto cpu = static_cast<rlim_t>(std::ceil(q.cpu_seconds));
    rl.rlim_cur = cpu + 1;
    rl.rlim_max = cpu + 2;
    ::setrlimit(RLIMIT_CPU, &rl);
    rl.rlim_cur = rl.rlim_max = 0;
    ::setrlimit(RLIMIT_CORE, &rl);
    rl.rlim_cur = rl.rlim_max = 256;
    ::setrlimit(RLIMIT_NOFILE, &rl);
}

}  // namespace

std::string_view to_string(NetworkPolicy policy) {
    return policy == NetworkPolicy::deny ? "deny" : "engine_socket_only";
}

nlohmann::json NetworkDescriptor::to_json() const {
    return {{"policy", to_string(policy)},
            {"enforcement", enforced ? "enforced" : "advisory"},
            {"mechanism", mechanism}};
}

std::map<std::string, std::string> default_runtimes() {
    return {{"python3", "/usr/bin/python3"}, {"node", "/usr/bin/node"}, {"native", ""}};
}

void become_subreaper() { ::prctl(PR_SET_CHILD_SUBREAPER, 1, 0, 0, 0); }

bool network_isolation_available() {
    static const bool available = [] {
        pid_t pid = ::fork();
        if (pid == 0) _exit(::unshare(CLONE_NEWNET) == 0 ? 0 : 1);
        if (pid < 0) return false;
        int status = 0;
        ::waitpid(pid, &status, 0);
        return WIFEXITED(status) && WEXITSTATUS(status) == 0;
    }();
    return available;
}

Sandbox::Sandbox(SandboxConfig config) : config_(std::move(config)) {
    if (config_.root_dir.empty()) {
        static std::atomic<unsigned> instances{0};
        config_.root_dir = fs::temp_directory_path() /
                           ("bprun-" + std::to_string(::getpid()) + "-" + std::to_string(instances++));
        owns_root_ = true;
    }
    fs::create_directories(config_.root_dir);
    ::chmod(config_.root_dir.c_str(), 0711);
}

Sandbox::~Sandbox() {
    if (owns_root_) {
        std::error_code ec;
        fs::remove(config_.root_dir, ec);  // only succeeds once every execution is reaped
    }
}

std::unique_ptr<SandboxProcess> Sandbox::prepare(const SandboxSpec& spec, const std::string& exec_id) {
    if (!supports(spec.runtime)) {
        throw ValidationError("unsupported runtime '" + spec.runtime + "'");
    }
    spec.limits.validate();
    for (const auto& [key, _] : spec.env) {
        if (key.rfind("AGENT_", 0) != 0) throw ValidationError("environment variable " + key + " is not allowlisted");
    }

    const fs::path entry = spec.blueprint_dir / spec.entry_file;
    if (spec.entry_file.empty() || !path_within(entry, spec.blueprint_dir) || !fs::is_regular_file(entry) ||
        ::access(entry.c_str(), R_OK) != 0) {
        throw EngineError(ErrorClass::fatal, "entry file unreadable: " + entry.string());
    }
    const std::string interpreter = config_.runtimes.at(spec.runtime);
    if (!interpreter.empty() && ::access(interpreter.c_str(), X_OK) != 0) {
        throw EngineError(ErrorClass::fatal, "config: runtime binary missing for '" + spec.runtime + "': " + interpreter);
    }

    const fs::path manifest_path = spec.blueprint_dir / "blueprint.manifest";
    if (fs::exists(manifest_path)) {
        auto manifest = load_manifest(manifest_path.string());
        if (manifest.runtime != spec.runtime) {
            throw ValidationError("blueprint.manifest declares runtime '" + manifest.runtime + "' but the agent uses '" +
                                  spec.runtime + "'");
        }
        DependencyCatalog empty;
        resolve_manifest(manifest, config_.catalog ? *config_.catalog : empty);
    }

    std::unique_ptr<SandboxProcess> proc(new SandboxProcess());
    proc->spec_ = spec;
    proc->interpreter_ = interpreter;
    proc->exec_dir_ = config_.root_dir / exec_id;
    proc->blueprint_dir_ = proc->exec_dir_ / "blueprint";
    proc->scratch_dir_ = proc->exec_dir_ / "scratch";
    proc->socket_path_ = (proc->exec_dir_ / "rpc.sock").string();
    proc->switch_uid_ = config_.drop_privileges && ::geteuid() == 0;
    if (proc->switch_uid_) {
        static std::atomic<std::uint32_t> counter{0};
        proc->uid_ = config_.uid_base + (counter++ % config_.uid_span);
    } else {
        proc->uid_ = ::geteuid();
    }

    remove_tree(proc->exec_dir_);
    fs::create_directories(proc->exec_dir_);
    ::chmod(proc->exec_dir_.c_str(), 0711);
    {
        std::lock_guard lock(g_stage_mu);
        fs::copy(spec.blueprint_dir, proc->blueprint_dir_, fs::copy_options::recursive);
    }
    make_read_only(proc->blueprint_dir_);
    fs::create_directory(proc->scratch_dir_);
    ::chmod(proc->scratch_dir_.c_str(), 0700);

    proc->listener_ = listen_unix(proc->socket_path_);
    if (proc->switch_uid_) {
        if (::chown(proc->scratch_dir_.c_str(), proc->uid_, proc->uid_) != 0 ||
            ::chown(proc->socket_path_.c_str(), proc->uid_, proc->uid_) != 0) {
            throw EngineError(ErrorClass::fatal, std::string("chown for sandbox uid failed: ") + std::strerror(errno));
        }
    }
    ::chmod(proc->socket_path_.c_str(), 0600);
    return proc;
}

SandboxProcess::~SandboxProcess() {
    if (pid_ > 0 && !reaped_) {
        reap();
    } else if (!reaped_) {
        remove_tree(exec_dir_);
    }
}

void SandboxProcess::start(const std::map<std::string, std::string>& env) {
    for (const auto& [key, value] : env) {
        if (key.rfind("AGENT_", 0) != 0) throw ValidationError("environment variable " + key + " is not allowlisted");
        env_list_.push_back(key + "=" + value);
    }
    env_list_.push_back(std::string("HOME=") + scratch_dir_.string());
    env_list_.push_back(std::string("PATH=") + kPinnedPath);
    std::sort(env_list_.begin(), env_list_.end());

    const std::string entry = (blueprint_dir_ / spec_.entry_file).string();
    std::vector<std::string> args;
    if (!interpreter_.empty()) args.push_back(interpreter_);
    args.push_back(entry);

    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    std::vector<char*> envp;
    for (auto& e : env_list_) envp.push_back(e.data());
    envp.push_back(nullptr);

    int out_pipe[2];
    int err_pipe[2];
    int status_pipe[2];
    if (::pipe2(out_pipe, O_CLOEXEC) != 0 || ::pipe2(err_pipe, O_CLOEXEC) != 0 ||
        ::pipe2(status_pipe, O_CLOEXEC) != 0) {
        throw EngineError(ErrorClass::fatal, std::string("pipe: ") + std::strerror(errno));
    }
    UniqueFd out_r(out_pipe[0]), out_w(out_pipe[1]);
    UniqueFd err_r(err_pipe[0]), err_w(err_pipe[1]);
    UniqueFd status_r(status_pipe[0]), status_w(status_pipe[1]);

    const std::string scratch = scratch_dir_.string();
    const bool switch_uid = switch_uid_;
    const uid_t uid = uid_;
    const QuotaSpec limits = spec_.limits;

    std::unique_lock stage_lock(g_stage_mu);
    const pid_t pid = ::fork();
    if (pid < 0) throw EngineError(ErrorClass::fatal, std::string("fork: ") + std::strerror(errno));

    if (pid == 0) {
        // Child: async-signal-safe calls only from here on.
        const int sfd = status_w.get();
        auto report = [sfd](std::int32_t step) {
            SpawnFailure f{step, errno};
            [[maybe_unused]] auto n = ::write(sfd, &f, sizeof(f));
            _exit(127);
        };
        ::setsid();
        const char netns = ::unshare(CLONE_NEWNET) == 0 ? '1' : '0';
        [[maybe_unused]] auto n = ::write(sfd, &netns, 1);
        apply_limits(limits);
        if (switch_uid) {
            if (::setgroups(0, nullptr) != 0 || ::setgid(uid) != 0 || ::setuid(uid) != 0) report(kStepUid);
        }
        if (::chdir(scratch.c_str()) != 0) report(kStepChdir);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull < 0 || ::dup2(devnull, 0) < 0 || ::dup2(out_w.get(), 1) < 0 || ::dup2(err_w.get(), 2) < 0) {
            report(kStepStdio);
        }
        ::close_range(3, ~0U, CLOSE_RANGE_CLOEXEC);
        ::execve(argv[0], argv.data(), envp.data());
        report(kStepExec);
    }

    stage_lock.unlock();
    pid_ = pid;
    status_w.reset();
    out_w.reset();
    err_w.reset();

    char netns = '0';
    ssize_t got = ::read(status_r.get(), &netns, 1);
    network_.policy = spec_.network;
    network_.enforced = got == 1 && netns == '1';
    network_.mechanism = network_.enforced ? "netns" : "none";

    SpawnFailure failure{};
    std::size_t have = 0;
    while (have < sizeof(failure)) {
        ssize_t r = ::read(status_r.get(), reinterpret_cast<char*>(&failure) + have, sizeof(failure) - have);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) break;
        have += static_cast<std::size_t>(r);
    }
    if (have == sizeof(failure)) {
        wait_exit(std::chrono::milliseconds(2000));
        reaped_ = true;
        remove_tree(exec_dir_);
        throw EngineError(ErrorClass::fatal, std::string("sandbox ") + step_name(failure.step) +
                                                 " failed: " + std::strerror(failure.err));
    }
    stdout_ = std::move(out_r);
    stderr_ = std::move(err_r);
}

void SandboxProcess::kill_tree() {
    if (pid_ <= 0 || reaped_) return;
    ::kill(-pid_, SIGKILL);
    for (const auto& p : sandbox_members(pid_, pid_, scan_processes(), owned_uid())) {
        if (p.pid != ::getpid()) ::kill(p.pid, SIGKILL);
    }
}

std::optional<int> SandboxProcess::poll_exit() {
    if (exit_status_) return exit_status_;
    if (pid_ <= 0) return std::nullopt;
    int status = 0;
    pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) exit_status_ = status;
    else if (r < 0 && errno == ECHILD) exit_status_ = 0;
    return exit_status_;
}

std::optional<int> SandboxProcess::wait_exit(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto s = poll_exit()) return s;
        if (std::chrono::steady_clock::now() >= deadline) return std::nullopt;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
}

bool SandboxProcess::reap() {
    if (reaped_) return true;
    bool gone = true;
    if (pid_ > 0) {
        kill_tree();
        wait_exit(std::chrono::milliseconds(2000));
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(2);
        for (;;) {
            int status = 0;
            while (::waitpid(-pid_, &status, WNOHANG) > 0) {
            }
            auto members = sandbox_members(pid_, pid_, scan_processes(), owned_uid());
            // Zombies are dead already; collect the ones reparented to us.
            std::erase_if(members, [](const ProcessSample& p) {
                if (p.state != 'Z' && p.state != 'X') return false;
                int st = 0;
                ::waitpid(p.pid, &st, WNOHANG);
                return true;
            });
            if (members.empty()) break;
            if (std::chrono::steady_clock::now() >= deadline) {
                gone = false;
                break;
            }
            for (const auto& p : members) ::kill(p.pid, SIGKILL);
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    reaped_ = true;
    remove_tree(exec_dir_);
    return gone;
}

}  // namespace bprun
