#pragma once

#include <optional>

#include <cstdint>
#include <vector>

#include <sys/types.h>

namespace bprun {

struct ProcessSample {
    pid_t pid = 0;
    pid_t ppid = 0;
    pid_t pgrp = 0;
    char state = '?';
    double cpu_seconds = 0.0;  // utime + stime + reaped children
    std::uint64_t rss_bytes = 0;
    uid_t uid = static_cast<uid_t>(-1);  // owner of /proc/<pid>
};

// Snapshot of every process visible in /proc.
std::vector<ProcessSample> scan_processes();

// Processes belonging to a sandbox: members of `pgid`, every descendant of
// `leader` (children that moved to another group) and, when the sandbox runs
// under its own uid, anything owned by that uid (detached daemons whose
// parent already exited).
std::vector<ProcessSample> sandbox_members(pid_t leader, pid_t pgid, const std::vector<ProcessSample>& table,
                                           std::optional<uid_t> uid = std::nullopt);

struct GroupUsage {
    double cpu_seconds = 0.0;
    std::uint64_t rss_bytes = 0;
    std::size_t live = 0;  // non-zombie members
};

GroupUsage sample_sandbox(pid_t leader, pid_t pgid, std::optional<uid_t> uid = std::nullopt);

}  // namespace bprun
