#include "sandbox/proc_stats.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <dirent.h>
#include <sys/stat.h>
#include <unistd.h>

namespace bprun {

namespace {

bool read_stat(pid_t pid, ProcessSample& out) {
    std::ifstream in("/proc/" + std::to_string(pid) + "/stat");
    std::string line;
    if (!in || !std::getline(in, line)) return false;
    struct stat st {};
    if (::stat(("/proc/" + std::to_string(pid)).c_str(), &st) == 0) out.uid = st.st_uid;
    auto close = line.rfind(')');
    if (close == std::string::npos || close + 2 >= line.size()) return false;

    std::istringstream rest(line.substr(close + 2));
    // Fields after comm, numbered from 3 (state) in proc(5).
    std::string field;
    std::vector<std::string> f;
    while (rest >> field) f.push_back(field);
    if (f.size() < 22) return false;

    static const double ticks = static_cast<double>(::sysconf(_SC_CLK_TCK));
    static const long page = ::sysconf(_SC_PAGESIZE);

    out.pid = pid;
    out.state = f[0].empty() ? '?' : f[0][0];
    out.ppid = static_cast<pid_t>(std::atol(f[1].c_str()));
    out.pgrp = static_cast<pid_t>(std::atol(f[2].c_str()));
    const double utime = std::atof(f[11].c_str());
    const double stime = std::atof(f[12].c_str());
    const double cutime = std::atof(f[13].c_str());
    const double cstime = std::atof(f[14].c_str());
    out.cpu_seconds = (utime + stime + cutime + cstime) / ticks;
    out.rss_bytes = static_cast<std::uint64_t>(std::max(0L, std::atol(f[21].c_str()))) *
                    static_cast<std::uint64_t>(page);
    return true;
}

}  // namespace

std::vector<ProcessSample> scan_processes() {
    std::vector<ProcessSample> out;
    DIR* dir = ::opendir("/proc");
    if (dir == nullptr) return out;
    while (auto* entry = ::readdir(dir)) {
        char* end = nullptr;
        long pid = std::strtol(entry->d_name, &end, 10);
        if (end == entry->d_name || *end != '\0') continue;
        ProcessSample s;
        if (read_stat(static_cast<pid_t>(pid), s)) out.push_back(s);
    }
    ::closedir(dir);
    return out;
}

std::vector<ProcessSample> sandbox_members(pid_t leader, pid_t pgid, const std::vector<ProcessSample>& table,
                                           std::optional<uid_t> uid) {
    std::multimap<pid_t, const ProcessSample*> children;
    for (const auto& p : table) children.emplace(p.ppid, &p);

    std::set<pid_t> seen;
    std::vector<ProcessSample> out;
    for (const auto& p : table) {
        if (p.pgrp == pgid || p.pid == leader || (uid && p.uid == *uid)) {
            if (seen.insert(p.pid).second) out.push_back(p);
        }
    }
    std::vector<pid_t> frontier{leader};
    while (!frontier.empty()) {
        pid_t parent = frontier.back();
        frontier.pop_back();
        auto [lo, hi] = children.equal_range(parent);
        for (auto it = lo; it != hi; ++it) {
            if (seen.insert(it->second->pid).second) out.push_back(*it->second);
            frontier.push_back(it->second->pid);
        }
    }
    return out;
}

GroupUsage sample_sandbox(pid_t leader, pid_t pgid, std::optional<uid_t> uid) {
    GroupUsage usage;
    for (const auto& p : sandbox_members(leader, pgid, scan_processes(), uid)) {
        usage.cpu_seconds += p.cpu_seconds;
        usage.rss_bytes += p.rss_bytes;
        if (p.state != 'Z' && p.state != 'X') ++usage.live;
    }
    return usage;
}

}  // namespace bprun
