#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "protocol/frame.hpp"

namespace bprun {

// Owning file descriptor.
class UniqueFd {
public:
    UniqueFd() = default;
    explicit UniqueFd(int fd) : fd_(fd) {}
    UniqueFd(const UniqueFd&) = delete;
    UniqueFd& operator=(const UniqueFd&) = delete;
    UniqueFd(UniqueFd&& other) noexcept : fd_(other.release()) {}
    UniqueFd& operator=(UniqueFd&& other) noexcept;
    ~UniqueFd() { reset(); }

    int get() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    int release() noexcept {
        int fd = fd_;
        fd_ = -1;
        return fd;
    }
    void reset(int fd = -1) noexcept;

private:
    int fd_ = -1;
};

UniqueFd listen_unix(const std::string& path);
UniqueFd connect_unix(const std::string& path);
// Returns an empty fd on timeout.
UniqueFd accept_unix(int listen_fd, std::chrono::milliseconds timeout);

// Framed, buffered connection. One reader and one writer at a time.
class FrameChannel {
public:
    enum class Status { frame, timeout, closed };

    struct Received {
        Status status = Status::timeout;
        Frame frame;
    };

    explicit FrameChannel(UniqueFd fd) : fd_(std::move(fd)) {}

    // Throws EngineError(fatal) when the peer is gone.
    void send(const Frame& frame);

    // Waits up to `timeout` for one complete frame. A clean EOF on a frame
    // boundary reports `closed`; EOF inside a frame throws ProtocolError.
    Received receive(std::chrono::milliseconds timeout);

    int fd() const noexcept { return fd_.get(); }
    void close() { fd_.reset(); }

private:
    UniqueFd fd_;
    std::vector<std::uint8_t> buffer_;
};

}  // namespace bprun
