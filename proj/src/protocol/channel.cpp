#include "protocol/channel.hpp"

#include <cerrno>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

namespace bprun {

namespace {

sockaddr_un make_address(const std::string& path) {
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) {
        throw EngineError(ErrorClass::fatal, "socket path too long: " + path);
    }
    std::memcpy(addr.sun_path, path.c_str(), path.size() + 1);
    return addr;
}

[[noreturn]] void throw_errno(const std::string& what) {
    throw EngineError(ErrorClass::fatal, what + ": " + std::strerror(errno));
}

}  // namespace

UniqueFd& UniqueFd::operator=(UniqueFd&& other) noexcept {
    if (this != &other) reset(other.release());
    return *this;
}

void UniqueFd::reset(int fd) noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
}

UniqueFd listen_unix(const std::string& path) {
    auto addr = make_address(path);
    UniqueFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw_errno("socket");
    ::unlink(path.c_str());
    if (::bind(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw_errno("bind " + path);
    }
    if (::listen(fd.get(), 4) != 0) throw_errno("listen");
    return fd;
}

UniqueFd connect_unix(const std::string& path) {
    auto addr = make_address(path);
    UniqueFd fd(::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0));
    if (!fd) throw_errno("socket");
    if (::connect(fd.get(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        throw_errno("connect " + path);
    }
    return fd;
}

UniqueFd accept_unix(int listen_fd, std::chrono::milliseconds timeout) {
    pollfd pfd{listen_fd, POLLIN, 0};
    int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (rc < 0 && errno != EINTR) throw_errno("poll");
    if (rc <= 0) return {};
    UniqueFd fd(::accept4(listen_fd, nullptr, nullptr, SOCK_CLOEXEC));
    if (!fd && errno != EAGAIN && errno != EINTR) throw_errno("accept");
    return fd;
}

void FrameChannel::send(const Frame& frame) {
    const auto bytes = encode_frame(frame);
    std::size_t written = 0;
    while (written < bytes.size()) {
        ssize_t n = ::send(fd_.get(), bytes.data() + written, bytes.size() - written, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw_errno("send frame");
        }
        written += static_cast<std::size_t>(n);
    }
}

FrameChannel::Received FrameChannel::receive(std::chrono::milliseconds timeout) {
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    for (;;) {
        if (auto decoded = try_decode_frame(buffer_)) {
            buffer_.erase(buffer_.begin(),
                          buffer_.begin() + static_cast<std::ptrdiff_t>(decoded->consumed));
            return {Status::frame, std::move(decoded->frame)};
        }

        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() < 0) remaining = std::chrono::milliseconds(0);
        pollfd pfd{fd_.get(), POLLIN, 0};
        int rc = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (rc < 0) {
            if (errno == EINTR) continue;
            throw_errno("poll");
        }
        if (rc == 0) return {Status::timeout, {}};

        std::uint8_t chunk[64 * 1024];
        ssize_t n = ::recv(fd_.get(), chunk, sizeof(chunk), 0);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            if (errno == ECONNRESET) n = 0;
            else throw_errno("recv");
        }
        if (n == 0) {
            if (buffer_.empty()) return {Status::closed, {}};
            throw ProtocolError("connection closed inside a frame");
        }
        buffer_.insert(buffer_.end(), chunk, chunk + n);
    }
}

}  // namespace bprun
