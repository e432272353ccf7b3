// SPDX-License-Identifier: Apache-2.0

#include "tip/protocol/transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "tip/common/error.hpp"

namespace tip::protocol {

std::pair<std::unique_ptr<InProcChannel>, std::unique_ptr<InProcChannel>>
InProcChannel::make_pair() {
    auto qa = std::make_shared<Queue>();
    auto qb = std::make_shared<Queue>();
    std::unique_ptr<InProcChannel> a(new InProcChannel(qa, qb));
    std::unique_ptr<InProcChannel> b(new InProcChannel(qb, qa));
    return {std::move(a), std::move(b)};
}

void InProcChannel::send(const SessionMessage& m) {
    std::vector<std::uint8_t> frame = serialize_message(m);
    {
        std::lock_guard<std::mutex> lock(out_->mu);
        out_->frames.push_back(std::move(frame));
    }
    out_->cv.notify_one();
}

SessionMessage InProcChannel::recv() {
    std::unique_lock<std::mutex> lock(in_->mu);
    in_->cv.wait(lock, [&] { return !in_->frames.empty(); });
    std::vector<std::uint8_t> frame = std::move(in_->frames.front());
    in_->frames.pop_front();
    lock.unlock();
    return deserialize_message(frame);
}

TcpChannel::TcpChannel(int fd, int timeout_ms)
    : fd_(fd), timeout_ms_(timeout_ms) {
    int one = 1;
    setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

TcpChannel::~TcpChannel() {
    if (fd_ >= 0) ::close(fd_);
}

void TcpChannel::send(const SessionMessage& m) {
    const std::vector<std::uint8_t> frame = serialize_message(m);
    std::uint8_t len[4] = {
        static_cast<std::uint8_t>(frame.size() >> 24),
        static_cast<std::uint8_t>(frame.size() >> 16),
        static_cast<std::uint8_t>(frame.size() >> 8),
        static_cast<std::uint8_t>(frame.size()),
    };
    auto write_all = [&](const std::uint8_t* p, std::size_t n) {
        while (n > 0) {
            const ssize_t w = ::write(fd_, p, n);
            if (w < 0) {
                if (errno == EINTR) continue;
                fail(ErrorCode::IoError,
                     std::string("socket write: ") + std::strerror(errno));
            }
            p += w;
            n -= static_cast<std::size_t>(w);
        }
    };
    write_all(len, 4);
    write_all(frame.data(), frame.size());
}

void TcpChannel::read_exact(std::uint8_t* out, std::size_t n) {
    while (n > 0) {
        struct pollfd pfd{fd_, POLLIN, 0};
        const int pr = ::poll(&pfd, 1, timeout_ms_);
        if (pr == 0)
            fail(ErrorCode::TransportTimeout, "timed out waiting for frame");
        if (pr < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::IoError,
                 std::string("poll: ") + std::strerror(errno));
        }
        const ssize_t r = ::read(fd_, out, n);
        if (r == 0)
            fail(ErrorCode::IoError, "peer closed the connection");
        if (r < 0) {
            if (errno == EINTR) continue;
            fail(ErrorCode::IoError,
                 std::string("socket read: ") + std::strerror(errno));
        }
        out += r;
        n -= static_cast<std::size_t>(r);
    }
}

SessionMessage TcpChannel::recv() {
    std::uint8_t len[4];
    read_exact(len, 4);
    const std::uint32_t n = (static_cast<std::uint32_t>(len[0]) << 24) |
                            (static_cast<std::uint32_t>(len[1]) << 16) |
                            (static_cast<std::uint32_t>(len[2]) << 8) |
                            static_cast<std::uint32_t>(len[3]);
    if (n > (1u << 30)) fail(ErrorCode::MalformedFrame, "oversized frame");
    std::vector<std::uint8_t> frame(n);
    read_exact(frame.data(), n);
    return deserialize_message(frame);
}

namespace {

sockaddr_in make_addr(const std::string& host, int port) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        fail(ErrorCode::InvalidParams, "bad IPv4 address " + host);
    return addr;
}

}  // namespace

int tcp_listen(const std::string& host, int port) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) fail(ErrorCode::IoError, "socket() failed");
    int one = 1;
    setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr = make_addr(host, port);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        ::close(fd);
        fail(ErrorCode::IoError,
             std::string("bind: ") + std::strerror(errno));
    }
    if (::listen(fd, 8) != 0) {
        ::close(fd);
        fail(ErrorCode::IoError, "listen() failed");
    }
    return fd;
}

int tcp_accept(int listen_fd, int timeout_ms) {
    struct pollfd pfd{listen_fd, POLLIN, 0};
    const int pr = ::poll(&pfd, 1, timeout_ms);
    if (pr == 0)
        fail(ErrorCode::TransportTimeout, "timed out waiting for peer");
    const int fd = ::accept(listen_fd, nullptr, nullptr);
    if (fd < 0) fail(ErrorCode::IoError, "accept() failed");
    return fd;
}

int tcp_connect(const std::string& host, int port, int timeout_ms) {
    sockaddr_in addr = make_addr(host, port);
    // bounded retry keeps role startup order flexible
    const int attempts = timeout_ms > 100 ? timeout_ms / 100 : 1;
    for (int i = 0; i < attempts; ++i) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) fail(ErrorCode::IoError, "socket() failed");
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) ==
            0)
            return fd;
        ::close(fd);
        ::usleep(100000);
    }
    fail(ErrorCode::TransportTimeout, "could not connect to " + host);
}

int tcp_local_port(int fd) {
    sockaddr_in addr{};
    socklen_t len = sizeof addr;
    if (::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) != 0)
        fail(ErrorCode::IoError, "getsockname() failed");
    return ntohs(addr.sin_port);
}

}  // namespace tip::protocol
