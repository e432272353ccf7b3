// SPDX-License-Identifier: Apache-2.0

#ifndef TIP_PROTOCOL_TRANSPORT_HPP
#define TIP_PROTOCOL_TRANSPORT_HPP

#include <condition_variable>
#include <deque>
#include <memory>
#include <mutex>
#include <string>
#include <utility>

#include "tip/protocol/message.hpp"

namespace tip::protocol {

/// Point-to-point ordered message channel between two roles. recv blocks
/// until a frame arrives or the channel times out (TransportTimeout).
class Channel {
public:
    virtual ~Channel() = default;
    virtual void send(const SessionMessage& m) = 0;
    virtual SessionMessage recv() = 0;
};

/// Thread-safe in-process queue pair; no timeout (a session is always
/// driven to completion by its peer thread).
class InProcChannel final : public Channel {
public:
    static std::pair<std::unique_ptr<InProcChannel>,
                     std::unique_ptr<InProcChannel>>
    make_pair();

    void send(const SessionMessage& m) override;
    SessionMessage recv() override;

private:
    struct Queue {
        std::mutex mu;
        std::condition_variable cv;
        std::deque<std::vector<std::uint8_t>> frames;
    };
    InProcChannel(std::shared_ptr<Queue> out, std::shared_ptr<Queue> in)
        : out_(std::move(out)), in_(std::move(in)) {}
    std::shared_ptr<Queue> out_, in_;
};

/// Length-prefixed framing over a TCP socket: 4-byte big-endian frame
/// length, then the serialized SessionMessage. recv enforces the timeout.
class TcpChannel final : public Channel {
public:
    explicit TcpChannel(int fd, int timeout_ms = 30000);
    ~TcpChannel() override;
    TcpChannel(const TcpChannel&) = delete;
    TcpChannel& operator=(const TcpChannel&) = delete;

    void send(const SessionMessage& m) override;
    SessionMessage recv() override;

private:
    void read_exact(std::uint8_t* out, std::size_t n);
    int fd_;
    int timeout_ms_;
};

int tcp_listen(const std::string& host, int port);          // returns fd
int tcp_accept(int listen_fd, int timeout_ms = 30000);      // returns fd
int tcp_connect(const std::string& host, int port, int timeout_ms = 30000);
int tcp_local_port(int fd);  // port a listening fd is bound to

}  // namespace tip::protocol

#endif  // TIP_PROTOCOL_TRANSPORT_HPP
