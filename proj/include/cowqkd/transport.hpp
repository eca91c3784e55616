#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include "cowqkd/wire.hpp"

namespace cowqkd::wire {

// Ordered reliable byte stream. The session layer provides no retransmission;
// any read failure is a protocol error at that layer.
class ByteStream {
public:
    virtual ~ByteStream() = default;
    virtual void write_all(const std::uint8_t* data, std::size_t n) = 0;
    // Reads exactly n bytes or returns false on timeout/eof.
    virtual bool read_all(std::uint8_t* data, std::size_t n,
                          std::chrono::milliseconds timeout) = 0;
    virtual void close() {}
};

inline void write_frame(ByteStream& s, Tag type, const std::vector<std::uint8_t>& payload) {
    auto bytes = encode_frame(type, payload);
    s.write_all(bytes.data(), bytes.size());
}

struct ReadResult {
    bool ok = false;
    WireFrame frame;
    std::string error;
};

inline ReadResult read_frame(ByteStream& s, std::chrono::milliseconds timeout) {
    ReadResult r;
    std::uint8_t head[5];
    if (!s.read_all(head, 5, timeout)) {
        r.error = "timeout or closed stream while reading frame header";
        return r;
    }
    const std::uint32_t len = (static_cast<std::uint32_t>(head[0]) << 24) |
                              (static_cast<std::uint32_t>(head[1]) << 16) |
                              (static_cast<std::uint32_t>(head[2]) << 8) |
                              static_cast<std::uint32_t>(head[3]);
    if (!known_tag(head[4])) {
        r.error = "unknown frame tag";
        return r;
    }
    r.frame.type = static_cast<Tag>(head[4]);
    r.frame.payload.resize(len);
    if (len && !s.read_all(r.frame.payload.data(), len, timeout)) {
        r.error = "truncated frame payload";
        return r;
    }
    r.ok = true;
    return r;
}

// ---------------------------------------------------------------------------
// In-process loopback
// ---------------------------------------------------------------------------

namespace detail {
struct PipeBuffer {
    std::mutex mu;
    std::condition_variable cv;
    std::deque<std::uint8_t> data;
    bool closed = false;
};
} // namespace detail

class LoopbackEnd : public ByteStream {
public:
    LoopbackEnd(std::shared_ptr<detail::PipeBuffer> rx, std::shared_ptr<detail::PipeBuffer> tx)
        : rx_(std::move(rx)), tx_(std::move(tx)) {}

    void write_all(const std::uint8_t* data, std::size_t n) override {
        std::lock_guard<std::mutex> lk(tx_->mu);
        if (tx_->closed) throw std::runtime_error("loopback: peer closed");
        tx_->data.insert(tx_->data.end(), data, data + n);
        tx_->cv.notify_all();
    }

    bool read_all(std::uint8_t* data, std::size_t n, std::chrono::milliseconds timeout) override {
        std::unique_lock<std::mutex> lk(rx_->mu);
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        while (rx_->data.size() < n) {
            if (rx_->closed) return false;
            if (rx_->cv.wait_until(lk, deadline) == std::cv_status::timeout &&
                rx_->data.size() < n)
                return false;
        }
        for (std::size_t i = 0; i < n; ++i) {
            data[i] = rx_->data.front();
            rx_->data.pop_front();
        }
        return true;
    }

    void close() override {
        {
            std::lock_guard<std::mutex> lk(tx_->mu);
            tx_->closed = true;
            tx_->cv.notify_all();
        }
        std::lock_guard<std::mutex> lk(rx_->mu);
        rx_->closed = true;
        rx_->cv.notify_all();
    }

private:
    std::shared_ptr<detail::PipeBuffer> rx_, tx_;
};

inline std::pair<std::unique_ptr<LoopbackEnd>, std::unique_ptr<LoopbackEnd>> make_loopback_pair() {
    auto a = std::make_shared<detail::PipeBuffer>();
    auto b = std::make_shared<detail::PipeBuffer>();
    return {std::make_unique<LoopbackEnd>(a, b), std::make_unique<LoopbackEnd>(b, a)};
}

// ---------------------------------------------------------------------------
// TCP
// ---------------------------------------------------------------------------

class TcpStream : public ByteStream {
public:
    explicit TcpStream(int fd) : fd_(fd) {}
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;
    ~TcpStream() override { close(); }

    static std::unique_ptr<TcpStream> connect(const std::string& host, std::uint16_t port) {
        int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw std::runtime_error("socket() failed");
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(port);
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
            ::close(fd);
            throw std::runtime_error("bad address: " + host);
        }
        if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd);
            throw std::runtime_error("connect() to " + host + " failed");
        }
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return std::make_unique<TcpStream>(fd);
    }

    void write_all(const std::uint8_t* data, std::size_t n) override {
        std::size_t off = 0;
        while (off < n) {
            const ssize_t w = ::send(fd_, data + off, n - off, MSG_NOSIGNAL);
            if (w <= 0) throw std::runtime_error("send() failed");
            off += static_cast<std::size_t>(w);
        }
    }

    bool read_all(std::uint8_t* data, std::size_t n, std::chrono::milliseconds timeout) override {
        timeval tv{};
        tv.tv_sec = static_cast<long>(timeout.count() / 1000);
        tv.tv_usec = static_cast<long>(timeout.count() % 1000) * 1000;
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
        std::size_t off = 0;
        while (off < n) {
            const ssize_t r = ::recv(fd_, data + off, n - off, 0);
            if (r <= 0) return false;
            off += static_cast<std::size_t>(r);
        }
        return true;
    }

    void close() override {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

private:
    int fd_;
};

class TcpListener {
public:
    explicit TcpListener(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw std::runtime_error("socket() failed");
        int one = 1;
        ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        addr.sin_port = htons(port);
        if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            ::close(fd_);
            throw std::runtime_error("bind() failed");
        }
        if (::listen(fd_, 1) != 0) {
            ::close(fd_);
            throw std::runtime_error("listen() failed");
        }
    }
    ~TcpListener() {
        if (fd_ >= 0) ::close(fd_);
    }

    std::uint16_t port() const {
        sockaddr_in addr{};
        socklen_t len = sizeof(addr);
        ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        return ntohs(addr.sin_port);
    }

    std::unique_ptr<TcpStream> accept() {
        const int c = ::accept(fd_, nullptr, nullptr);
        if (c < 0) throw std::runtime_error("accept() failed");
        int one = 1;
        ::setsockopt(c, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        return std::make_unique<TcpStream>(c);
    }

private:
    int fd_;
};

} // namespace cowqkd::wire
