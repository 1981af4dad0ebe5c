#pragma once

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>

namespace geomq {

class NetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace net_detail {

inline void setNoDelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

}  // namespace net_detail

/// Blocking TCP stream, move-only, closed on destruction. Reads and writes
/// may run on different threads; shutdownBoth() from a third thread unblocks
/// both.
class TcpStream {
public:
    TcpStream() = default;
    explicit TcpStream(int fd) : fd_(fd) {}
    TcpStream(TcpStream&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    TcpStream& operator=(TcpStream&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = std::exchange(other.fd_, -1);
        }
        return *this;
    }
    TcpStream(const TcpStream&) = delete;
    TcpStream& operator=(const TcpStream&) = delete;
    ~TcpStream() { close(); }

    static TcpStream connectTo(const std::string& host, uint16_t port,
                               std::chrono::milliseconds timeout) {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* result = nullptr;
        const std::string service = std::to_string(port);
        if (::getaddrinfo(host.c_str(), service.c_str(), &hints, &result) != 0) {
            throw NetError("cannot resolve " + host);
        }
        std::string lastError = "no addresses for " + host;
        for (addrinfo* ai = result; ai != nullptr; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            if (connectWithTimeout(fd, ai->ai_addr, ai->ai_addrlen, timeout)) {
                ::freeaddrinfo(result);
                net_detail::setNoDelay(fd);
                return TcpStream(fd);
            }
            lastError = std::strerror(errno);
            ::close(fd);
        }
        ::freeaddrinfo(result);
        throw NetError("connect to " + host + ":" + service + " failed: " + lastError);
    }

    /// Reads exactly n bytes. Returns false if the peer closed or the
    /// connection failed before all n arrived.
    bool readExactly(void* buf, size_t n) {
        char* p = static_cast<char*>(buf);
        while (n > 0) {
            const ssize_t got = ::recv(fd_, p, n, 0);
            if (got > 0) {
                p += got;
                n -= static_cast<size_t>(got);
                continue;
            }
            if (got < 0 && errno == EINTR) continue;
            return false;
        }
        return true;
    }

    bool writeAll(const void* buf, size_t n) {
        const char* p = static_cast<const char*>(buf);
        while (n > 0) {
            const ssize_t sent = ::send(fd_, p, n, MSG_NOSIGNAL);
            if (sent > 0) {
                p += sent;
                n -= static_cast<size_t>(sent);
                continue;
            }
            if (sent < 0 && errno == EINTR) continue;
            return false;
        }
        return true;
    }

    bool writeAll(const std::string& data) { return writeAll(data.data(), data.size()); }

    /// Unblocks any thread sitting in readExactly/writeAll on this stream.
    void shutdownBoth() {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void close() {
        if (fd_ >= 0) {
            ::close(fd_);
            fd_ = -1;
        }
    }

    bool valid() const { return fd_ >= 0; }
    int fd() const { return fd_; }

private:
    static bool connectWithTimeout(int fd, const sockaddr* addr, socklen_t len,
                                   std::chrono::milliseconds timeout) {
        const int flags = ::fcntl(fd, F_GETFL, 0);
        ::fcntl(fd, F_SETFL, flags | O_NONBLOCK);
        int rc = ::connect(fd, addr, len);
        if (rc != 0 && errno != EINPROGRESS) return false;
        if (rc != 0) {
            pollfd pfd{fd, POLLOUT, 0};
            rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
            if (rc <= 0) {
                errno = rc == 0 ? ETIMEDOUT : errno;
                return false;
            }
            int err = 0;
            socklen_t errLen = sizeof(err);
            ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &errLen);
            if (err != 0) {
                errno = err;
                return false;
            }
        }
        ::fcntl(fd, F_SETFL, flags);
        return true;
    }

    int fd_{-1};
};

/// Listening socket bound to all interfaces. Port 0 picks an ephemeral port,
/// reported by port().
class TcpListener {
public:
    TcpListener() = default;
    TcpListener(TcpListener&& other) noexcept
        : fd_(std::exchange(other.fd_, -1)), port_(other.port_) {}
    TcpListener& operator=(TcpListener&& other) noexcept {
        if (this != &other) {
            close();
            fd_ = std::exchange(other.fd_, -1);
            port_ = other.port_;
        }
        return *this;
    }
    TcpListener(const TcpListener&) = delete;
    TcpListener& operator=(const TcpListener&) = delete;
    ~TcpListener() { close(); }

    static TcpListener bindAny(uint16_t port) {
        const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd < 0) throw NetError(std::string("socket: ") + std::strerror(errno));
        int one = 1;
        ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        addr.sin_port = htons(port);
        if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd);
            throw NetError("bind to port " + std::to_string(port) + " failed: " + err);
        }
        if (::listen(fd, 128) != 0) {
            const std::string err = std::strerror(errno);
            ::close(fd);
            throw NetError("listen failed: " + err);
        }
        socklen_t len = sizeof(addr);
        ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
        TcpListener listener;
        listener.fd_ = fd;
        listener.port_ = ntohs(addr.sin_port);
        return listener;
    }

    /// Blocks for the next connection; nullopt once the listener is closed.
    std::optional<TcpStream> accept() {
        while (true) {
            const int fd = ::accept(fd_, nullptr, nullptr);
            if (fd >= 0) {
                net_detail::setNoDelay(fd);
                return TcpStream(fd);
            }
            if (errno == EINTR) continue;
            return std::nullopt;
        }
    }

    /// Unblocks accept() and releases the port.
    void close() {
        if (fd_ >= 0) {
            ::shutdown(fd_, SHUT_RDWR);
            ::close(fd_);
            fd_ = -1;
        }
    }

    uint16_t port() const { return port_; }
    bool valid() const { return fd_ >= 0; }

private:
    int fd_{-1};
    uint16_t port_{0};
};

/// Splits "host:port"; the host part may be empty ("localhost" is assumed).
inline std::pair<std::string, uint16_t> parseHostPort(const std::string& text) {
    const size_t colon = text.rfind(':');
    if (colon == std::string::npos) throw NetError("expected host:port, got " + text);
    std::string host = text.substr(0, colon);
    if (host.empty()) host = "localhost";
    const std::string portText = text.substr(colon + 1);
    int port = 0;
    try {
        port = std::stoi(portText);
    } catch (const std::exception&) {
        throw NetError("bad port in " + text);
    }
    if (port < 1 || port > 65535) throw NetError("port out of range in " + text);
    return {std::move(host), static_cast<uint16_t>(port)};
}

}  // namespace geomq
