#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "geomq/net.hpp"
#include "geomq/wire.hpp"

namespace geomq {

class ClientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One operation's request-to-ack measurement.
struct LatencySample {
    std::string opKind;     // connect | ping | subscribe | unsubscribe | publish
    int64_t tStartUs;       // wall clock, microseconds since the unix epoch
    int64_t latencyUs;      // steady-clock request-to-ack delta
    int64_t matchedCount;   // PUBACK match count; -1 for non-publish ops
};

/// A message delivered to this client, timestamped on receipt.
struct Delivery {
    std::string topic;
    std::string payload;
    std::optional<std::string> fenceWkt;
    int64_t receivedAtUs;  // wall clock, microseconds since the unix epoch
};

struct ClientOptions {
    std::chrono::milliseconds connectTimeout{5000};
    std::chrono::milliseconds requestTimeout{10000};
};

inline int64_t wallNowUs() {
    return std::chrono::duration_cast<std::chrono::microseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

/// Embeds a send timestamp in a payload's first 8 bytes (big-endian
/// microseconds) so a co-located receiver can compute delivery latency.
/// The payload must already be at least 8 bytes long.
inline void stampPayload(std::string& payload, int64_t sendUs) {
    for (int i = 0; i < 8; ++i) {
        payload[static_cast<size_t>(i)] =
            static_cast<char>((static_cast<uint64_t>(sendUs) >> (56 - 8 * i)) & 0xff);
    }
}

inline std::optional<int64_t> readPayloadStamp(std::string_view payload) {
    if (payload.size() < 8) return std::nullopt;
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
        v = (v << 8) | static_cast<uint8_t>(payload[static_cast<size_t>(i)]);
    }
    return static_cast<int64_t>(v);
}

/// Blocking protocol client. One thread drives requests; an internal reader
/// thread routes acks to the waiting request and queues deliveries. Each
/// request kind has a single outstanding slot, which the blocking API
/// guarantees by construction.
class Client {
public:
    struct PublishResult {
        ReasonCode reason{ReasonCode::InternalError};
        int64_t matched{0};
    };

    Client(const std::string& host, uint16_t port, std::string clientId, const Location& loc,
           ClientOptions opts = {})
        : clientId_(std::move(clientId)),
          opts_(opts),
          stream_(TcpStream::connectTo(host, port, opts.connectTimeout)) {
        reader_ = std::thread([this] { readerLoop(); });
        try {
            const ProtocolMessage ack =
                request(makeConnect(clientId_, loc), MessageKind::Connack, "connect");
            if (reasonOf(ack) != ReasonCode::Success) {
                throw ClientError(std::string("connect rejected: ") + reasonName(reasonOf(ack)));
            }
        } catch (...) {
            teardown();
            throw;
        }
    }

    ~Client() { teardown(); }
    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    const std::string& clientId() const { return clientId_; }

    ReasonCode ping(const Location& loc) {
        return reasonOf(request(makePing(loc), MessageKind::PingResp, "ping"));
    }

    ReasonCode subscribe(const std::string& filter, std::optional<std::string> fenceWkt) {
        return reasonOf(
            request(makeSubscribe(filter, std::move(fenceWkt)), MessageKind::Suback, "subscribe"));
    }

    ReasonCode unsubscribe(const std::string& filter) {
        return reasonOf(request(makeUnsubscribe(filter), MessageKind::Unsuback, "unsubscribe"));
    }

    PublishResult publish(const std::string& topic, std::optional<std::string> fenceWkt,
                          std::string payload) {
        const ProtocolMessage ack =
            request(makePublish(topic, std::move(fenceWkt), std::move(payload)),
                    MessageKind::Puback, "publish");
        return PublishResult{reasonOf(ack), ack.count.value_or(0)};
    }

    /// Sends DISCONNECT and closes. The broker does not acknowledge it.
    void disconnect() {
        if (!disconnected_.exchange(true)) {
            const std::string frame = encodeFrame(makeDisconnect());
            stream_.writeAll(frame);
        }
        teardown();
    }

    bool connectionAlive() const { return !readerDone_; }

    std::optional<Delivery> pollDelivery() {
        std::lock_guard lock(deliveryMu_);
        if (deliveries_.empty()) return std::nullopt;
        Delivery d = std::move(deliveries_.front());
        deliveries_.pop_front();
        return d;
    }

    std::optional<Delivery> waitDelivery(std::chrono::milliseconds timeout) {
        std::unique_lock lock(deliveryMu_);
        deliveryCv_.wait_for(lock, timeout, [&] { return !deliveries_.empty() || readerDone_; });
        if (deliveries_.empty()) return std::nullopt;
        Delivery d = std::move(deliveries_.front());
        deliveries_.pop_front();
        return d;
    }

    uint64_t deliveredCount() const { return deliveredCount_.load(); }
    uint64_t failedRequests() const { return failedRequests_.load(); }

    /// Samples recorded by the request thread; call from that thread or after
    /// it is done issuing requests.
    const std::vector<LatencySample>& samples() const { return samples_; }

private:
    static ReasonCode reasonOf(const ProtocolMessage& ack) {
        return static_cast<ReasonCode>(ack.reason.value_or(static_cast<int>(ReasonCode::Success)));
    }

    ProtocolMessage request(const ProtocolMessage& msg, MessageKind ackKind, const char* opKind) {
        const size_t slot = static_cast<size_t>(ackKind);
        {
            std::lock_guard lock(ackMu_);
            acks_[slot].reset();
        }
        const int64_t tStartUs = wallNowUs();
        const auto steadyStart = std::chrono::steady_clock::now();
        if (!stream_.writeAll(encodeFrame(msg))) {
            failedRequests_++;
            throw ClientError("connection lost while sending");
        }
        std::unique_lock lock(ackMu_);
        const bool got = ackCv_.wait_for(lock, opts_.requestTimeout,
                                         [&] { return acks_[slot].has_value() || readerDone_; });
        if (!got || !acks_[slot]) {
            lock.unlock();
            failedRequests_++;
            throw ClientError(readerDone_ ? "connection closed before ack"
                                          : "request timed out");
        }
        ProtocolMessage ack = std::move(*acks_[slot]);
        acks_[slot].reset();
        lock.unlock();
        const int64_t latencyUs = std::chrono::duration_cast<std::chrono::microseconds>(
                                      std::chrono::steady_clock::now() - steadyStart)
                                      .count();
        samples_.push_back(LatencySample{opKind, tStartUs, latencyUs,
                                         msg.kind == MessageKind::Publish ? ack.count.value_or(0)
                                                                          : -1});
        return ack;
    }

    void readerLoop() {
        while (true) {
            std::optional<ProtocolMessage> msg;
            try {
                msg = readMessage(stream_);
            } catch (const WireError&) {
                break;
            }
            if (!msg) break;
            if (msg->kind == MessageKind::Publish) {
                Delivery d{msg->topic.value_or(""), msg->payload.value_or(""), msg->fence,
                           wallNowUs()};
                {
                    std::lock_guard lock(deliveryMu_);
                    deliveries_.push_back(std::move(d));
                }
                deliveredCount_++;
                deliveryCv_.notify_all();
                continue;
            }
            {
                std::lock_guard lock(ackMu_);
                acks_[static_cast<size_t>(msg->kind)] = std::move(*msg);
            }
            ackCv_.notify_all();
        }
        readerDone_ = true;
        ackCv_.notify_all();
        deliveryCv_.notify_all();
    }

    void teardown() {
        stream_.shutdownBoth();
        if (reader_.joinable()) reader_.join();
        stream_.close();
    }

    std::string clientId_;
    ClientOptions opts_;
    TcpStream stream_;
    std::thread reader_;
    std::atomic<bool> readerDone_{false};
    std::atomic<bool> disconnected_{false};

    std::mutex ackMu_;
    std::condition_variable ackCv_;
    std::optional<ProtocolMessage> acks_[16];

    std::mutex deliveryMu_;
    std::condition_variable deliveryCv_;
    std::deque<Delivery> deliveries_;
    std::atomic<uint64_t> deliveredCount_{0};
    std::atomic<uint64_t> failedRequests_{0};

    std::vector<LatencySample> samples_;
};

}  // namespace geomq
