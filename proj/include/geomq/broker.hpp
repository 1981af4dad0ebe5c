#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geomq/net.hpp"
#include "geomq/subscription_store.hpp"
#include "geomq/topic.hpp"
#include "geomq/wire.hpp"
#include "geomq/wkt.hpp"

namespace geomq {

struct BrokerOptions {
    uint16_t port = 5559;  // 0 binds an ephemeral port, reported by Broker::port()
    int granularity = 10;
    int workers = 0;  // 0 = hardware concurrency
    std::chrono::milliseconds sessionExpiry{60000};
    std::chrono::milliseconds sweepInterval{1000};
    size_t maxPayloadBytes = 262144;
    bool skipFinalIntersection = false;
    size_t outboundQueueLimit = 4096;
    std::string metricsCsvPath;  // empty = metrics disabled
};

/// TCP pub/sub broker. One reader and one writer thread per connection; a
/// pool of matching workers processes inbound messages, each connection's
/// messages strictly in arrival order. Outbound queues are bounded: when one
/// fills, the oldest queued delivery is dropped (acks are never dropped).
class Broker {
public:
    explicit Broker(BrokerOptions opts = {})
        : opts_(std::move(opts)), store_(opts_.granularity, !opts_.skipFinalIntersection) {
        if (opts_.workers <= 0) {
            const unsigned hw = std::thread::hardware_concurrency();
            opts_.workers = hw == 0 ? 2 : static_cast<int>(hw);
        }
        maxFrameBytes_ = opts_.maxPayloadBytes * 2 + 65536;
    }

    ~Broker() { stop(); }
    Broker(const Broker&) = delete;
    Broker& operator=(const Broker&) = delete;

    void start() {
        if (running_) return;
        listener_ = TcpListener::bindAny(opts_.port);
        stopWorkers_ = false;
        stopAux_ = false;
        running_ = true;
        for (int i = 0; i < opts_.workers; ++i) {
            workerThreads_.emplace_back([this] { workerLoop(); });
        }
        acceptThread_ = std::thread([this] { acceptLoop(); });
        sweeperThread_ = std::thread([this] { sweeperLoop(); });
        if (!opts_.metricsCsvPath.empty()) {
            metricsThread_ = std::thread([this] { metricsLoop(); });
        }
    }

    void stop() {
        if (!running_) return;
        running_ = false;
        listener_.close();
        if (acceptThread_.joinable()) acceptThread_.join();

        std::vector<std::shared_ptr<Connection>> conns;
        {
            std::lock_guard lock(connsMu_);
            conns = conns_;
        }
        for (auto& c : conns) cleanupConnection(*c);

        {
            std::lock_guard lock(runMu_);
            stopWorkers_ = true;
        }
        runCv_.notify_all();
        for (auto& t : workerThreads_) t.join();
        workerThreads_.clear();

        {
            std::lock_guard lock(auxMu_);
            stopAux_ = true;
        }
        auxCv_.notify_all();
        if (sweeperThread_.joinable()) sweeperThread_.join();
        if (metricsThread_.joinable()) metricsThread_.join();

        {
            std::lock_guard lock(connsMu_);
            conns = std::move(conns_);
            conns_.clear();
        }
        for (auto& c : conns) joinConnection(*c);
    }

    uint16_t port() const { return listener_.port(); }
    const BrokerOptions& options() const { return opts_; }
    SubscriptionStore& store() { return store_; }

    struct Stats {
        uint64_t connectedSessions = 0;
        uint64_t publishesIn = 0;
        uint64_t deliveriesOut = 0;
        uint64_t queueDrops = 0;
        uint64_t matchedTotal = 0;
        double matchesPerPublishMean = 0.0;
    };

    Stats stats() const {
        Stats s;
        {
            std::lock_guard lock(sessionsMu_);
            s.connectedSessions = sessions_.size();
        }
        s.publishesIn = publishesIn_.load();
        s.deliveriesOut = deliveriesOut_.load();
        s.queueDrops = queueDrops_.load();
        s.matchedTotal = matchedTotal_.load();
        if (s.publishesIn > 0) {
            s.matchesPerPublishMean =
                static_cast<double>(s.matchedTotal) / static_cast<double>(s.publishesIn);
        }
        return s;
    }

    /// Terminates every session idle longer than the expiry interval:
    /// subscriptions removed, transport closed. Called by the sweeper; public
    /// so tests can drive expiry deterministically.
    std::vector<std::string> expireSessions(std::chrono::steady_clock::time_point now) {
        const int64_t nowNs = now.time_since_epoch().count();
        const int64_t limitNs =
            std::chrono::duration_cast<std::chrono::nanoseconds>(opts_.sessionExpiry).count();
        std::vector<std::pair<std::string, std::shared_ptr<Connection>>> victims;
        {
            std::lock_guard lock(sessionsMu_);
            for (const auto& [id, conn] : sessions_) {
                if (nowNs - conn->lastActivityNs.load() > limitNs) victims.emplace_back(id, conn);
            }
        }
        std::vector<std::string> expired;
        for (auto& [id, conn] : victims) {
            expired.push_back(id);
            cleanupConnection(*conn);
        }
        return expired;
    }

private:
    struct Outbound {
        std::shared_ptr<const std::string> frame;  // nullptr = flush-then-close sentinel
        bool droppable = false;
    };

    struct Connection {
        Connection(TcpStream s, uint64_t id_) : stream(std::move(s)), id(id_) {}

        TcpStream stream;
        const uint64_t id;
        std::atomic<bool> dead{false};
        std::atomic<int64_t> lastActivityNs{0};

        std::mutex stateMu;
        std::string clientId;  // empty until CONNECT succeeds

        std::mutex inMu;
        std::deque<ProtocolMessage> inbox;
        bool scheduled = false;

        std::mutex outMu;
        std::condition_variable outCv;
        std::deque<Outbound> outbox;
        bool outClosed = false;
        bool acceptingOut = true;

        std::thread readerThread;
        std::thread writerThread;
    };

    // ---- connection lifecycle ----

    void acceptLoop() {
        while (auto stream = listener_.accept()) {
            auto conn = std::make_shared<Connection>(std::move(*stream), nextConnId_++);
            conn->lastActivityNs = steadyNowNs();
            {
                std::lock_guard lock(connsMu_);
                conns_.push_back(conn);
            }
            conn->readerThread = std::thread([this, conn] { readerLoop(conn); });
            conn->writerThread = std::thread([this, conn] { writerLoop(conn); });
        }
    }

    void readerLoop(const std::shared_ptr<Connection>& conn) {
        bool sawError = false;
        while (!conn->dead) {
            std::optional<ProtocolMessage> msg;
            try {
                msg = readMessage(conn->stream, maxFrameBytes_);
            } catch (const WireError&) {
                sawError = true;
            }
            if (sawError || !msg) break;
            conn->lastActivityNs = steadyNowNs();
            enqueueInbound(conn, std::move(*msg));
        }
        // Peer done (or undecodable): run teardown in order behind whatever
        // is still queued, so earlier requests finish processing first.
        enqueueInbound(conn, makeDisconnect());
    }

    void enqueueInbound(const std::shared_ptr<Connection>& conn, ProtocolMessage msg) {
        bool schedule = false;
        {
            std::lock_guard lock(conn->inMu);
            conn->inbox.push_back(std::move(msg));
            if (!conn->scheduled) {
                conn->scheduled = true;
                schedule = true;
            }
        }
        if (schedule) scheduleConnection(conn);
    }

    void scheduleConnection(std::shared_ptr<Connection> conn) {
        {
            std::lock_guard lock(runMu_);
            runQueue_.push_back(std::move(conn));
        }
        runCv_.notify_one();
    }

    void writerLoop(const std::shared_ptr<Connection>& conn) {
        while (true) {
            Outbound item;
            {
                std::unique_lock lock(conn->outMu);
                conn->outCv.wait(lock, [&] { return conn->outClosed || !conn->outbox.empty(); });
                if (conn->outClosed) return;
                item = std::move(conn->outbox.front());
                conn->outbox.pop_front();
            }
            if (!item.frame) {
                conn->stream.shutdownBoth();
                cleanupConnection(*conn);
                return;
            }
            if (!conn->stream.writeAll(*item.frame)) {
                cleanupConnection(*conn);
                return;
            }
            if (item.droppable) deliveriesOut_++;
        }
    }

    /// Queue a frame for the connection's writer. Deliveries are droppable:
    /// when the queue is full the oldest queued delivery makes room (or the
    /// new one is discarded if only acks are queued). Acks always enter.
    bool enqueueFrame(Connection& conn, std::shared_ptr<const std::string> frame, bool droppable) {
        std::lock_guard lock(conn.outMu);
        if (conn.outClosed || !conn.acceptingOut) return false;
        if (droppable && conn.outbox.size() >= opts_.outboundQueueLimit) {
            auto it = std::find_if(conn.outbox.begin(), conn.outbox.end(),
                                   [](const Outbound& o) { return o.droppable; });
            queueDrops_++;
            if (it == conn.outbox.end()) return false;
            conn.outbox.erase(it);
        }
        conn.outbox.push_back(Outbound{std::move(frame), droppable});
        conn.outCv.notify_one();
        return true;
    }

    void sendAck(Connection& conn, ProtocolMessage ack) {
        enqueueFrame(conn, std::make_shared<const std::string>(encodeFrame(ack)), false);
    }

    /// Stop accepting outbound frames, flush what is queued, then close.
    void requestClose(Connection& conn) {
        std::lock_guard lock(conn.outMu);
        if (!conn.acceptingOut || conn.outClosed) return;
        conn.acceptingOut = false;
        conn.outbox.push_back(Outbound{nullptr, false});
        conn.outCv.notify_one();
    }

    /// Idempotent teardown: deregister the session, drop its subscriptions,
    /// abandon queued output, unblock both connection threads.
    void cleanupConnection(Connection& conn) {
        if (conn.dead.exchange(true)) return;
        releaseSession(conn);
        {
            std::lock_guard lock(conn.outMu);
            conn.outClosed = true;
            conn.acceptingOut = false;
        }
        conn.outCv.notify_all();
        conn.stream.shutdownBoth();
    }

    /// Detach this connection from its session, removing store state only if
    /// the registry still names it the session owner (it does not after a
    /// takeover).
    void releaseSession(Connection& conn) {
        std::string id;
        {
            std::lock_guard lock(conn.stateMu);
            id = std::exchange(conn.clientId, std::string());
        }
        if (id.empty()) return;
        bool owner = false;
        {
            std::lock_guard lock(sessionsMu_);
            auto it = sessions_.find(id);
            if (it != sessions_.end() && it->second.get() == &conn) {
                sessions_.erase(it);
                owner = true;
            }
        }
        if (owner) store_.removeClient(id);
    }

    void joinConnection(Connection& conn) {
        if (conn.readerThread.joinable()) conn.readerThread.join();
        if (conn.writerThread.joinable()) conn.writerThread.join();
        conn.stream.close();
    }

    // ---- worker pool ----

    void workerLoop() {
        while (true) {
            std::shared_ptr<Connection> conn;
            {
                std::unique_lock lock(runMu_);
                runCv_.wait(lock, [&] { return stopWorkers_ || !runQueue_.empty(); });
                if (runQueue_.empty()) return;
                conn = std::move(runQueue_.front());
                runQueue_.pop_front();
            }
            drainInbox(conn);
        }
    }

    void drainInbox(const std::shared_ptr<Connection>& conn) {
        // Budgeted so one chatty connection cannot monopolize a worker.
        for (int budget = 0; budget < 64; ++budget) {
            ProtocolMessage msg;
            {
                std::lock_guard lock(conn->inMu);
                if (conn->inbox.empty()) {
                    conn->scheduled = false;
                    return;
                }
                msg = std::move(conn->inbox.front());
                conn->inbox.pop_front();
            }
            if (!conn->dead || msg.kind == MessageKind::Disconnect) processMessage(conn, msg);
        }
        bool reschedule = false;
        {
            std::lock_guard lock(conn->inMu);
            if (conn->inbox.empty()) {
                conn->scheduled = false;
            } else {
                reschedule = true;
            }
        }
        if (reschedule) scheduleConnection(conn);
    }

    // ---- message handling ----

    static MessageKind ackKindFor(MessageKind request) {
        switch (request) {
            case MessageKind::Connect: return MessageKind::Connack;
            case MessageKind::PingReq: return MessageKind::PingResp;
            case MessageKind::Subscribe: return MessageKind::Suback;
            case MessageKind::Unsubscribe: return MessageKind::Unsuback;
            case MessageKind::Publish: return MessageKind::Puback;
            default: return MessageKind::Disconnect;
        }
    }

    void processMessage(const std::shared_ptr<Connection>& conn, const ProtocolMessage& msg) {
        if (msg.kind == MessageKind::Connect) {
            handleConnect(conn, msg);
            return;
        }
        if (msg.kind == MessageKind::Disconnect) {
            releaseSession(*conn);
            requestClose(*conn);
            return;
        }
        {
            std::lock_guard lock(conn->stateMu);
            if (conn->clientId.empty()) {
                sendAck(*conn, makeAck(ackKindFor(msg.kind), ReasonCode::NoSession));
                requestClose(*conn);
                return;
            }
        }
        switch (msg.kind) {
            case MessageKind::PingReq: handlePing(*conn, msg); break;
            case MessageKind::Subscribe: handleSubscribe(*conn, msg); break;
            case MessageKind::Unsubscribe: handleUnsubscribe(*conn, msg); break;
            case MessageKind::Publish: handlePublish(*conn, msg); break;
            default:
                // A client has no business sending ack kinds; drop them.
                break;
        }
    }

    void handleConnect(const std::shared_ptr<Connection>& conn, const ProtocolMessage& msg) {
        const auto loc = msg.location();
        if (!msg.clientId || msg.clientId->empty() || !loc) {
            sendAck(*conn, makeAck(MessageKind::Connack, ReasonCode::MalformedMessage));
            requestClose(*conn);
            return;
        }
        const std::string& id = *msg.clientId;
        releaseSession(*conn);  // a repeat CONNECT supersedes this connection's own session
        std::shared_ptr<Connection> old;
        {
            std::lock_guard lock(sessionsMu_);
            auto& slot = sessions_[id];
            old = slot;
            slot = conn;
        }
        {
            std::lock_guard lock(conn->stateMu);
            conn->clientId = id;
        }
        if (old && old.get() != conn.get()) {
            // Takeover: the new session starts fresh, so the old session's
            // subscriptions go now (its own cleanup no longer owns the id).
            store_.removeClient(id);
            cleanupConnection(*old);
        }
        store_.updateLocation(id, *loc);
        sendAck(*conn, makeAck(MessageKind::Connack, ReasonCode::Success));
    }

    void handlePing(Connection& conn, const ProtocolMessage& msg) {
        const auto loc = msg.location();
        if (!loc) {
            sendAck(conn, makeAck(MessageKind::PingResp, ReasonCode::MalformedMessage));
            return;
        }
        std::string id;
        {
            std::lock_guard lock(conn.stateMu);
            id = conn.clientId;
        }
        store_.updateLocation(id, *loc);
        sendAck(conn, makeAck(MessageKind::PingResp, ReasonCode::Success));
    }

    void handleSubscribe(Connection& conn, const ProtocolMessage& msg) {
        if (!msg.topic) {
            sendAck(conn, makeAck(MessageKind::Suback, ReasonCode::MalformedMessage));
            return;
        }
        std::optional<TopicFilter> filter;
        try {
            filter.emplace(*msg.topic);
        } catch (const std::invalid_argument&) {
            sendAck(conn, makeAck(MessageKind::Suback, ReasonCode::InvalidTopic));
            return;
        }
        std::optional<Geofence> fence;
        if (msg.fence) {
            try {
                fence = parseWkt(*msg.fence);
            } catch (const std::exception&) {
                sendAck(conn, makeAck(MessageKind::Suback, ReasonCode::InvalidFence));
                return;
            }
        }
        std::string id;
        {
            std::lock_guard lock(conn.stateMu);
            id = conn.clientId;
        }
        store_.subscribe(id, *filter, std::move(fence));
        sendAck(conn, makeAck(MessageKind::Suback, ReasonCode::Success));
    }

    void handleUnsubscribe(Connection& conn, const ProtocolMessage& msg) {
        if (!msg.topic) {
            sendAck(conn, makeAck(MessageKind::Unsuback, ReasonCode::MalformedMessage));
            return;
        }
        std::optional<TopicFilter> filter;
        try {
            filter.emplace(*msg.topic);
        } catch (const std::invalid_argument&) {
            sendAck(conn, makeAck(MessageKind::Unsuback, ReasonCode::InvalidTopic));
            return;
        }
        std::string id;
        {
            std::lock_guard lock(conn.stateMu);
            id = conn.clientId;
        }
        store_.unsubscribe(id, *filter);  // removing the nonexistent is still acknowledged
        sendAck(conn, makeAck(MessageKind::Unsuback, ReasonCode::Success));
    }

    void handlePublish(Connection& conn, const ProtocolMessage& msg) {
        publishesIn_++;
        if (!msg.topic || !msg.payload) {
            sendAck(conn, makeAck(MessageKind::Puback, ReasonCode::MalformedMessage));
            return;
        }
        if (msg.payload->size() > opts_.maxPayloadBytes) {
            sendAck(conn, makeAck(MessageKind::Puback, ReasonCode::PayloadTooLarge));
            return;
        }
        std::optional<Topic> topic;
        try {
            topic.emplace(*msg.topic);
        } catch (const std::invalid_argument&) {
            sendAck(conn, makeAck(MessageKind::Puback, ReasonCode::InvalidTopic));
            return;
        }
        std::optional<Geofence> fence;
        if (msg.fence) {
            try {
                fence = parseWkt(*msg.fence);
            } catch (const std::exception&) {
                sendAck(conn, makeAck(MessageKind::Puback, ReasonCode::InvalidFence));
                return;
            }
        }
        std::string id;
        {
            std::lock_guard lock(conn.stateMu);
            id = conn.clientId;
        }
        std::vector<std::string> matched;
        try {
            matched = store_.match(*topic, id, fence);
        } catch (const std::invalid_argument&) {
            sendAck(conn, makeAck(MessageKind::Puback, ReasonCode::LocationUnknown));
            return;
        }
        matchedTotal_ += matched.size();

        if (!matched.empty()) {
            const auto frame = std::make_shared<const std::string>(
                encodeFrame(makePublish(*msg.topic, msg.fence, *msg.payload)));
            std::vector<std::shared_ptr<Connection>> targets;
            targets.reserve(matched.size());
            {
                std::lock_guard lock(sessionsMu_);
                for (const std::string& consumer : matched) {
                    auto it = sessions_.find(consumer);
                    if (it != sessions_.end()) targets.push_back(it->second);
                }
            }
            for (auto& target : targets) enqueueFrame(*target, frame, true);
        }

        // Acked once every delivery is queued, not once delivered.
        ProtocolMessage ack = makeAck(MessageKind::Puback, ReasonCode::Success);
        ack.count = static_cast<int64_t>(matched.size());
        sendAck(conn, ack);
    }

    // ---- background threads ----

    void sweeperLoop() {
        std::unique_lock lock(auxMu_);
        while (!stopAux_) {
            auxCv_.wait_for(lock, opts_.sweepInterval);
            if (stopAux_) return;
            lock.unlock();
            expireSessions(std::chrono::steady_clock::now());
            reapConnections();
            lock.lock();
        }
    }

    void reapConnections() {
        std::vector<std::shared_ptr<Connection>> finished;
        {
            std::lock_guard lock(connsMu_);
            auto it = conns_.begin();
            while (it != conns_.end()) {
                if ((*it)->dead) {
                    finished.push_back(std::move(*it));
                    it = conns_.erase(it);
                } else {
                    ++it;
                }
            }
        }
        for (auto& c : finished) joinConnection(*c);
    }

    void metricsLoop() {
        std::ofstream out(opts_.metricsCsvPath, std::ios::app);
        if (!out) return;
        if (out.tellp() == 0) {
            out << "timestamp,connected_sessions,publishes_in,deliveries_out,"
                   "matches_per_publish_mean,queue_drops\n";
        }
        std::unique_lock lock(auxMu_);
        while (!stopAux_) {
            auxCv_.wait_for(lock, std::chrono::seconds(1));
            if (stopAux_) return;
            lock.unlock();
            const Stats s = stats();
            const auto now = std::chrono::system_clock::now();
            const auto secs =
                std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
            out << secs << ',' << s.connectedSessions << ',' << s.publishesIn << ','
                << s.deliveriesOut << ',' << s.matchesPerPublishMean << ',' << s.queueDrops
                << '\n';
            out.flush();
            lock.lock();
        }
    }

    static int64_t steadyNowNs() {
        return std::chrono::steady_clock::now().time_since_epoch().count();
    }

    BrokerOptions opts_;
    size_t maxFrameBytes_;
    SubscriptionStore store_;
    TcpListener listener_;
    bool running_ = false;

    std::thread acceptThread_;
    std::thread sweeperThread_;
    std::thread metricsThread_;
    std::vector<std::thread> workerThreads_;
    uint64_t nextConnId_ = 1;

    std::mutex connsMu_;
    std::vector<std::shared_ptr<Connection>> conns_;

    mutable std::mutex sessionsMu_;
    std::unordered_map<std::string, std::shared_ptr<Connection>> sessions_;

    std::mutex runMu_;
    std::condition_variable runCv_;
    std::deque<std::shared_ptr<Connection>> runQueue_;
    bool stopWorkers_ = false;

    std::mutex auxMu_;
    std::condition_variable auxCv_;
    bool stopAux_ = false;

    std::atomic<uint64_t> publishesIn_{0};
    std::atomic<uint64_t> deliveriesOut_{0};
    std::atomic<uint64_t> queueDrops_{0};
    std::atomic<uint64_t> matchedTotal_{0};
};

}  // namespace geomq
