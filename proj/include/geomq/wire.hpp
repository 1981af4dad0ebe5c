#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

#include "geomq/geometry.hpp"

namespace geomq {

/// Raised when a frame or body cannot be decoded. The connection that
/// produced it is beyond recovery and should be closed.
class WireError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class MessageKind : uint8_t {
    Connect = 1,
    Connack = 2,
    PingReq = 3,
    PingResp = 4,
    Subscribe = 5,
    Suback = 6,
    Unsubscribe = 7,
    Unsuback = 8,
    Publish = 9,
    Puback = 10,
    Disconnect = 11,
};

inline const char* kindName(MessageKind k) {
    switch (k) {
        case MessageKind::Connect: return "CONNECT";
        case MessageKind::Connack: return "CONNACK";
        case MessageKind::PingReq: return "PINGREQ";
        case MessageKind::PingResp: return "PINGRESP";
        case MessageKind::Subscribe: return "SUBSCRIBE";
        case MessageKind::Suback: return "SUBACK";
        case MessageKind::Unsubscribe: return "UNSUBSCRIBE";
        case MessageKind::Unsuback: return "UNSUBACK";
        case MessageKind::Publish: return "PUBLISH";
        case MessageKind::Puback: return "PUBACK";
        case MessageKind::Disconnect: return "DISCONNECT";
    }
    return "UNKNOWN";
}

enum class ReasonCode : int {
    Success = 0,
    MalformedMessage = 1,
    NoSession = 2,
    SessionTakenOver = 3,
    LocationUnknown = 4,
    PayloadTooLarge = 5,
    InvalidTopic = 6,
    InvalidFence = 7,
    InternalError = 8,
};

inline const char* reasonName(ReasonCode r) {
    switch (r) {
        case ReasonCode::Success: return "success";
        case ReasonCode::MalformedMessage: return "malformed message";
        case ReasonCode::NoSession: return "no session";
        case ReasonCode::SessionTakenOver: return "session taken over";
        case ReasonCode::LocationUnknown: return "location unknown";
        case ReasonCode::PayloadTooLarge: return "payload too large";
        case ReasonCode::InvalidTopic: return "invalid topic";
        case ReasonCode::InvalidFence: return "invalid fence";
        case ReasonCode::InternalError: return "internal error";
    }
    return "unknown";
}

/// One protocol message. Field presence depends on the kind: CONNECT carries
/// clientId + lat/lon, PINGREQ lat/lon, SUBSCRIBE topic (a filter) + optional
/// fence, PUBLISH topic + optional fence + payload, acks carry reason (PUBACK
/// also the matched-consumer count). The payload field holds raw bytes; it is
/// base64 on the wire only.
struct ProtocolMessage {
    MessageKind kind{MessageKind::Disconnect};
    std::optional<std::string> clientId;
    std::optional<double> lat;
    std::optional<double> lon;
    std::optional<std::string> topic;
    std::optional<std::string> fence;
    std::optional<std::string> payload;
    std::optional<int> reason;
    std::optional<int64_t> count;

    std::optional<Location> location() const {
        if (!lat || !lon) return std::nullopt;
        if (!Location::valid(*lat, *lon)) return std::nullopt;
        return Location(*lat, *lon);
    }

    bool operator==(const ProtocolMessage&) const = default;
};

inline ProtocolMessage makeConnect(std::string clientId, const Location& loc) {
    ProtocolMessage m;
    m.kind = MessageKind::Connect;
    m.clientId = std::move(clientId);
    m.lat = loc.lat;
    m.lon = loc.lon;
    return m;
}

inline ProtocolMessage makePing(const Location& loc) {
    ProtocolMessage m;
    m.kind = MessageKind::PingReq;
    m.lat = loc.lat;
    m.lon = loc.lon;
    return m;
}

inline ProtocolMessage makeSubscribe(std::string filter, std::optional<std::string> fenceWkt) {
    ProtocolMessage m;
    m.kind = MessageKind::Subscribe;
    m.topic = std::move(filter);
    m.fence = std::move(fenceWkt);
    return m;
}

inline ProtocolMessage makeUnsubscribe(std::string filter) {
    ProtocolMessage m;
    m.kind = MessageKind::Unsubscribe;
    m.topic = std::move(filter);
    return m;
}

inline ProtocolMessage makePublish(std::string topic, std::optional<std::string> fenceWkt,
                                   std::string payload) {
    ProtocolMessage m;
    m.kind = MessageKind::Publish;
    m.topic = std::move(topic);
    m.fence = std::move(fenceWkt);
    m.payload = std::move(payload);
    return m;
}

inline ProtocolMessage makeDisconnect() {
    ProtocolMessage m;
    m.kind = MessageKind::Disconnect;
    return m;
}

inline ProtocolMessage makeAck(MessageKind kind, ReasonCode reason) {
    ProtocolMessage m;
    m.kind = kind;
    m.reason = static_cast<int>(reason);
    return m;
}

namespace wire_detail {

inline constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace wire_detail

inline std::string base64Encode(std::string_view bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    for (; i + 3 <= bytes.size(); i += 3) {
        const uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) |
                           (static_cast<uint8_t>(bytes[i + 1]) << 8) |
                           static_cast<uint8_t>(bytes[i + 2]);
        out += wire_detail::kB64Alphabet[(v >> 18) & 63];
        out += wire_detail::kB64Alphabet[(v >> 12) & 63];
        out += wire_detail::kB64Alphabet[(v >> 6) & 63];
        out += wire_detail::kB64Alphabet[v & 63];
    }
    const size_t rest = bytes.size() - i;
    if (rest == 1) {
        const uint32_t v = static_cast<uint8_t>(bytes[i]) << 16;
        out += wire_detail::kB64Alphabet[(v >> 18) & 63];
        out += wire_detail::kB64Alphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) |
                           (static_cast<uint8_t>(bytes[i + 1]) << 8);
        out += wire_detail::kB64Alphabet[(v >> 18) & 63];
        out += wire_detail::kB64Alphabet[(v >> 12) & 63];
        out += wire_detail::kB64Alphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::string base64Decode(std::string_view text) {
    if (text.size() % 4 != 0) throw WireError("base64 length not a multiple of 4");
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::string out;
    out.reserve(text.size() / 4 * 3);
    for (size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        int pad = 0;
        uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=') {
                if (!last || k < 2 || (k == 2 && text[i + 3] != '=')) {
                    throw WireError("misplaced base64 padding");
                }
                ++pad;
                v <<= 6;
                continue;
            }
            const int d = value(c);
            if (d < 0) throw WireError("invalid base64 character");
            v = (v << 6) | static_cast<uint32_t>(d);
        }
        out += static_cast<char>((v >> 16) & 0xff);
        if (pad < 2) out += static_cast<char>((v >> 8) & 0xff);
        if (pad < 1) out += static_cast<char>(v & 0xff);
    }
    return out;
}

/// Default ceiling on accepted frame sizes. Generous relative to the default
/// 256 KiB payload limit (base64 expands by 4/3); the broker derives a
/// tighter limit from its configuration.
inline constexpr size_t kDefaultMaxFrameBytes = 4 * 1024 * 1024;

/// Serialize to the wire form: 4-byte big-endian length (of everything that
/// follows), 1-byte kind, canonical JSON body with alphabetically ordered
/// keys.
inline std::string encodeFrame(const ProtocolMessage& m) {
    nlohmann::json body = nlohmann::json::object();
    if (m.clientId) body["clientId"] = *m.clientId;
    if (m.lat) body["lat"] = *m.lat;
    if (m.lon) body["lon"] = *m.lon;
    if (m.topic) body["topic"] = *m.topic;
    if (m.fence) body["fence"] = *m.fence;
    if (m.payload) body["payload"] = base64Encode(*m.payload);
    if (m.reason) body["reason"] = *m.reason;
    if (m.count) body["count"] = *m.count;
    const std::string text = body.dump();

    std::string frame;
    frame.reserve(5 + text.size());
    const uint32_t len = static_cast<uint32_t>(1 + text.size());
    frame += static_cast<char>((len >> 24) & 0xff);
    frame += static_cast<char>((len >> 16) & 0xff);
    frame += static_cast<char>((len >> 8) & 0xff);
    frame += static_cast<char>(len & 0xff);
    frame += static_cast<char>(m.kind);
    frame += text;
    return frame;
}

/// Decode a frame's content (the bytes after the length prefix: kind byte
/// plus JSON body). Unknown body keys are ignored.
inline ProtocolMessage decodeFrameContent(std::string_view content) {
    if (content.empty()) throw WireError("empty frame");
    const uint8_t kindByte = static_cast<uint8_t>(content[0]);
    if (kindByte < static_cast<uint8_t>(MessageKind::Connect) ||
        kindByte > static_cast<uint8_t>(MessageKind::Disconnect)) {
        throw WireError("unknown message kind " + std::to_string(kindByte));
    }
    ProtocolMessage m;
    m.kind = static_cast<MessageKind>(kindByte);

    nlohmann::json body;
    try {
        body = nlohmann::json::parse(content.substr(1));
    } catch (const nlohmann::json::exception& e) {
        throw WireError(std::string("bad JSON body: ") + e.what());
    }
    if (!body.is_object()) throw WireError("frame body is not a JSON object");

    try {
        if (auto it = body.find("clientId"); it != body.end()) {
            m.clientId = it->get<std::string>();
        }
        if (auto it = body.find("lat"); it != body.end()) m.lat = it->get<double>();
        if (auto it = body.find("lon"); it != body.end()) m.lon = it->get<double>();
        if (auto it = body.find("topic"); it != body.end()) m.topic = it->get<std::string>();
        if (auto it = body.find("fence"); it != body.end()) m.fence = it->get<std::string>();
        if (auto it = body.find("payload"); it != body.end()) {
            m.payload = base64Decode(it->get<std::string>());
        }
        if (auto it = body.find("reason"); it != body.end()) m.reason = it->get<int>();
        if (auto it = body.find("count"); it != body.end()) m.count = it->get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw WireError(std::string("bad body field type: ") + e.what());
    }
    return m;
}

/// Read one message from a stream providing
///   bool readExactly(void* buf, size_t n)   (false = clean EOF before byte 1)
/// Returns nullopt on clean EOF at a frame boundary; throws WireError on
/// truncated or oversized frames.
template <typename Stream>
std::optional<ProtocolMessage> readMessage(Stream& stream,
                                           size_t maxFrameBytes = kDefaultMaxFrameBytes) {
    uint8_t header[4];
    if (!stream.readExactly(header, 1)) return std::nullopt;
    if (!stream.readExactly(header + 1, 3)) throw WireError("truncated frame header");
    const uint32_t len = (static_cast<uint32_t>(header[0]) << 24) |
                         (static_cast<uint32_t>(header[1]) << 16) |
                         (static_cast<uint32_t>(header[2]) << 8) | static_cast<uint32_t>(header[3]);
    if (len == 0) throw WireError("zero-length frame");
    if (len > maxFrameBytes) throw WireError("frame exceeds limit: " + std::to_string(len));
    std::string content(len, '\0');
    if (!stream.readExactly(content.data(), content.size())) throw WireError("truncated frame");
    return decodeFrameContent(content);
}

}  // namespace geomq
