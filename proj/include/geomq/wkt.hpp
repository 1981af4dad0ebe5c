#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "geomq/geometry.hpp"

namespace geomq {

/// Malformed WKT text. Geometric validation failures (self-intersecting ring,
/// radius <= 0, antimeridian crossing) surface as std::invalid_argument from
/// Geofence construction instead.
class WktParseError : public std::runtime_error {
public:
    explicit WktParseError(const std::string& what) : std::runtime_error(what) {}
};

namespace wkt_detail {

// WKT uses "lon lat" axis order; Location is (lat, lon). The swap happens
// here and in format, nowhere else.

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text), pos_(0) {}

    Geofence parse() {
        Geofence fence = parseGeometry();
        skipWs();
        if (pos_ != text_.size()) fail("trailing characters after geometry");
        return fence;
    }

private:
    Geofence parseGeometry() {
        const std::string kw = keyword();
        if (kw == "POLYGON") return Geofence::polygon(parsePolygonBody());
        if (kw == "MULTIPOLYGON") return parseMultiPolygon();
        if (kw == "CIRCLE") return parseCircle();
        if (kw == "GEOMETRYCOLLECTION") return parseCollection();
        fail("unsupported geometry type '" + kw + "'");
    }

    std::vector<Location> parsePolygonBody() {
        expect('(');
        std::vector<Location> ring = parseRing();
        skipWs();
        if (peek() == ',') fail("polygon holes are not supported");
        expect(')');
        return ring;
    }

    Geofence parseMultiPolygon() {
        expect('(');
        std::vector<Geofence> parts;
        do {
            expect('(');
            std::vector<Location> ring = parseRing();
            skipWs();
            if (peek() == ',') fail("polygon holes are not supported");
            expect(')');
            parts.push_back(Geofence::polygon(std::move(ring)));
        } while (consume(','));
        expect(')');
        return parts.size() == 1 ? parts.front() : Geofence::multi(std::move(parts));
    }

    Geofence parseCircle() {
        expect('(');
        const double lon = number();
        const double lat = number();
        expect(',');
        const double radius = number();
        expect(')');
        return Geofence::circle(Location(lat, lon), radius);
    }

    Geofence parseCollection() {
        expect('(');
        std::vector<Geofence> parts;
        do {
            parts.push_back(parseGeometry());
        } while (consume(','));
        expect(')');
        return Geofence::multi(std::move(parts));
    }

    std::vector<Location> parseRing() {
        expect('(');
        std::vector<Location> ring;
        do {
            const double lon = number();
            const double lat = number();
            ring.emplace_back(lat, lon);
        } while (consume(','));
        expect(')');
        return ring;
    }

    std::string keyword() {
        skipWs();
        std::string word;
        while (pos_ < text_.size() && std::isalpha(static_cast<unsigned char>(text_[pos_]))) {
            word.push_back(static_cast<char>(
                std::toupper(static_cast<unsigned char>(text_[pos_]))));
            ++pos_;
        }
        if (word.empty()) fail("expected a geometry keyword");
        return word;
    }

    double number() {
        skipWs();
        double value = 0.0;
        const char* begin = text_.data() + pos_;
        const char* end = text_.data() + text_.size();
        auto [ptr, ec] = std::from_chars(begin, end, value);
        if (ec != std::errc() || ptr == begin) fail("expected a number");
        pos_ = static_cast<size_t>(ptr - text_.data());
        if (!std::isfinite(value)) fail("non-finite coordinate");
        return value;
    }

    void skipWs() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    char peek() {
        skipWs();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    bool consume(char c) {
        if (peek() == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!consume(c)) {
            fail(std::string("expected '") + c + "'");
        }
    }

    [[noreturn]] void fail(const std::string& msg) {
        throw WktParseError("WKT parse error at offset " + std::to_string(pos_) + ": " + msg);
    }

    std::string_view text_;
    size_t pos_;
};

}  // namespace wkt_detail

/// Shortest round-trip decimal form of a double.
inline std::string fmtNumber(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

namespace wkt_detail {

inline void appendRing(std::string& out, const std::vector<Location>& ring) {
    out += '(';
    for (size_t i = 0; i <= ring.size(); ++i) {
        const Location& v = ring[i % ring.size()];  // repeat first vertex to close
        if (i) out += ", ";
        out += fmtNumber(v.lon);
        out += ' ';
        out += fmtNumber(v.lat);
    }
    out += ')';
}

inline std::string formatPart(const Geofence::Part& part) {
    if (std::holds_alternative<Geofence::Circle>(part)) {
        const auto& c = std::get<Geofence::Circle>(part);
        return "CIRCLE (" + fmtNumber(c.center.lon) + ' ' + fmtNumber(c.center.lat) + ", " +
               fmtNumber(c.radius) + ')';
    }
    std::string out = "POLYGON (";
    appendRing(out, std::get<Geofence::Polygon>(part).ring);
    out += ')';
    return out;
}

}  // namespace wkt_detail

/// Parse WKT for POLYGON or MULTIPOLYGON (coordinates in "lon lat" order),
/// the CIRCLE (lon lat, radius) extension, or a GEOMETRYCOLLECTION of those.
inline Geofence parseWkt(std::string_view text) { return wkt_detail::Parser(text).parse(); }

/// Inverse of parseWkt. Numbers are printed in shortest round-trip form.
inline std::string formatWkt(const Geofence& fence) {
    const auto& parts = fence.parts();
    if (parts.size() == 1) return wkt_detail::formatPart(parts.front());

    const bool allPolygons = std::all_of(parts.begin(), parts.end(), [](const auto& p) {
        return std::holds_alternative<Geofence::Polygon>(p);
    });
    std::string out;
    if (allPolygons) {
        out = "MULTIPOLYGON (";
        for (size_t i = 0; i < parts.size(); ++i) {
            if (i) out += ", ";
            out += '(';
            wkt_detail::appendRing(out, std::get<Geofence::Polygon>(parts[i]).ring);
            out += ')';
        }
    } else {
        out = "GEOMETRYCOLLECTION (";
        for (size_t i = 0; i < parts.size(); ++i) {
            if (i) out += ", ";
            out += wkt_detail::formatPart(parts[i]);
        }
    }
    out += ')';
    return out;
}

/// Replace every circular part with an inscribed regular polygon so the fence
/// can be expressed in strict WKT (no CIRCLE extension).
inline Geofence approximateCircles(const Geofence& fence, int segments = 64) {
    if (segments < 3) throw std::invalid_argument("need at least 3 segments");
    std::vector<Geofence> parts;
    for (const auto& part : fence.parts()) {
        if (std::holds_alternative<Geofence::Circle>(part)) {
            const auto& c = std::get<Geofence::Circle>(part);
            std::vector<Location> ring;
            ring.reserve(static_cast<size_t>(segments));
            for (int i = 0; i < segments; ++i) {
                const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / segments;
                ring.emplace_back(c.center.lat + c.radius * std::sin(a),
                                  c.center.lon + c.radius * std::cos(a));
            }
            parts.push_back(Geofence::polygon(std::move(ring)));
        } else {
            parts.push_back(Geofence::polygon(std::get<Geofence::Polygon>(part).ring));
        }
    }
    return parts.size() == 1 ? parts.front() : Geofence::multi(std::move(parts));
}

}  // namespace geomq
