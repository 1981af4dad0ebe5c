#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <variant>
#include <vector>

namespace geomq {

/// Tolerance for boundary classification in degree space (~0.1 micrometer at
/// the equator). A point within this distance of a fence edge counts as
/// inside; fences are closed regions.
inline constexpr double kBoundaryEpsilonDeg = 1e-9;

/// WGS84 point in planar degree space. All geometry in this library is planar
/// over (lat, lon) degrees; there is no geodesic correction.
struct Location {
    double lat{0.0};
    double lon{0.0};

    Location() = default;
    Location(double lat_, double lon_) : lat(lat_), lon(lon_) {
        if (!valid(lat_, lon_)) {
            throw std::invalid_argument("location out of range: lat=" + std::to_string(lat_) +
                                        " lon=" + std::to_string(lon_));
        }
    }

    static bool valid(double lat, double lon) {
        return std::isfinite(lat) && std::isfinite(lon) && lat >= -90.0 && lat <= 90.0 &&
               lon >= -180.0 && lon <= 180.0;
    }

    bool operator==(const Location&) const = default;
};

/// Euclidean distance in degree space.
inline double distanceDeg(const Location& a, const Location& b) {
    const double dLat = a.lat - b.lat;
    const double dLon = a.lon - b.lon;
    return std::sqrt(dLat * dLat + dLon * dLon);
}

/// Axis-aligned rectangle given by its southwest and northeast corners.
/// Closed on all edges unless a caller applies half-open field semantics
/// (see Geofence::intersectsField).
struct BoundingBox {
    Location southWest;
    Location northEast;

    BoundingBox() = default;
    BoundingBox(Location sw, Location ne) : southWest(sw), northEast(ne) {
        if (sw.lat > ne.lat || sw.lon > ne.lon) {
            throw std::invalid_argument("bounding box corners out of order");
        }
    }

    bool contains(const Location& p) const {
        return p.lat >= southWest.lat && p.lat <= northEast.lat && p.lon >= southWest.lon &&
               p.lon <= northEast.lon;
    }

    double latSpan() const { return northEast.lat - southWest.lat; }
    double lonSpan() const { return northEast.lon - southWest.lon; }

    static BoundingBox merged(const BoundingBox& a, const BoundingBox& b) {
        BoundingBox out;
        out.southWest.lat = std::min(a.southWest.lat, b.southWest.lat);
        out.southWest.lon = std::min(a.southWest.lon, b.southWest.lon);
        out.northEast.lat = std::max(a.northEast.lat, b.northEast.lat);
        out.northEast.lon = std::max(a.northEast.lon, b.northEast.lon);
        return out;
    }

    bool operator==(const BoundingBox&) const = default;
};

namespace detail {

inline double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

/// Squared distance from p to segment [a, b] in (lat, lon) degree space.
inline double pointSegmentDist2(const Location& p, const Location& a, const Location& b) {
    const double abLat = b.lat - a.lat;
    const double abLon = b.lon - a.lon;
    const double apLat = p.lat - a.lat;
    const double apLon = p.lon - a.lon;
    const double len2 = abLat * abLat + abLon * abLon;
    double t = 0.0;
    if (len2 > 0.0) t = clampd((apLat * abLat + apLon * abLon) / len2, 0.0, 1.0);
    const double dLat = apLat - t * abLat;
    const double dLon = apLon - t * abLon;
    return dLat * dLat + dLon * dLon;
}

inline int orientation(const Location& a, const Location& b, const Location& c) {
    const double v = (b.lon - a.lon) * (c.lat - a.lat) - (b.lat - a.lat) * (c.lon - a.lon);
    if (v > 0.0) return 1;
    if (v < 0.0) return -1;
    return 0;
}

inline bool onSegmentColinear(const Location& a, const Location& b, const Location& p) {
    return p.lat >= std::min(a.lat, b.lat) && p.lat <= std::max(a.lat, b.lat) &&
           p.lon >= std::min(a.lon, b.lon) && p.lon <= std::max(a.lon, b.lon);
}

/// Inclusive segment intersection: touching endpoints count.
inline bool segmentsIntersect(const Location& p1, const Location& p2, const Location& q1,
                              const Location& q2) {
    const int o1 = orientation(p1, p2, q1);
    const int o2 = orientation(p1, p2, q2);
    const int o3 = orientation(q1, q2, p1);
    const int o4 = orientation(q1, q2, p2);
    if (o1 != o2 && o3 != o4) return true;
    if (o1 == 0 && onSegmentColinear(p1, p2, q1)) return true;
    if (o2 == 0 && onSegmentColinear(p1, p2, q2)) return true;
    if (o3 == 0 && onSegmentColinear(q1, q2, p1)) return true;
    if (o4 == 0 && onSegmentColinear(q1, q2, p2)) return true;
    return false;
}

}  // namespace detail

/// Closed planar region over (lat, lon) degrees: a circle, a simple polygon,
/// or a multi-part union of those. Immutable after construction; copies share
/// the underlying shape data and are safe to pass between threads.
class Geofence {
public:
    struct Circle {
        Location center;
        double radius{0.0};
    };
    struct Polygon {
        std::vector<Location> ring;  // open ring, >= 3 distinct vertices
    };
    using Part = std::variant<Circle, Polygon>;

    static Geofence circle(const Location& center, double radiusDeg) {
        if (!(radiusDeg > 0.0) || !std::isfinite(radiusDeg)) {
            throw std::invalid_argument("circle radius must be a positive finite number");
        }
        Circle c{center, radiusDeg};
        return Geofence({Part{c}});
    }

    /// A simple (non-self-intersecting) closed ring. The closing duplicate
    /// vertex may be present or omitted.
    static Geofence polygon(std::vector<Location> ring) {
        if (ring.size() >= 2 && ring.front() == ring.back()) ring.pop_back();
        validateRing(ring);
        return Geofence({Part{Polygon{std::move(ring)}}});
    }

    static Geofence multi(std::vector<Geofence> fences) {
        if (fences.empty()) throw std::invalid_argument("multi-part fence needs at least one part");
        std::vector<Part> parts;
        for (const auto& f : fences) {
            parts.insert(parts.end(), f.parts().begin(), f.parts().end());
        }
        return Geofence(std::move(parts));
    }

    const std::vector<Part>& parts() const { return *parts_; }
    const BoundingBox& boundingBox() const { return box_; }

    /// True iff the point lies in the closed region. Boundary points count as
    /// inside (within kBoundaryEpsilonDeg).
    bool contains(const Location& p) const {
        for (const auto& part : *parts_) {
            if (std::holds_alternative<Circle>(part)) {
                const auto& c = std::get<Circle>(part);
                if (distanceDeg(c.center, p) <= c.radius + kBoundaryEpsilonDeg) return true;
            } else {
                if (polygonContains(std::get<Polygon>(part).ring, p)) return true;
            }
        }
        return false;
    }

    /// True iff the closed fence region shares at least one point with the
    /// half-open rectangle [sw.lat, ne.lat) x [sw.lon, ne.lon). This is the
    /// raster-field convention: a field owns its south and west edges but not
    /// its north and east edges.
    bool intersectsField(const BoundingBox& field) const {
        for (const auto& part : *parts_) {
            if (std::holds_alternative<Circle>(part)) {
                if (circleIntersectsField(std::get<Circle>(part), field)) return true;
            } else {
                if (polygonIntersectsField(std::get<Polygon>(part), field)) return true;
            }
        }
        return false;
    }

private:
    explicit Geofence(std::vector<Part> parts)
        : parts_(std::make_shared<const std::vector<Part>>(std::move(parts))) {
        box_ = computeBox(*parts_);
        // Planar fences must stay clear of the antimeridian and the poles.
        if (!(box_.southWest.lat > -90.0 && box_.northEast.lat < 90.0 &&
              box_.southWest.lon > -180.0 && box_.northEast.lon < 180.0)) {
            throw std::invalid_argument(
                "fence reaches the antimeridian or a pole; such fences are rejected");
        }
    }

    static BoundingBox partBox(const Part& part) {
        if (std::holds_alternative<Circle>(part)) {
            const auto& c = std::get<Circle>(part);
            BoundingBox b;
            b.southWest = Location{};  // raw fill below, ranges checked at fence level
            b.southWest.lat = c.center.lat - c.radius;
            b.southWest.lon = c.center.lon - c.radius;
            b.northEast.lat = c.center.lat + c.radius;
            b.northEast.lon = c.center.lon + c.radius;
            return b;
        }
        const auto& ring = std::get<Polygon>(part).ring;
        BoundingBox b;
        b.southWest.lat = b.northEast.lat = ring.front().lat;
        b.southWest.lon = b.northEast.lon = ring.front().lon;
        for (const auto& v : ring) {
            b.southWest.lat = std::min(b.southWest.lat, v.lat);
            b.southWest.lon = std::min(b.southWest.lon, v.lon);
            b.northEast.lat = std::max(b.northEast.lat, v.lat);
            b.northEast.lon = std::max(b.northEast.lon, v.lon);
        }
        return b;
    }

    static BoundingBox computeBox(const std::vector<Part>& parts) {
        BoundingBox box = partBox(parts.front());
        for (size_t i = 1; i < parts.size(); ++i) box = BoundingBox::merged(box, partBox(parts[i]));
        return box;
    }

    static void validateRing(const std::vector<Location>& ring) {
        if (ring.size() < 3) throw std::invalid_argument("polygon ring needs >= 3 distinct points");
        const size_t n = ring.size();
        for (size_t i = 0; i < n; ++i) {
            if (ring[i] == ring[(i + 1) % n]) {
                throw std::invalid_argument("polygon ring has duplicate consecutive points");
            }
        }
        // Non-adjacent edges must not touch anywhere (simple ring).
        for (size_t i = 0; i < n; ++i) {
            for (size_t j = i + 1; j < n; ++j) {
                const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
                if (adjacent) continue;
                if (detail::segmentsIntersect(ring[i], ring[(i + 1) % n], ring[j],
                                              ring[(j + 1) % n])) {
                    throw std::invalid_argument("polygon ring is self-intersecting");
                }
            }
        }
    }

    static bool polygonContains(const std::vector<Location>& ring, const Location& p) {
        const size_t n = ring.size();
        constexpr double eps2 = kBoundaryEpsilonDeg * kBoundaryEpsilonDeg;
        for (size_t i = 0; i < n; ++i) {
            if (detail::pointSegmentDist2(p, ring[i], ring[(i + 1) % n]) <= eps2) return true;
        }
        // Even-odd ray cast, ray towards +lon.
        bool inside = false;
        for (size_t i = 0, j = n - 1; i < n; j = i++) {
            const Location& a = ring[i];
            const Location& b = ring[j];
            if ((a.lat > p.lat) != (b.lat > p.lat)) {
                const double lonCross = a.lon + (p.lat - a.lat) / (b.lat - a.lat) * (b.lon - a.lon);
                if (p.lon < lonCross) inside = !inside;
            }
        }
        return inside;
    }

    static bool circleIntersectsField(const Circle& c, const BoundingBox& field) {
        const double nLat = detail::clampd(c.center.lat, field.southWest.lat, field.northEast.lat);
        const double nLon = detail::clampd(c.center.lon, field.southWest.lon, field.northEast.lon);
        const double dLat = c.center.lat - nLat;
        const double dLon = c.center.lon - nLon;
        const double d = std::sqrt(dLat * dLat + dLon * dLon);
        // Nearest point of the closed rectangle; if it is pinned to an excluded
        // (north/east) edge, only a strict overlap reaches the half-open field.
        const bool onExcludedEdge = nLat >= field.northEast.lat || nLon >= field.northEast.lon;
        if (onExcludedEdge) return d < c.radius - kBoundaryEpsilonDeg;
        return d <= c.radius + kBoundaryEpsilonDeg;
    }

    static bool polygonIntersectsField(const Polygon& poly, const BoundingBox& field) {
        BoundingBox pb = partBox(Part{poly});
        if (pb.northEast.lat < field.southWest.lat || pb.southWest.lat > field.northEast.lat ||
            pb.northEast.lon < field.southWest.lon || pb.southWest.lon > field.northEast.lon) {
            return false;
        }
        // Contact confined to the excluded north/east edges does not count.
        if (pb.southWest.lat >= field.northEast.lat) return false;
        if (pb.southWest.lon >= field.northEast.lon) return false;
        return polygonIntersectsClosedRect(poly.ring, field);
    }

    static bool polygonIntersectsClosedRect(const std::vector<Location>& ring,
                                            const BoundingBox& rect) {
        for (const auto& v : ring) {
            if (rect.contains(v)) return true;
        }
        const Location sw = rect.southWest;
        const Location ne = rect.northEast;
        const Location corners[4] = {sw, Location{sw.lat, ne.lon}, ne, Location{ne.lat, sw.lon}};
        for (const auto& corner : corners) {
            if (polygonContains(ring, corner)) return true;
        }
        const size_t n = ring.size();
        for (size_t i = 0; i < n; ++i) {
            const Location& a = ring[i];
            const Location& b = ring[(i + 1) % n];
            for (int e = 0; e < 4; ++e) {
                if (detail::segmentsIntersect(a, b, corners[e], corners[(e + 1) % 4])) return true;
            }
        }
        return false;
    }

    std::shared_ptr<const std::vector<Part>> parts_;
    BoundingBox box_;
};

inline bool contains(const Geofence& fence, const Location& point) { return fence.contains(point); }

inline bool intersects(const Geofence& fence, const BoundingBox& halfOpenBox) {
    return fence.intersectsField(halfOpenBox);
}

inline BoundingBox boundingBoxOf(const Geofence& fence) { return fence.boundingBox(); }

}  // namespace geomq
