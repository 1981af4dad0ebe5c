#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "geomq/geometry.hpp"

namespace geomq {

/// Identifies one raster field by its grid position. Indices are the
/// mathematical floor of coordinate * granularity, kept as integers so that
/// key equality never depends on floating-point rounding; the degree-valued
/// southwest corner is derived on demand.
struct RasterKey {
    int64_t latIdx{0};
    int64_t lonIdx{0};

    double latDegrees(int granularity) const {
        return static_cast<double>(latIdx) / granularity;
    }
    double lonDegrees(int granularity) const {
        return static_cast<double>(lonIdx) / granularity;
    }

    bool operator==(const RasterKey&) const = default;
};

struct RasterKeyHash {
    size_t operator()(const RasterKey& k) const {
        const uint64_t a = static_cast<uint64_t>(k.latIdx);
        const uint64_t b = static_cast<uint64_t>(k.lonIdx);
        uint64_t h = a * 0x9e3779b97f4a7c15ULL;
        h ^= b + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return static_cast<size_t>(h);
    }
};

/// (client id, topic filter) pair identifying one live subscription.
struct SubscriptionRef {
    std::string clientId;
    std::string filter;

    bool operator==(const SubscriptionRef&) const = default;
};

struct SubscriptionRefHash {
    size_t operator()(const SubscriptionRef& r) const {
        const size_t h1 = std::hash<std::string>{}(r.clientId);
        const size_t h2 = std::hash<std::string>{}(r.filter);
        return h1 ^ (h2 + 0x9e3779b97f4a7c15ULL + (h1 << 6) + (h1 >> 2));
    }
};

/// Grid cell of the point's location: floor towards minus infinity on both
/// axes, so negative coordinates snap downward.
inline RasterKey calculateKey(const Location& point, int granularity) {
    if (granularity < 1) throw std::invalid_argument("granularity must be >= 1");
    return RasterKey{static_cast<int64_t>(std::floor(point.lat * granularity)),
                     static_cast<int64_t>(std::floor(point.lon * granularity))};
}

/// All field keys whose field could intersect the box: the inclusive index
/// range between the snapped southwest and northeast corners, row by row.
inline std::vector<RasterKey> fieldsInBox(const BoundingBox& box, int granularity) {
    const RasterKey sw = calculateKey(box.southWest, granularity);
    const RasterKey ne = calculateKey(box.northEast, granularity);
    std::vector<RasterKey> keys;
    keys.reserve(static_cast<size_t>((ne.latIdx - sw.latIdx + 1) * (ne.lonIdx - sw.lonIdx + 1)));
    for (int64_t lat = sw.latIdx; lat <= ne.latIdx; ++lat) {
        for (int64_t lon = sw.lonIdx; lon <= ne.lonIdx; ++lon) {
            keys.push_back(RasterKey{lat, lon});
        }
    }
    return keys;
}

/// The half-open rectangle [sw, sw + 1/g) covered by a field.
inline BoundingBox fieldRect(const RasterKey& key, int granularity) {
    BoundingBox rect;  // corners may sit on the domain edge; skip Location range checks
    rect.southWest.lat = key.latDegrees(granularity);
    rect.southWest.lon = key.lonDegrees(granularity);
    rect.northEast.lat = static_cast<double>(key.latIdx + 1) / granularity;
    rect.northEast.lon = static_cast<double>(key.lonIdx + 1) / granularity;
    return rect;
}

/// Spatial index embedded in each topic-tree node: a sparse grid of raster
/// fields, each holding the subscriptions whose consumer geofence intersects
/// that field. Fields are created lazily and dropped when emptied. Not
/// internally synchronized; callers serialize writers against readers.
class Raster {
public:
    explicit Raster(int granularity, bool finalIntersectionCheck = true)
        : granularity_(granularity), finalIntersectionCheck_(finalIntersectionCheck) {
        if (granularity < 1) throw std::invalid_argument("granularity must be >= 1");
    }

    int granularity() const { return granularity_; }

    /// Place (or re-place) a subscription. The previous placement of the same
    /// ref, if any, is removed first using the cached fence.
    void put(const SubscriptionRef& ref, const Geofence& fence) {
        auto it = placed_.find(ref);
        if (it != placed_.end()) {
            erasePlacement(ref, it->second);
            placed_.erase(it);
        }
        for (const RasterKey& key : fieldsInBox(fence.boundingBox(), granularity_)) {
            if (finalIntersectionCheck_ && !fence.intersectsField(fieldRect(key, granularity_))) {
                continue;
            }
            fields_[key].push_back(ref);
        }
        placed_.emplace(ref, fence);
    }

    /// Remove a subscription from every field it was placed in. Unknown refs
    /// are a no-op.
    void remove(const SubscriptionRef& ref) {
        auto it = placed_.find(ref);
        if (it == placed_.end()) return;
        erasePlacement(ref, it->second);
        placed_.erase(it);
    }

    /// Contents of the field containing the point: a superset of the
    /// subscriptions whose fence contains it (false positives are filtered by
    /// the exact contains check downstream). Returns nullptr for an absent
    /// field.
    const std::vector<SubscriptionRef>* candidatesAt(const Location& point) const {
        auto it = fields_.find(calculateKey(point, granularity_));
        return it == fields_.end() ? nullptr : &it->second;
    }

    bool empty() const { return fields_.empty() && placed_.empty(); }
    size_t fieldCount() const { return fields_.size(); }
    size_t subscriptionCount() const { return placed_.size(); }

    const std::unordered_map<SubscriptionRef, Geofence, SubscriptionRefHash>& live() const {
        return placed_;
    }

    const std::vector<SubscriptionRef>* fieldContents(const RasterKey& key) const {
        auto it = fields_.find(key);
        return it == fields_.end() ? nullptr : &it->second;
    }

private:
    void erasePlacement(const SubscriptionRef& ref, const Geofence& fence) {
        for (const RasterKey& key : fieldsInBox(fence.boundingBox(), granularity_)) {
            auto fit = fields_.find(key);
            if (fit == fields_.end()) continue;
            auto& refs = fit->second;
            std::erase(refs, ref);
            if (refs.empty()) fields_.erase(fit);
        }
    }

    int granularity_;
    bool finalIntersectionCheck_;
    std::unordered_map<RasterKey, std::vector<SubscriptionRef>, RasterKeyHash> fields_;
    std::unordered_map<SubscriptionRef, Geofence, SubscriptionRefHash> placed_;
};

}  // namespace geomq
