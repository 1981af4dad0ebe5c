#include <algorithm>
#include <random>

#include <catch2/catch_amalgamated.hpp>

#include <geomq/raster.hpp>

using namespace geomq;

TEST_CASE("keys floor towards minus infinity") {
    // Values frozen from an independent evaluation of the double products;
    // rows like 39.98 * 100 = 3997.9999999999995 pin the float semantics.
    struct Row {
        double lat, lon;
        int granularity;
        int64_t latIdx, lonIdx;
    };
    const Row rows[] = {
        {0.0, 0.0, 1, 0, 0},
        {0.999, 0.999, 1, 0, 0},
        {1.0, 1.0, 1, 1, 1},
        {-0.001, -0.001, 1, -1, -1},
        {51.5, -0.3, 1, 51, -1},
        {-89.9, -179.9, 1, -90, -180},
        {0.1, 0.1, 10, 1, 1},
        {-0.1, -0.1, 10, -1, -1},
        {39.9753, 116.3309, 10, 399, 1163},
        {-39.98, -116.33, 10, -400, -1164},
        {0.04, 0.04, 25, 1, 1},
        {0.019999, 0.020001, 50, 0, 1},
        {39.98, 116.33, 100, 3997, 11633},
        {1.005, -1.005, 100, 100, -101},
    };
    for (const Row& r : rows) {
        CAPTURE(r.lat, r.lon, r.granularity);
        const RasterKey key = calculateKey(Location(r.lat, r.lon), r.granularity);
        CHECK(key.latIdx == r.latIdx);
        CHECK(key.lonIdx == r.lonIdx);
    }
    CHECK_THROWS_AS(calculateKey(Location(0, 0), 0), std::invalid_argument);
}

TEST_CASE("fieldsInBox enumerates the inclusive snapped index grid") {
    const auto keys = [](std::vector<RasterKey> v) {
        std::sort(v.begin(), v.end(), [](const RasterKey& a, const RasterKey& b) {
            return a.latIdx != b.latIdx ? a.latIdx < b.latIdx : a.lonIdx < b.lonIdx;
        });
        return v;
    };

    CHECK(keys(fieldsInBox(BoundingBox(Location(0, 0), Location(0.05, 0.05)), 10)) ==
          std::vector<RasterKey>{{0, 0}});
    CHECK(keys(fieldsInBox(BoundingBox(Location(0, 0), Location(0.1, 0.1)), 10)) ==
          std::vector<RasterKey>{{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    CHECK(keys(fieldsInBox(BoundingBox(Location(-0.05, -0.05), Location(0.05, 0.05)), 10)) ==
          std::vector<RasterKey>{{-1, -1}, {-1, 0}, {0, -1}, {0, 0}});
    CHECK(keys(fieldsInBox(BoundingBox(Location(2.5, 3.5), Location(2.5, 3.5)), 1)) ==
          std::vector<RasterKey>{{2, 3}});
    CHECK(keys(fieldsInBox(BoundingBox(Location(-2.7, -3.2), Location(-2.2, -3.0)), 1)) ==
          std::vector<RasterKey>{{-3, -4}, {-3, -3}});
    CHECK(fieldsInBox(BoundingBox(Location(0, 0), Location(2, 2)), 1).size() == 9);
    CHECK(fieldsInBox(BoundingBox(Location(39.97, 116.32), Location(39.99, 116.34)), 100).size() ==
          9);
}

TEST_CASE("field rectangles are the inverse of key calculation") {
    const BoundingBox r0 = fieldRect(RasterKey{0, 0}, 10);
    CHECK(r0.southWest == Location(0, 0));
    CHECK(r0.northEast == Location(0.1, 0.1));

    const BoundingBox rn = fieldRect(RasterKey{-1, -1}, 10);
    CHECK(rn.southWest.lat == -0.1);
    CHECK(rn.northEast.lat == 0.0);

    // Every point maps into the field rectangle of its own key.
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> coord(-80.0, 80.0);
    for (const int g : {1, 7, 10, 25, 100}) {
        for (int i = 0; i < 500; ++i) {
            const Location p(coord(rng), coord(rng));
            const RasterKey key = calculateKey(p, g);
            const BoundingBox rect = fieldRect(key, g);
            CHECK(p.lat >= rect.southWest.lat);
            CHECK(p.lat < rect.northEast.lat);
            CHECK(p.lon >= rect.southWest.lon);
            CHECK(p.lon < rect.northEast.lon);
        }
    }
}

TEST_CASE("put places a subscription in every intersected field") {
    Raster raster(10);
    const SubscriptionRef ref{"c1", "data"};
    raster.put(ref, Geofence::circle(Location(0.05, 0.05), 0.01));
    CHECK(raster.fieldCount() == 1);
    CHECK(raster.subscriptionCount() == 1);

    const auto* hit = raster.candidatesAt(Location(0.05, 0.05));
    REQUIRE(hit != nullptr);
    CHECK(std::count(hit->begin(), hit->end(), ref) == 1);
    CHECK(raster.candidatesAt(Location(0.15, 0.05)) == nullptr);
}

TEST_CASE("candidates are a superset of true matches") {
    // Circle around (0.95, 0.95) reaches three fields (the fourth corner of
    // its bounding box is 0.0707 away); the point (0.91, 0.91) shares a field
    // without being inside the fence. The raster must report it as a
    // candidate and the exact check later rejects it.
    Raster raster(10);
    const SubscriptionRef ref{"c1", "data"};
    const Geofence fence = Geofence::circle(Location(0.95, 0.95), 0.05);
    raster.put(ref, fence);
    CHECK(raster.fieldCount() == 3);

    const Location probe(0.91, 0.91);
    const auto* hit = raster.candidatesAt(probe);
    REQUIRE(hit != nullptr);
    CHECK(std::count(hit->begin(), hit->end(), ref) == 1);
    CHECK_FALSE(fence.contains(probe));
}

TEST_CASE("the final intersection check prunes fields the fence misses") {
    // The triangle's bounding box touches four unit fields, the shape itself
    // only three.
    const Geofence tri = Geofence::polygon({Location(0, 0), Location(1.8, 0), Location(0, 1.8)});

    Raster checked(1, true);
    checked.put(SubscriptionRef{"c1", "t"}, tri);
    CHECK(checked.fieldCount() == 3);
    CHECK(checked.candidatesAt(Location(1.1, 1.1)) == nullptr);

    Raster unchecked(1, false);
    unchecked.put(SubscriptionRef{"c1", "t"}, tri);
    CHECK(unchecked.fieldCount() == 4);
    REQUIRE(unchecked.candidatesAt(Location(1.1, 1.1)) != nullptr);
    CHECK_FALSE(tri.contains(Location(1.1, 1.1)));
}

TEST_CASE("re-placing a subscription moves it") {
    Raster raster(10);
    const SubscriptionRef ref{"c1", "data"};
    raster.put(ref, Geofence::circle(Location(0.05, 0.05), 0.01));
    raster.put(ref, Geofence::circle(Location(5.05, 5.05), 0.01));
    CHECK(raster.subscriptionCount() == 1);
    CHECK(raster.candidatesAt(Location(0.05, 0.05)) == nullptr);
    CHECK(raster.candidatesAt(Location(5.05, 5.05)) != nullptr);
}

TEST_CASE("remove erases placements and empty fields") {
    Raster raster(10);
    const SubscriptionRef a{"c1", "data"};
    const SubscriptionRef b{"c2", "data"};
    raster.put(a, Geofence::circle(Location(0.05, 0.05), 0.01));
    raster.put(b, Geofence::circle(Location(0.05, 0.05), 0.01));

    raster.remove(a);
    CHECK(raster.subscriptionCount() == 1);
    const auto* hit = raster.candidatesAt(Location(0.05, 0.05));
    REQUIRE(hit != nullptr);
    CHECK(std::count(hit->begin(), hit->end(), b) == 1);

    raster.remove(b);
    CHECK(raster.empty());
    CHECK(raster.fieldCount() == 0);

    CHECK_NOTHROW(raster.remove(SubscriptionRef{"nobody", "x"}));
}

TEST_CASE("no contained point is ever missed by the index") {
    std::mt19937_64 rng(33);
    std::uniform_real_distribution<double> coord(-5.0, 5.0);
    std::uniform_real_distribution<double> radius(0.001, 0.8);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);

    for (const int g : {1, 7, 10, 50}) {
        Raster raster(g);
        std::vector<std::pair<SubscriptionRef, Geofence>> placed;
        for (int i = 0; i < 150; ++i) {
            const SubscriptionRef ref{"c" + std::to_string(i), "data"};
            const Geofence fence = Geofence::circle(Location(coord(rng), coord(rng)), radius(rng));
            raster.put(ref, fence);
            placed.emplace_back(ref, fence);
        }
        for (int i = 0; i < 1500; ++i) {
            const auto& [ref, fence] = placed[static_cast<size_t>(i) % placed.size()];
            const auto& c = std::get<Geofence::Circle>(fence.parts().front());
            const Location p(c.center.lat + jitter(rng) * c.radius,
                             c.center.lon + jitter(rng) * c.radius);
            if (!fence.contains(p)) continue;
            const auto* hit = raster.candidatesAt(p);
            REQUIRE(hit != nullptr);
            CHECK(std::count(hit->begin(), hit->end(), ref) == 1);
        }
    }
}
