#pragma once

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <latch>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "geomq/client.hpp"
#include "geomq/raster.hpp"
#include "geomq/subscription_store.hpp"
#include "geomq/topic.hpp"
#include "geomq/trajectory.hpp"
#include "geomq/wkt.hpp"

namespace geomq {

enum class Mode { Geo, NoGeo };
enum class ClientKind { Travel, Teleport };

inline const char* modeName(Mode m) { return m == Mode::Geo ? "geo" : "nogeo"; }
inline const char* kindName(ClientKind k) { return k == ClientKind::Travel ? "travel" : "teleport"; }

struct ExperimentConfig {
    Mode mode = Mode::Geo;
    ClientKind kind = ClientKind::Travel;
    int clientCount = 10;
    double fenceRadiusDeg = 0.01;
    size_t payloadBytes = 750;
    std::string topic = "data";
    double durationSecs = 60.0;
    std::string brokerHost = "localhost";
    uint16_t brokerPort = 5559;
    std::chrono::milliseconds startStagger{100};
    // Absolute start for multi-host coordination; the epoch default means
    // "two seconds from now".
    std::chrono::system_clock::time_point startTime{};
    // Round-synchronized mode: every client settles its location and fence,
    // all publish, repeat. Trades realism for run-to-run reproducible match
    // counts.
    bool lockstep = false;
    int lockstepRounds = 0;  // 0 derives one round per second of duration
};

// ---- payload identity ----

/// Delivery identity embedded in every generated payload, after the 8-byte
/// send-timestamp slot: publisher id and per-publisher sequence number.
struct DeliveryTag {
    std::string publisher;
    int64_t seq = 0;

    bool operator==(const DeliveryTag&) const = default;
    auto operator<=>(const DeliveryTag&) const = default;
};

inline std::string buildPayload(size_t payloadBytes, const std::string& publisher, int64_t seq) {
    const std::string tag = "|p=" + publisher + "|q=" + std::to_string(seq) + "|";
    const size_t size = std::max(payloadBytes, 8 + tag.size());
    std::string payload(size, 'x');
    std::copy(tag.begin(), tag.end(), payload.begin() + 8);
    return payload;
}

inline std::optional<DeliveryTag> parseDeliveryTag(std::string_view payload) {
    const size_t p = payload.find("|p=");
    if (p == std::string_view::npos) return std::nullopt;
    const size_t q = payload.find("|q=", p + 3);
    if (q == std::string_view::npos) return std::nullopt;
    const size_t end = payload.find('|', q + 3);
    if (end == std::string_view::npos) return std::nullopt;
    DeliveryTag tag;
    tag.publisher = std::string(payload.substr(p + 3, q - (p + 3)));
    try {
        tag.seq = std::stoll(std::string(payload.substr(q + 3, end - (q + 3))));
    } catch (const std::exception&) {
        return std::nullopt;
    }
    return tag;
}

// ---- results ----

struct ClientRunResult {
    std::string clientId;
    std::vector<LatencySample> samples;
    std::vector<Delivery> deliveries;
    std::vector<std::string> opLog;  // deterministic op sequence, for run comparison
    uint64_t failures = 0;
};

struct OpStats {
    std::string op;
    size_t count = 0;
    double meanUs = 0.0;
    double p50Us = 0.0;
    double p99Us = 0.0;
};

struct RunReport {
    std::vector<OpStats> perOp;
    uint64_t publishes = 0;
    uint64_t matchedTotal = 0;
    uint64_t delivered = 0;
    int64_t lost = 0;  // matchedTotal - delivered
    double deliveriesPerPublish = 0.0;
    uint64_t failures = 0;
    double durationSecs = 0.0;
    size_t mdlCount = 0;
    double mdlMeanUs = 0.0;
    std::vector<ClientRunResult> clients;

    const OpStats* opStats(const std::string& op) const {
        for (const auto& s : perOp) {
            if (s.op == op) return &s;
        }
        return nullptr;
    }
};

/// Nearest-rank percentile of an unsorted sample set; q in (0, 100].
inline double percentileUs(std::vector<int64_t> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const size_t rank = static_cast<size_t>(std::ceil(q / 100.0 * values.size()));
    return static_cast<double>(values[std::min(rank, values.size()) - 1]);
}

inline RunReport buildReport(std::vector<ClientRunResult> clients, double durationSecs) {
    RunReport report;
    report.durationSecs = durationSecs;
    std::map<std::string, std::vector<int64_t>> byOp;
    int64_t mdlSum = 0;
    for (const auto& c : clients) {
        report.failures += c.failures;
        for (const auto& s : c.samples) {
            byOp[s.opKind].push_back(s.latencyUs);
            if (s.opKind == "publish") {
                report.publishes++;
                if (s.matchedCount > 0) {
                    report.matchedTotal += static_cast<uint64_t>(s.matchedCount);
                }
            }
        }
        report.delivered += c.deliveries.size();
        for (const auto& d : c.deliveries) {
            if (const auto stamp = readPayloadStamp(d.payload)) {
                mdlSum += d.receivedAtUs - *stamp;
                report.mdlCount++;
            }
        }
    }
    for (auto& [op, latencies] : byOp) {
        OpStats s;
        s.op = op;
        s.count = latencies.size();
        int64_t sum = 0;
        for (const int64_t v : latencies) sum += v;
        s.meanUs = static_cast<double>(sum) / static_cast<double>(latencies.size());
        s.p50Us = percentileUs(latencies, 50.0);
        s.p99Us = percentileUs(latencies, 99.0);
        report.perOp.push_back(std::move(s));
    }
    report.lost = static_cast<int64_t>(report.matchedTotal) -
                  static_cast<int64_t>(report.delivered);
    if (report.publishes > 0) {
        report.deliveriesPerPublish =
            static_cast<double>(report.delivered) / static_cast<double>(report.publishes);
    }
    if (report.mdlCount > 0) {
        report.mdlMeanUs = static_cast<double>(mdlSum) / static_cast<double>(report.mdlCount);
    }
    report.clients = std::move(clients);
    return report;
}

// ---- client behaviors ----

namespace loadgen_detail {

inline std::string fmtLoc(const Location& loc) {
    return fmtNumber(loc.lat) + "," + fmtNumber(loc.lon);
}

struct WorkerPlan {
    const ExperimentConfig* cfg;
    const Trajectory* traj;
    std::string clientId;
    std::chrono::steady_clock::time_point startAt;
    std::chrono::steady_clock::time_point stopAt;
    std::barrier<>* barrier = nullptr;  // lockstep only
    int rounds = 0;
};

/// Drains deliveries until the stream has been quiet for a few polls, so
/// frames still in flight at loop end are counted.
inline void drainDeliveries(Client& client, ClientRunResult& res) {
    int quiet = 0;
    while (quiet < 3) {
        bool any = false;
        while (auto d = client.pollDelivery()) {
            res.deliveries.push_back(std::move(*d));
            any = true;
        }
        if (any) {
            quiet = 0;
        } else {
            ++quiet;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
}

inline ClientRunResult runClientWorker(const WorkerPlan& plan) {
    const ExperimentConfig& cfg = *plan.cfg;
    const Trajectory& traj = *plan.traj;
    ClientRunResult res;
    res.clientId = plan.clientId;
    bool inBarrier = plan.barrier != nullptr;
    try {
        if (!plan.barrier) std::this_thread::sleep_until(plan.startAt);
        Client client(cfg.brokerHost, cfg.brokerPort, plan.clientId, traj.points.front().loc);
        res.opLog.push_back("connect " + fmtLoc(traj.points.front().loc));

        int64_t seq = 0;
        auto circleWkt = [&](const Location& loc) {
            return formatWkt(Geofence::circle(loc, cfg.fenceRadiusDeg));
        };
        auto geoPrelude = [&](const Location& loc) {
            client.ping(loc);
            res.opLog.push_back("ping " + fmtLoc(loc));
            client.subscribe(cfg.topic, circleWkt(loc));
            res.opLog.push_back("subscribe " + fmtLoc(loc));
        };
        auto publishOnce = [&](const Location& loc) {
            std::optional<std::string> fence;
            if (cfg.mode == Mode::Geo) fence = circleWkt(loc);
            std::string payload = buildPayload(cfg.payloadBytes, plan.clientId, seq);
            stampPayload(payload, wallNowUs());
            res.opLog.push_back("publish " + std::to_string(seq) + " " + fmtLoc(loc));
            client.publish(cfg.topic, std::move(fence), std::move(payload));
            ++seq;
        };
        auto waypointOps = [&](const Location& loc) {
            if (cfg.mode == Mode::Geo) geoPrelude(loc);
            publishOnce(loc);
        };

        if (cfg.mode == Mode::NoGeo) {
            client.subscribe(cfg.topic, std::nullopt);
            res.opLog.push_back("subscribe all");
        }

        if (plan.barrier) {
            const size_t n = traj.points.size();
            for (int round = 0; round < plan.rounds; ++round) {
                const Location& loc = traj.points[static_cast<size_t>(round) % n].loc;
                if (cfg.mode == Mode::Geo) geoPrelude(loc);
                plan.barrier->arrive_and_wait();
                publishOnce(loc);
                plan.barrier->arrive_and_wait();
            }
            inBarrier = false;
        } else if (cfg.kind == ClientKind::Travel) {
            bool stopped = false;
            while (!stopped && std::chrono::steady_clock::now() < plan.stopAt) {
                const auto cycleStart = std::chrono::steady_clock::now();
                const double t0 = traj.points.front().t;
                for (const auto& wp : traj.points) {
                    const auto due =
                        cycleStart + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double>(wp.t - t0));
                    if (due >= plan.stopAt) {
                        stopped = true;
                        break;
                    }
                    std::this_thread::sleep_until(due);
                    waypointOps(wp.loc);
                }
                // trajectory exhausted: restart instantly from the first waypoint
            }
        } else {
            bool stopped = false;
            while (!stopped) {
                for (const auto& wp : traj.points) {
                    if (std::chrono::steady_clock::now() >= plan.stopAt) {
                        stopped = true;
                        break;
                    }
                    waypointOps(wp.loc);
                }
            }
        }

        drainDeliveries(client, res);
        res.samples = client.samples();
        res.failures = client.failedRequests();
        client.disconnect();
    } catch (const std::exception& e) {
        res.failures++;
        res.opLog.push_back(std::string("error: ") + e.what());
        if (inBarrier) plan.barrier->arrive_and_drop();
    }
    return res;
}

}  // namespace loadgen_detail

/// Runs the full experiment against a broker: clientCount clients on
/// trajectories 0..N-1, staggered starts, joined at duration end. Lockstep
/// configs replace timing with barrier-paced rounds.
inline RunReport runExperiment(const ExperimentConfig& cfg,
                               const std::vector<Trajectory>& trajectories) {
    if (cfg.clientCount < 1) throw std::invalid_argument("need at least one client");
    if (trajectories.size() < static_cast<size_t>(cfg.clientCount)) {
        throw std::invalid_argument("not enough trajectories: have " +
                                    std::to_string(trajectories.size()) + ", need " +
                                    std::to_string(cfg.clientCount));
    }
    using std::chrono::steady_clock;
    const auto sysStart = cfg.startTime.time_since_epoch().count() == 0
                              ? std::chrono::system_clock::now() + std::chrono::seconds(2)
                              : cfg.startTime;
    const auto sysDelay = sysStart - std::chrono::system_clock::now();
    const auto steadyBase =
        steady_clock::now() +
        std::chrono::duration_cast<steady_clock::duration>(std::max(
            sysDelay, std::chrono::system_clock::duration::zero()));
    const auto stopAt = steadyBase + std::chrono::duration_cast<steady_clock::duration>(
                                         std::chrono::duration<double>(cfg.durationSecs));

    const int rounds = cfg.lockstepRounds > 0
                           ? cfg.lockstepRounds
                           : std::max(1, static_cast<int>(cfg.durationSecs));
    std::optional<std::barrier<>> barrier;
    if (cfg.lockstep) barrier.emplace(cfg.clientCount);

    const auto wallStart = steady_clock::now();
    std::vector<ClientRunResult> results(static_cast<size_t>(cfg.clientCount));
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(cfg.clientCount));
    for (int i = 0; i < cfg.clientCount; ++i) {
        threads.emplace_back([&, i] {
            loadgen_detail::WorkerPlan plan;
            plan.cfg = &cfg;
            plan.traj = &trajectories[static_cast<size_t>(i)];
            plan.clientId = "c" + std::to_string(i);
            plan.startAt = steadyBase + cfg.startStagger * i;
            plan.stopAt = stopAt;
            plan.barrier = barrier ? &*barrier : nullptr;
            plan.rounds = rounds;
            results[static_cast<size_t>(i)] = loadgen_detail::runClientWorker(plan);
        });
    }
    for (auto& t : threads) t.join();
    const double elapsed =
        std::chrono::duration<double>(steady_clock::now() - wallStart).count();
    return buildReport(std::move(results), elapsed);
}

// ---- report output ----

inline void writeSamplesCsv(const std::string& path, const RunReport& report) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "op_kind,t_start,latency_us,matched_count\n";
    for (const auto& c : report.clients) {
        for (const auto& s : c.samples) {
            out << s.opKind << ',' << s.tStartUs << ',' << s.latencyUs << ',' << s.matchedCount
                << '\n';
        }
    }
}

inline void writeSummaryJson(const std::string& path, const RunReport& report) {
    nlohmann::json j;
    j["duration_secs"] = report.durationSecs;
    j["publishes"] = report.publishes;
    j["matched_total"] = report.matchedTotal;
    j["delivered"] = report.delivered;
    j["lost"] = report.lost;
    j["deliveries_per_publish"] = report.deliveriesPerPublish;
    j["failures"] = report.failures;
    j["clients"] = report.clients.size();
    nlohmann::json ops = nlohmann::json::array();
    for (const auto& s : report.perOp) {
        ops.push_back({{"op", s.op},
                       {"count", s.count},
                       {"mean_us", s.meanUs},
                       {"p50_us", s.p50Us},
                       {"p99_us", s.p99Us}});
    }
    j["per_op"] = ops;
    if (report.mdlCount > 0) {
        j["mdl"] = {{"count", report.mdlCount}, {"mean_us", report.mdlMeanUs}};
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << '\n';
}

/// Waypoint density of the first n trajectories on the raster grid, as CSV
/// rows "lat,lon,count" (southwest field corners, ascending).
inline void writeHeatmapCsv(const std::string& path, const std::vector<Trajectory>& trajectories,
                            size_t firstN, int granularity) {
    std::map<std::pair<int64_t, int64_t>, uint64_t> counts;
    const size_t n = std::min(firstN, trajectories.size());
    for (size_t i = 0; i < n; ++i) {
        for (const auto& wp : trajectories[i].points) {
            const RasterKey key = calculateKey(wp.loc, granularity);
            counts[{key.latIdx, key.lonIdx}]++;
        }
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "lat,lon,count\n";
    for (const auto& [key, count] : counts) {
        const RasterKey k{key.first, key.second};
        out << fmtNumber(k.latDegrees(granularity)) << ',' << fmtNumber(k.lonDegrees(granularity))
            << ',' << count << '\n';
    }
}

// ---- in-process index benchmarks ----

struct IndexBenchConfig {
    int clients = 10;
    int updateWeight = 1;
    int getWeight = 1;
    int granularity = 10;
    double fenceRadiusDeg = 0.01;
    uint64_t opsPerClient = 20000;
    uint64_t seed = 1;
    std::string topic = "data";
    BoundingBox region = kDefaultSyntheticRegion;
};

struct IndexBenchResult {
    int granularity = 0;
    int updateWeight = 0;
    int getWeight = 0;
    uint64_t updates = 0;
    uint64_t gets = 0;
    double elapsedSecs = 0.0;
    double updatesPerSec = 0.0;
    double getsPerSec = 0.0;
    double opsPerSec = 0.0;
};

/// Drives the subscription store directly, no network: each driver thread
/// walks a random location and issues subscription updates (a moved circular
/// fence) and gets (a full match as publisher) at the configured ratio.
inline IndexBenchResult runIndexBenchmark(const IndexBenchConfig& cfg) {
    SubscriptionStore store(cfg.granularity);
    const TopicFilter filter(cfg.topic);
    const Topic topic(cfg.topic);

    struct Tally {
        uint64_t updates = 0;
        uint64_t gets = 0;
        uint64_t matchedSink = 0;
    };
    std::vector<Tally> tallies(static_cast<size_t>(cfg.clients));

    // Seed every client with a location and one subscription so gets always
    // have work to do regardless of ratio.
    std::vector<Location> startLocs;
    for (int i = 0; i < cfg.clients; ++i) {
        std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(i) + 101);
        std::uniform_real_distribution<double> lat(cfg.region.southWest.lat,
                                                   cfg.region.northEast.lat);
        std::uniform_real_distribution<double> lon(cfg.region.southWest.lon,
                                                   cfg.region.northEast.lon);
        const Location loc(lat(rng), lon(rng));
        startLocs.push_back(loc);
        const std::string id = "b" + std::to_string(i);
        store.updateLocation(id, loc);
        store.subscribe(id, filter, Geofence::circle(loc, cfg.fenceRadiusDeg));
    }

    std::latch startLine(static_cast<ptrdiff_t>(cfg.clients) + 1);
    std::vector<std::thread> threads;
    for (int i = 0; i < cfg.clients; ++i) {
        threads.emplace_back([&, i] {
            const std::string id = "b" + std::to_string(i);
            std::mt19937_64 rng(cfg.seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(i) + 7);
            std::uniform_real_distribution<double> step(-0.001, 0.001);
            std::uniform_int_distribution<int> pick(1, cfg.updateWeight + cfg.getWeight);
            Location loc = startLocs[static_cast<size_t>(i)];
            Tally& tally = tallies[static_cast<size_t>(i)];
            startLine.arrive_and_wait();
            for (uint64_t k = 0; k < cfg.opsPerClient; ++k) {
                loc.lat = reflect(loc.lat + step(rng), cfg.region.southWest.lat,
                                  cfg.region.northEast.lat);
                loc.lon = reflect(loc.lon + step(rng), cfg.region.southWest.lon,
                                  cfg.region.northEast.lon);
                if (pick(rng) <= cfg.updateWeight) {
                    store.subscribe(id, filter, Geofence::circle(loc, cfg.fenceRadiusDeg));
                    tally.updates++;
                } else {
                    const auto matched =
                        store.match(topic, id, Geofence::circle(loc, cfg.fenceRadiusDeg));
                    tally.matchedSink += matched.size();
                    tally.gets++;
                }
            }
        });
    }
    startLine.arrive_and_wait();
    const auto t0 = std::chrono::steady_clock::now();
    for (auto& t : threads) t.join();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    IndexBenchResult res;
    res.granularity = cfg.granularity;
    res.updateWeight = cfg.updateWeight;
    res.getWeight = cfg.getWeight;
    res.elapsedSecs = elapsed;
    for (const auto& t : tallies) {
        res.updates += t.updates;
        res.gets += t.gets;
    }
    if (elapsed > 0) {
        res.updatesPerSec = static_cast<double>(res.updates) / elapsed;
        res.getsPerSec = static_cast<double>(res.gets) / elapsed;
        res.opsPerSec = static_cast<double>(res.updates + res.gets) / elapsed;
    }
    return res;
}

struct OpMixResult {
    uint64_t adds = 0;
    uint64_t updates = 0;
    uint64_t gets = 0;
    uint64_t matchedTotal = 0;
    double elapsedSecs = 0.0;
};

/// Single-threaded mixed workload over one store: adds create fresh
/// subscriptions, updates move an existing one's fence, gets run a full
/// match. The op order is a seeded shuffle with an add pinned first.
inline OpMixResult runOpMixBenchmark(uint64_t adds, uint64_t updates, uint64_t gets,
                                     int granularity = 10, uint64_t seed = 1,
                                     double fenceRadiusDeg = 0.01,
                                     const BoundingBox& region = kDefaultSyntheticRegion) {
    enum : uint8_t { kAdd = 0, kUpdate = 1, kGet = 2 };
    std::vector<uint8_t> schedule;
    schedule.reserve(adds + updates + gets);
    schedule.insert(schedule.end(), adds, kAdd);
    schedule.insert(schedule.end(), updates, kUpdate);
    schedule.insert(schedule.end(), gets, kGet);
    std::mt19937_64 rng(seed);
    std::shuffle(schedule.begin(), schedule.end(), rng);
    for (auto& op : schedule) {
        if (op == kAdd) {
            std::swap(op, schedule.front());
            break;
        }
    }

    SubscriptionStore store(granularity);
    const TopicFilter filter("data");
    const Topic topic("data");
    std::uniform_real_distribution<double> lat(region.southWest.lat, region.northEast.lat);
    std::uniform_real_distribution<double> lon(region.southWest.lon, region.northEast.lon);
    std::vector<std::string> clients;
    clients.reserve(adds);

    OpMixResult res;
    const auto t0 = std::chrono::steady_clock::now();
    for (const uint8_t op : schedule) {
        const Location loc(lat(rng), lon(rng));
        switch (op) {
            case kAdd: {
                clients.push_back("m" + std::to_string(clients.size()));
                store.updateLocation(clients.back(), loc);
                store.subscribe(clients.back(), filter, Geofence::circle(loc, fenceRadiusDeg));
                res.adds++;
                break;
            }
            case kUpdate: {
                const auto& id = clients[rng() % clients.size()];
                store.subscribe(id, filter, Geofence::circle(loc, fenceRadiusDeg));
                res.updates++;
                break;
            }
            default: {
                const auto& id = clients[rng() % clients.size()];
                res.matchedTotal +=
                    store.match(topic, id, Geofence::circle(loc, fenceRadiusDeg)).size();
                res.gets++;
                break;
            }
        }
    }
    res.elapsedSecs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

}  // namespace geomq
