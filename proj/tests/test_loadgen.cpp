#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <catch2/catch_amalgamated.hpp>
#include <json.hpp>

#include <geomq/broker.hpp>
#include <geomq/loadgen.hpp>

using namespace geomq;

namespace {

std::filesystem::path tempFile(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "geomq_loadgen_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out.push_back(line);
    return out;
}

Trajectory makeTrajectory(int id, std::vector<Location> locs) {
    Trajectory traj;
    traj.id = id;
    double t = 0.0;
    for (const auto& loc : locs) {
        traj.points.push_back(Waypoint{t, loc});
        t += 1.0;
    }
    return traj;
}

/// Op kinds of one client's samples, in issue order.
std::vector<std::string> opSequence(const ClientRunResult& c) {
    std::vector<std::string> out;
    for (const auto& s : c.samples) out.push_back(s.opKind);
    return out;
}

std::multiset<DeliveryTag> tagsOf(const ClientRunResult& c) {
    std::multiset<DeliveryTag> out;
    for (const auto& d : c.deliveries) {
        const auto tag = parseDeliveryTag(d.payload);
        REQUIRE(tag.has_value());
        out.insert(*tag);
    }
    return out;
}

}  // namespace

TEST_CASE("payload carries a parseable publisher tag after the stamp slot") {
    const std::string payload = buildPayload(64, "c3", 17);
    CHECK(payload.size() == 64);
    CHECK(payload.substr(8, 11) == "|p=c3|q=17|");

    const auto tag = parseDeliveryTag(payload);
    REQUIRE(tag.has_value());
    CHECK(tag->publisher == "c3");
    CHECK(tag->seq == 17);

    SECTION("requested size below the minimum grows to fit") {
        const std::string tiny = buildPayload(0, "client-with-long-name", 123456);
        CHECK(tiny.size() == 8 + std::string("|p=client-with-long-name|q=123456|").size());
        const auto t = parseDeliveryTag(tiny);
        REQUIRE(t.has_value());
        CHECK(t->publisher == "client-with-long-name");
        CHECK(t->seq == 123456);
    }

    SECTION("stamping the first eight bytes leaves the tag intact") {
        std::string stamped = payload;
        stampPayload(stamped, 1234567890123456);
        CHECK(readPayloadStamp(stamped) == 1234567890123456);
        CHECK(parseDeliveryTag(stamped) == tag);
    }
}

TEST_CASE("malformed payloads yield no tag or stamp") {
    CHECK_FALSE(parseDeliveryTag("xxxxxxxxxxxx").has_value());
    CHECK_FALSE(parseDeliveryTag("xxxxxxxx|p=a|").has_value());
    CHECK_FALSE(parseDeliveryTag("xxxxxxxx|p=a|q=5").has_value());
    CHECK_FALSE(parseDeliveryTag("xxxxxxxx|p=a|q=notanumber|").has_value());
    CHECK_FALSE(readPayloadStamp("short").has_value());
}

TEST_CASE("percentile is nearest-rank over the sorted samples") {
    std::vector<int64_t> hundred(100);
    for (int i = 0; i < 100; ++i) hundred[static_cast<size_t>(i)] = i + 1;
    std::shuffle(hundred.begin(), hundred.end(), std::mt19937_64{42});
    CHECK(percentileUs(hundred, 50.0) == 50.0);
    CHECK(percentileUs(hundred, 99.0) == 99.0);
    CHECK(percentileUs(hundred, 100.0) == 100.0);

    CHECK(percentileUs({10, 20, 30}, 50.0) == 20.0);
    CHECK(percentileUs({10, 20, 30}, 99.0) == 30.0);
    CHECK(percentileUs({7}, 50.0) == 7.0);
    CHECK(percentileUs({}, 50.0) == 0.0);
}

TEST_CASE("report aggregates samples, deliveries, and stamped latencies") {
    ClientRunResult a;
    a.clientId = "a";
    a.samples.push_back(LatencySample{"connect", 1000, 50, -1});
    a.samples.push_back(LatencySample{"publish", 2000, 100, 2});
    a.samples.push_back(LatencySample{"publish", 3000, 300, 0});

    std::string d1 = buildPayload(32, "a", 0);
    stampPayload(d1, 5000);
    a.deliveries.push_back(Delivery{"data", d1, std::nullopt, 5500});
    std::string d2 = buildPayload(32, "a", 1);
    stampPayload(d2, 6000);
    a.deliveries.push_back(Delivery{"data", d2, std::nullopt, 6700});
    a.deliveries.push_back(Delivery{"data", "tiny", std::nullopt, 7000});

    ClientRunResult b;
    b.clientId = "b";
    b.samples.push_back(LatencySample{"ping", 4000, 80, -1});
    b.failures = 3;

    const RunReport report = buildReport({a, b}, 12.5);
    CHECK(report.durationSecs == 12.5);
    CHECK(report.publishes == 2);
    CHECK(report.matchedTotal == 2);
    CHECK(report.delivered == 3);
    CHECK(report.lost == -1);
    CHECK(report.deliveriesPerPublish == 1.5);
    CHECK(report.failures == 3);
    CHECK(report.mdlCount == 2);
    CHECK(report.mdlMeanUs == 600.0);
    CHECK(report.clients.size() == 2);

    const OpStats* pub = report.opStats("publish");
    REQUIRE(pub != nullptr);
    CHECK(pub->count == 2);
    CHECK(pub->meanUs == 200.0);
    CHECK(pub->p50Us == 100.0);
    CHECK(pub->p99Us == 300.0);
    REQUIRE(report.opStats("connect") != nullptr);
    CHECK(report.opStats("connect")->count == 1);
    REQUIRE(report.opStats("ping") != nullptr);
    CHECK(report.opStats("unsubscribe") == nullptr);
}

TEST_CASE("samples CSV lists every sample under a fixed header") {
    ClientRunResult c;
    c.clientId = "a";
    c.samples.push_back(LatencySample{"connect", 1000, 50, -1});
    c.samples.push_back(LatencySample{"publish", 2000, 100, 2});
    const RunReport report = buildReport({c}, 1.0);

    const auto path = tempFile("samples.csv");
    writeSamplesCsv(path.string(), report);
    const auto rows = lines(slurp(path));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "op_kind,t_start,latency_us,matched_count");
    CHECK(rows[1] == "connect,1000,50,-1");
    CHECK(rows[2] == "publish,2000,100,2");
}

TEST_CASE("summary JSON round-trips the report totals") {
    ClientRunResult c;
    c.clientId = "a";
    c.samples.push_back(LatencySample{"publish", 2000, 100, 1});
    std::string d = buildPayload(32, "a", 0);
    stampPayload(d, 5000);
    c.deliveries.push_back(Delivery{"data", d, std::nullopt, 5400});
    const RunReport report = buildReport({c}, 2.0);

    const auto path = tempFile("summary.json");
    writeSummaryJson(path.string(), report);
    const nlohmann::json j = nlohmann::json::parse(slurp(path));
    CHECK(j.at("duration_secs").get<double>() == 2.0);
    CHECK(j.at("publishes").get<uint64_t>() == 1);
    CHECK(j.at("matched_total").get<uint64_t>() == 1);
    CHECK(j.at("delivered").get<uint64_t>() == 1);
    CHECK(j.at("lost").get<int64_t>() == 0);
    CHECK(j.at("deliveries_per_publish").get<double>() == 1.0);
    CHECK(j.at("failures").get<uint64_t>() == 0);
    CHECK(j.at("clients").get<size_t>() == 1);
    REQUIRE(j.at("per_op").is_array());
    REQUIRE(j.at("per_op").size() == 1);
    CHECK(j.at("per_op")[0].at("op").get<std::string>() == "publish");
    CHECK(j.at("per_op")[0].at("count").get<size_t>() == 1);
    CHECK(j.at("mdl").at("count").get<size_t>() == 1);
    CHECK(j.at("mdl").at("mean_us").get<double>() == 400.0);
}

TEST_CASE("heatmap CSV counts waypoints per raster field") {
    const std::vector<Trajectory> trajs = {
        makeTrajectory(0, {Location(0.05, 0.05), Location(0.051, 0.052), Location(0.15, 0.05)}),
        makeTrajectory(1, {Location(0.05, 0.05)}),
    };

    const auto path = tempFile("heatmap.csv");
    writeHeatmapCsv(path.string(), trajs, 2, 10);
    const auto rows = lines(slurp(path));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == "lat,lon,count");
    CHECK(rows[1] == "0,0,3");
    CHECK(rows[2] == "0.1,0,1");

    SECTION("firstN limits which trajectories contribute") {
        writeHeatmapCsv(path.string(), trajs, 1, 10);
        const auto limited = lines(slurp(path));
        REQUIRE(limited.size() == 3);
        CHECK(limited[1] == "0,0,2");
        CHECK(limited[2] == "0.1,0,1");
    }
}

TEST_CASE("experiment rejects configs it cannot satisfy") {
    ExperimentConfig cfg;
    cfg.clientCount = 3;
    const std::vector<Trajectory> one = {makeTrajectory(0, {Location(40, 116.4)})};
    CHECK_THROWS_AS(runExperiment(cfg, one), std::invalid_argument);
    cfg.clientCount = 0;
    CHECK_THROWS_AS(runExperiment(cfg, {}), std::invalid_argument);
}

TEST_CASE("lockstep run with nearby fenced clients delivers across the pair") {
    BrokerOptions opts;
    opts.port = 0;
    opts.workers = 2;
    Broker broker(opts);
    broker.start();

    ExperimentConfig cfg;
    cfg.mode = Mode::Geo;
    cfg.clientCount = 2;
    cfg.lockstep = true;
    cfg.lockstepRounds = 2;
    cfg.topic = "data";
    cfg.fenceRadiusDeg = 0.01;
    cfg.payloadBytes = 64;
    cfg.brokerHost = "127.0.0.1";
    cfg.brokerPort = broker.port();
    cfg.startTime = std::chrono::system_clock::now();

    const std::vector<Trajectory> trajs = {
        makeTrajectory(0, {Location(40.0, 116.4), Location(40.001, 116.4)}),
        makeTrajectory(1, {Location(40.0, 116.401), Location(40.001, 116.401)}),
    };
    const RunReport report = runExperiment(cfg, trajs);
    broker.stop();

    CHECK(report.failures == 0);
    CHECK(report.publishes == 4);
    CHECK(report.delivered == 8);
    CHECK(report.lost == 0);
    CHECK(report.mdlCount == 8);

    REQUIRE(report.clients.size() == 2);
    const std::vector<std::string> wantOps = {"connect", "ping", "subscribe", "publish",
                                              "ping",    "subscribe", "publish"};
    for (const auto& c : report.clients) {
        CHECK(opSequence(c) == wantOps);
        REQUIRE_FALSE(c.opLog.empty());
        CHECK(c.opLog.front().rfind("connect ", 0) == 0);

        // Both clients sit inside each other's fences every round, so each
        // publish matches both subscriptions.
        for (const auto& s : c.samples) {
            if (s.opKind == "publish") {
                CHECK(s.matchedCount == 2);
            } else {
                CHECK(s.matchedCount == -1);
            }
        }

        const std::multiset<DeliveryTag> want = {
            {"c0", 0}, {"c0", 1}, {"c1", 0}, {"c1", 1}};
        CHECK(tagsOf(c) == want);
        for (const auto& d : c.deliveries) {
            CHECK(d.topic == "data");
            CHECK(d.fenceWkt.has_value());
        }
    }
}

TEST_CASE("lockstep run with distant fenced clients only self-delivers") {
    BrokerOptions opts;
    opts.port = 0;
    opts.workers = 2;
    Broker broker(opts);
    broker.start();

    ExperimentConfig cfg;
    cfg.mode = Mode::Geo;
    cfg.clientCount = 2;
    cfg.lockstep = true;
    cfg.lockstepRounds = 2;
    cfg.payloadBytes = 64;
    cfg.brokerHost = "127.0.0.1";
    cfg.brokerPort = broker.port();
    cfg.startTime = std::chrono::system_clock::now();

    const std::vector<Trajectory> trajs = {
        makeTrajectory(0, {Location(40.0, 116.4)}),
        makeTrajectory(1, {Location(40.2, 116.6)}),
    };
    const RunReport report = runExperiment(cfg, trajs);
    broker.stop();

    CHECK(report.failures == 0);
    CHECK(report.publishes == 4);
    CHECK(report.delivered == 4);
    CHECK(report.lost == 0);
    for (const auto& c : report.clients) {
        for (const auto& s : c.samples) {
            if (s.opKind == "publish") CHECK(s.matchedCount == 1);
        }
        const std::multiset<DeliveryTag> want = {{c.clientId, 0}, {c.clientId, 1}};
        CHECK(tagsOf(c) == want);
    }
}

TEST_CASE("unfenced lockstep run delivers everything to everyone") {
    BrokerOptions opts;
    opts.port = 0;
    opts.workers = 2;
    Broker broker(opts);
    broker.start();

    ExperimentConfig cfg;
    cfg.mode = Mode::NoGeo;
    cfg.clientCount = 2;
    cfg.lockstep = true;
    cfg.lockstepRounds = 3;
    cfg.payloadBytes = 64;
    cfg.brokerHost = "127.0.0.1";
    cfg.brokerPort = broker.port();
    cfg.startTime = std::chrono::system_clock::now();

    const std::vector<Trajectory> trajs = {
        makeTrajectory(0, {Location(40.0, 116.4)}),
        makeTrajectory(1, {Location(40.2, 116.6)}),
    };
    const RunReport report = runExperiment(cfg, trajs);
    broker.stop();

    CHECK(report.failures == 0);
    CHECK(report.publishes == 6);
    CHECK(report.delivered == 12);
    CHECK(report.lost == 0);

    const std::vector<std::string> wantOps = {"connect", "subscribe", "publish", "publish",
                                              "publish"};
    for (const auto& c : report.clients) {
        CHECK(opSequence(c) == wantOps);
        for (const auto& s : c.samples) {
            if (s.opKind == "publish") CHECK(s.matchedCount == 2);
        }
        for (const auto& d : c.deliveries) {
            CHECK_FALSE(d.fenceWkt.has_value());
        }
    }
}

TEST_CASE("timed travel run replays waypoints with the fenced op triple") {
    BrokerOptions opts;
    opts.port = 0;
    opts.workers = 2;
    Broker broker(opts);
    broker.start();

    ExperimentConfig cfg;
    cfg.mode = Mode::Geo;
    cfg.kind = ClientKind::Travel;
    cfg.clientCount = 1;
    cfg.durationSecs = 0.25;
    cfg.payloadBytes = 64;
    cfg.brokerHost = "127.0.0.1";
    cfg.brokerPort = broker.port();
    cfg.startStagger = std::chrono::milliseconds(0);
    cfg.startTime = std::chrono::system_clock::now();

    Trajectory traj;
    traj.id = 0;
    traj.points = {Waypoint{0.0, Location(40.0, 116.4)},
                   Waypoint{0.1, Location(40.001, 116.4)},
                   Waypoint{0.2, Location(40.002, 116.4)}};
    const RunReport report = runExperiment(cfg, {traj});
    broker.stop();

    CHECK(report.failures == 0);
    CHECK(report.publishes >= 3);
    REQUIRE(report.opStats("ping") != nullptr);
    REQUIRE(report.opStats("subscribe") != nullptr);
    CHECK(report.opStats("ping")->count == report.publishes);
    CHECK(report.opStats("subscribe")->count == report.publishes);
    // Single client: every publish matches its own subscription.
    CHECK(report.matchedTotal == report.publishes);
    CHECK(report.delivered == report.publishes);
}

TEST_CASE("teleport run publishes as fast as acks return") {
    BrokerOptions opts;
    opts.port = 0;
    opts.workers = 2;
    Broker broker(opts);
    broker.start();

    ExperimentConfig cfg;
    cfg.mode = Mode::NoGeo;
    cfg.kind = ClientKind::Teleport;
    cfg.clientCount = 1;
    cfg.durationSecs = 0.3;
    cfg.payloadBytes = 64;
    cfg.brokerHost = "127.0.0.1";
    cfg.brokerPort = broker.port();
    cfg.startStagger = std::chrono::milliseconds(0);
    cfg.startTime = std::chrono::system_clock::now();

    const std::vector<Trajectory> trajs = {makeTrajectory(
        0, {Location(40.0, 116.4), Location(40.1, 116.5), Location(40.2, 116.6)})};
    const RunReport report = runExperiment(cfg, trajs);
    broker.stop();

    CHECK(report.failures == 0);
    CHECK(report.publishes >= 3);
    CHECK(report.opStats("ping") == nullptr);
    CHECK(report.delivered == report.publishes);
    CHECK(report.lost == 0);
}

TEST_CASE("index benchmark honors the op budget and ratio weights") {
    IndexBenchConfig cfg;
    cfg.clients = 2;
    cfg.opsPerClient = 500;
    cfg.updateWeight = 1;
    cfg.getWeight = 1;
    cfg.granularity = 10;
    const IndexBenchResult res = runIndexBenchmark(cfg);
    CHECK(res.granularity == 10);
    CHECK(res.updates + res.gets == 1000);
    CHECK(res.updates > 0);
    CHECK(res.gets > 0);
    CHECK(res.elapsedSecs > 0.0);
    CHECK(res.opsPerSec > 0.0);

    SECTION("a lopsided ratio skews the counts the same way") {
        cfg.updateWeight = 9;
        cfg.getWeight = 1;
        const IndexBenchResult skew = runIndexBenchmark(cfg);
        CHECK(skew.updates + skew.gets == 1000);
        CHECK(skew.updates > skew.gets);
    }
}

TEST_CASE("op mix benchmark executes exactly the requested counts") {
    const OpMixResult res = runOpMixBenchmark(100, 100, 100, 10, 1);
    CHECK(res.adds == 100);
    CHECK(res.updates == 100);
    CHECK(res.gets == 100);
    CHECK(res.elapsedSecs > 0.0);
    CHECK(res.elapsedSecs < 30.0);
}
