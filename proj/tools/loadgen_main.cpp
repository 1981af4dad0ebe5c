#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <geomq/loadgen.hpp>

namespace {

using namespace geomq;

/// "synthetic:<seed>" generates deterministic walks, anything else is a
/// directory of PLT files.
std::vector<Trajectory> loadTrajectories(const std::string& source, int count, int waypoints) {
    const std::string prefix = "synthetic:";
    if (source.rfind(prefix, 0) == 0) {
        const uint64_t seed = std::stoull(source.substr(prefix.size()));
        return generateSyntheticTrajectories(count, seed, waypoints);
    }
    return loadPltDirectory(source);
}

void printReport(const RunReport& report) {
    std::cout << "clients " << report.clients.size() << ", duration " << report.durationSecs
              << " s\n";
    std::cout << "publishes " << report.publishes << ", matched " << report.matchedTotal
              << ", delivered " << report.delivered << ", lost " << report.lost << " ("
              << report.deliveriesPerPublish << " deliveries/publish)\n";
    if (report.failures > 0) std::cout << "failures " << report.failures << '\n';
    for (const auto& op : report.perOp) {
        std::cout << "  " << op.op << ": n=" << op.count << " mean=" << op.meanUs / 1000.0
                  << "ms p50=" << op.p50Us / 1000.0 << "ms p99=" << op.p99Us / 1000.0 << "ms\n";
    }
    if (report.mdlCount > 0) {
        std::cout << "  delivery latency: n=" << report.mdlCount
                  << " mean=" << report.mdlMeanUs / 1000.0 << "ms\n";
    }
}

int runLoad(const std::string& mode, const std::string& kind, int clients, double duration,
            const std::string& broker, const std::string& trajectories, double fenceRadius,
            size_t payloadBytes, const std::string& topic, int staggerMs, int64_t startAtEpoch,
            bool lockstep, int rounds, const std::string& out) {
    ExperimentConfig cfg;
    cfg.mode = mode == "geo" ? Mode::Geo : Mode::NoGeo;
    cfg.kind = kind == "travel" ? ClientKind::Travel : ClientKind::Teleport;
    cfg.clientCount = clients;
    cfg.durationSecs = duration;
    cfg.fenceRadiusDeg = fenceRadius;
    cfg.payloadBytes = payloadBytes;
    cfg.topic = topic;
    cfg.startStagger = std::chrono::milliseconds(staggerMs);
    cfg.lockstep = lockstep;
    cfg.lockstepRounds = rounds;
    if (startAtEpoch > 0) {
        cfg.startTime = std::chrono::system_clock::time_point(std::chrono::seconds(startAtEpoch));
    }
    std::tie(cfg.brokerHost, cfg.brokerPort) = parseHostPort(broker);

    const int waypoints = std::max(2, static_cast<int>(duration) + 60);
    const auto trajs = loadTrajectories(trajectories, clients, waypoints);

    std::cout << "running " << mode << "/" << kind << ": " << clients << " clients, " << duration
              << " s against " << cfg.brokerHost << ":" << cfg.brokerPort << std::endl;
    const RunReport report = runExperiment(cfg, trajs);

    writeSamplesCsv(out, report);
    auto summaryPath = std::filesystem::path(out);
    summaryPath.replace_extension(".summary.json");
    writeSummaryJson(summaryPath.string(), report);
    printReport(report);
    std::cout << "samples: " << out << ", summary: " << summaryPath.string() << '\n';
    return report.failures > 0 ? 1 : 0;
}

int runIndexBench(int clients, const std::string& ratio, std::vector<int> granularities,
                  uint64_t ops, double fenceRadius, uint64_t seed) {
    const size_t slash = ratio.find('/');
    if (slash == std::string::npos) {
        std::cerr << "expected --ratio updates/gets, got " << ratio << '\n';
        return 1;
    }
    IndexBenchConfig cfg;
    cfg.clients = clients;
    cfg.updateWeight = std::stoi(ratio.substr(0, slash));
    cfg.getWeight = std::stoi(ratio.substr(slash + 1));
    cfg.opsPerClient = ops;
    cfg.fenceRadiusDeg = fenceRadius;
    cfg.seed = seed;

    std::cout << "granularity,updates_per_sec,gets_per_sec,ops_per_sec\n";
    for (const int g : granularities) {
        cfg.granularity = g;
        const IndexBenchResult res = runIndexBenchmark(cfg);
        std::cout << g << ',' << res.updatesPerSec << ',' << res.getsPerSec << ','
                  << res.opsPerSec << '\n';
    }
    return 0;
}

int runOpMix(uint64_t adds, uint64_t updates, uint64_t gets, int granularity, uint64_t seed,
             double fenceRadius) {
    const OpMixResult res = runOpMixBenchmark(adds, updates, gets, granularity, seed, fenceRadius);
    std::cout << res.adds << " adds, " << res.updates << " updates, " << res.gets << " gets in "
              << res.elapsedSecs << " s (" << res.matchedTotal << " matches)\n";
    return 0;
}

int runHeatmap(const std::string& trajectories, size_t first, int waypoints, int granularity,
               const std::string& out) {
    const auto trajs = loadTrajectories(trajectories, static_cast<int>(first), waypoints);
    writeHeatmapCsv(out, trajs, first, granularity);
    std::cout << "wrote " << out << " (" << std::min(first, trajs.size()) << " trajectories)\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geomq load generator: paired geo/nogeo experiments and index benchmarks"};

    std::string mode;
    std::string kind = "travel";
    int clients = 10;
    double duration = 60.0;
    std::string broker = "localhost:5559";
    std::string trajectories = "synthetic:1";
    double fenceRadius = 0.01;
    size_t payloadBytes = 750;
    std::string topic = "data";
    int staggerMs = 100;
    int64_t startAtEpoch = 0;
    bool lockstep = false;
    int rounds = 0;
    std::string out = "report.csv";

    app.add_option("--mode", mode, "geo: ping+subscribe+publish per waypoint; nogeo: publish only")
        ->check(CLI::IsMember({"geo", "nogeo"}));
    app.add_option("--clients", clients, "concurrent clients")->check(CLI::PositiveNumber);
    app.add_option("--kind", kind, "travel paces ops to waypoint timestamps, teleport never sleeps")
        ->check(CLI::IsMember({"travel", "teleport"}));
    app.add_option("--duration", duration, "run length in seconds")->check(CLI::PositiveNumber);
    app.add_option("--broker", broker, "broker address as host:port")->capture_default_str();
    app.add_option("--trajectories", trajectories, "PLT directory or synthetic:<seed>")
        ->capture_default_str();
    app.add_option("--fence-radius", fenceRadius, "circular fence radius in degrees")
        ->capture_default_str();
    app.add_option("--payload-bytes", payloadBytes, "publish payload size")->capture_default_str();
    app.add_option("--topic", topic, "topic for every publish and subscription")
        ->capture_default_str();
    app.add_option("--stagger-ms", staggerMs, "delay between client starts")
        ->capture_default_str();
    app.add_option("--start-at", startAtEpoch,
                   "absolute start time as unix seconds, for multi-host runs");
    app.add_flag("--lockstep", lockstep, "barrier-synchronized rounds for reproducible counts");
    app.add_option("--rounds", rounds, "lockstep rounds (0 derives one per second)");
    app.add_option("--out", out, "per-op samples CSV; summary JSON lands next to it")
        ->capture_default_str();

    auto* bench = app.add_subcommand("index-bench", "drive the subscription index in process");
    int benchClients = 10;
    std::string ratio = "1/1";
    std::vector<int> granularities{1, 10, 25, 50, 100};
    uint64_t ops = 20000;
    double benchRadius = 0.01;
    uint64_t benchSeed = 1;
    bench->add_option("--clients", benchClients, "driver threads")->check(CLI::PositiveNumber);
    bench->add_option("--ratio", ratio, "update/get weighting, e.g. 99/1")->capture_default_str();
    bench->add_option("--granularity", granularities, "granularities to sweep")
        ->delimiter(',')
        ->capture_default_str();
    bench->add_option("--ops", ops, "operations per driver thread")->capture_default_str();
    bench->add_option("--fence-radius", benchRadius, "circular fence radius in degrees")
        ->capture_default_str();
    bench->add_option("--seed", benchSeed, "walk seed")->capture_default_str();

    auto* mix = app.add_subcommand("op-mix", "single-threaded add/update/get mix");
    uint64_t adds = 35000;
    uint64_t updates = 25000;
    uint64_t gets = 50000;
    int mixGranularity = 10;
    uint64_t mixSeed = 1;
    double mixRadius = 0.01;
    mix->add_option("--adds", adds, "fresh subscriptions")->capture_default_str();
    mix->add_option("--updates", updates, "fence moves")->capture_default_str();
    mix->add_option("--gets", gets, "full matches")->capture_default_str();
    mix->add_option("--granularity", mixGranularity, "raster fields per degree")
        ->capture_default_str();
    mix->add_option("--seed", mixSeed, "shuffle seed")->capture_default_str();
    mix->add_option("--fence-radius", mixRadius, "circular fence radius in degrees")
        ->capture_default_str();

    auto* heat = app.add_subcommand("heatmap", "waypoint density per raster field as CSV");
    std::string heatSource = "synthetic:1";
    size_t first = 1000;
    int heatWaypoints = 600;
    int heatGranularity = 10;
    std::string heatOut = "heatmap.csv";
    heat->add_option("--trajectories", heatSource, "PLT directory or synthetic:<seed>")
        ->capture_default_str();
    heat->add_option("--first", first, "trajectories to count")->capture_default_str();
    heat->add_option("--waypoints", heatWaypoints, "waypoints per synthetic trajectory")
        ->capture_default_str();
    heat->add_option("--granularity", heatGranularity, "raster fields per degree")
        ->capture_default_str();
    heat->add_option("--out", heatOut, "output CSV path")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (bench->parsed()) {
            return runIndexBench(benchClients, ratio, granularities, ops, benchRadius, benchSeed);
        }
        if (mix->parsed()) {
            return runOpMix(adds, updates, gets, mixGranularity, mixSeed, mixRadius);
        }
        if (heat->parsed()) {
            return runHeatmap(heatSource, first, heatWaypoints, heatGranularity, heatOut);
        }
        if (mode.empty()) {
            std::cerr << "--mode is required (or pick a subcommand); see --help\n";
            return 1;
        }
        return runLoad(mode, kind, clients, duration, broker, trajectories, fenceRadius,
                       payloadBytes, topic, staggerMs, startAtEpoch, lockstep, rounds, out);
    } catch (const std::exception& e) {
        std::cerr << "loadgen: " << e.what() << '\n';
        return 1;
    }
}
