#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include <geomq/broker.hpp>

namespace {

std::atomic<bool> gStop{false};

void requestStop(int) { gStop.store(true); }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"geomq broker: geo-context topic pub/sub over TCP"};
    geomq::BrokerOptions opts;
    int expirySecs = 60;

    app.add_option("--port", opts.port, "TCP listen port (0 picks an ephemeral port)")
        ->capture_default_str();
    app.add_option("--granularity", opts.granularity, "raster fields per degree")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--workers", opts.workers, "matching worker threads (0 = CPU count)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app.add_option("--session-expiry-secs", expirySecs, "idle seconds before a session expires")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app.add_option("--max-payload-bytes", opts.maxPayloadBytes,
                   "largest accepted publish payload")
        ->capture_default_str();
    app.add_flag("--skip-final-intersection", opts.skipFinalIntersection,
                 "index whole fence bounding boxes, skipping the exact per-field test");
    app.add_option("--metrics-csv", opts.metricsCsvPath,
                   "append one stats row per second to this CSV file");
    CLI11_PARSE(app, argc, argv);
    opts.sessionExpiry = std::chrono::seconds(expirySecs);

    geomq::Broker broker(opts);
    try {
        broker.start();
    } catch (const std::exception& e) {
        std::cerr << "broker: " << e.what() << '\n';
        return 1;
    }
    std::signal(SIGINT, requestStop);
    std::signal(SIGTERM, requestStop);
    std::cout << "listening on port " << broker.port() << " (granularity " << opts.granularity
              << ")" << std::endl;

    while (!gStop.load()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(200));
    }
    broker.stop();

    const auto s = broker.stats();
    std::cout << "publishes " << s.publishesIn << ", deliveries " << s.deliveriesOut
              << ", queue drops " << s.queueDrops << '\n';
    return 0;
}
