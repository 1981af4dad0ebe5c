#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "geomq/geometry.hpp"

namespace geomq {

struct Waypoint {
    double t = 0.0;  // seconds; PLT rows use fractional days * 86400
    Location loc;
};

struct Trajectory {
    int id = -1;
    std::vector<Waypoint> points;

    double durationSecs() const { return points.back().t - points.front().t; }
};

namespace trajectory_detail {

inline bool parseDouble(const std::string& text, double& out) {
    try {
        size_t pos = 0;
        out = std::stod(text, &pos);
        while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\r')) ++pos;
        return pos == text.size();
    } catch (const std::exception&) {
        return false;
    }
}

inline std::vector<std::string> splitCsv(const std::string& line) {
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
        const size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

}  // namespace trajectory_detail

/// Parses one PLT trajectory file: 6 header lines, then rows of
/// "lat,lon,0,altitude,days,date,time". Rows with out-of-range or unparsable
/// coordinates are skipped with a warning; timestamps are clamped
/// non-decreasing. Throws if fewer than 2 valid rows remain.
inline Trajectory parsePlt(std::istream& in, const std::string& name = "<stream>") {
    std::string line;
    for (int i = 0; i < 6; ++i) {
        if (!std::getline(in, line)) {
            throw std::runtime_error(name + ": truncated PLT header");
        }
    }
    Trajectory traj;
    size_t skipped = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = trajectory_detail::splitCsv(line);
        double lat = 0.0;
        double lon = 0.0;
        double days = 0.0;
        const bool parsed = fields.size() >= 5 &&
                            trajectory_detail::parseDouble(fields[0], lat) &&
                            trajectory_detail::parseDouble(fields[1], lon) &&
                            trajectory_detail::parseDouble(fields[4], days);
        if (!parsed || !Location::valid(lat, lon)) {
            ++skipped;
            continue;
        }
        double t = days * 86400.0;
        if (!traj.points.empty()) t = std::max(t, traj.points.back().t);
        traj.points.push_back(Waypoint{t, Location(lat, lon)});
    }
    if (skipped > 0) {
        std::cerr << name << ": skipped " << skipped << " invalid row(s)\n";
    }
    if (traj.points.size() < 2) {
        throw std::runtime_error(name + ": fewer than 2 valid waypoints");
    }
    return traj;
}

inline Trajectory parsePlt(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    return parsePlt(in, file.string());
}

/// Loads every .plt under the directory (recursively), in sorted path order,
/// and assigns ids 0..n-1 in that order. Unparsable files are skipped with a
/// warning so one bad file cannot sink a whole dataset.
inline std::vector<Trajectory> loadPltDirectory(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".plt") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<Trajectory> out;
    for (const auto& file : files) {
        try {
            out.push_back(parsePlt(file));
        } catch (const std::exception& e) {
            std::cerr << "skipping " << file << ": " << e.what() << "\n";
        }
    }
    for (size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<int>(i);
    return out;
}

inline const BoundingBox kDefaultSyntheticRegion{Location{39.75, 116.15},
                                                 Location{40.25, 116.65}};

/// Bounces v off the [lo, hi] walls. One bounce is enough: steps are tiny
/// relative to any sane region.
inline double reflect(double v, double lo, double hi) {
    if (v < lo) v = lo + (lo - v);
    if (v > hi) v = hi - (v - hi);
    return std::clamp(v, lo, hi);
}

/// Deterministic random walks: 1 s cadence, per-second step at most 0.001
/// degrees per axis, reflected at the region bounds so every waypoint stays
/// inside. Trajectory i depends only on (seed, i), not on n.
inline std::vector<Trajectory> generateSyntheticTrajectories(
    int n, uint64_t seed, int waypointCount, const BoundingBox& region = kDefaultSyntheticRegion) {
    if (n < 1) throw std::invalid_argument("need at least one trajectory");
    if (waypointCount < 2) throw std::invalid_argument("need at least two waypoints");
    std::vector<Trajectory> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + static_cast<uint64_t>(i) + 1);
        std::uniform_real_distribution<double> latStart(region.southWest.lat,
                                                        region.northEast.lat);
        std::uniform_real_distribution<double> lonStart(region.southWest.lon,
                                                        region.northEast.lon);
        std::uniform_real_distribution<double> step(-0.001, 0.001);
        Trajectory traj;
        traj.id = i;
        double lat = latStart(rng);
        double lon = lonStart(rng);
        for (int k = 0; k < waypointCount; ++k) {
            traj.points.push_back(Waypoint{static_cast<double>(k), Location(lat, lon)});
            lat += step(rng);
            lon += step(rng);
            lat = reflect(lat, region.southWest.lat, region.northEast.lat);
            lon = reflect(lon, region.southWest.lon, region.northEast.lon);
        }
        out.push_back(std::move(traj));
    }
    return out;
}

}  // namespace geomq
