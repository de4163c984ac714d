#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "daybreak/common.hpp"
#include "daybreak/mixture.hpp"

namespace daybreak {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr int kHoursPerDay = 24;
inline constexpr double kSecondsPerDay = 86400.0;

struct LocationTrace {
    double timestamp;  // seconds since epoch
    double latitude;   // degrees
    double longitude;  // degrees
};

struct HomeEstimate {
    double latitude = 0.0;
    double longitude = 0.0;
    int support_count = 0;
};

struct IngestConfig {
    int utc_offset_minutes = 0;      // fixed local-time offset
    double gap_limit_minutes = 30.0; // max time without a fix before an hour is missing
    double home_radius_m = 50.0;
    int night_start_hour = 0;        // nocturnal window [start, end)
    int night_end_hour = 6;
};

struct HourlyReal {
    std::array<double, kHoursPerDay> values{};
    std::array<std::uint8_t, kHoursPerDay> missing{};
};

struct HourlyBinary {
    std::array<int, kHoursPerDay> values{};
    std::array<std::uint8_t, kHoursPerDay> missing{};
};

inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
    const double rad = std::numbers::pi / 180.0;
    const double dlat = (lat2 - lat1) * rad;
    const double dlon = (lon2 - lon1) * rad;
    const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                     std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) *
                         std::sin(dlon / 2);
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

// Per-hour traveled distance as log(1 + meters), for the local day starting
// at day_start (epoch seconds). The trace span may extend beyond the day;
// distance of a segment is split between hours linearly in time. An hour is
// missing when it holds no fix or when some sub-interval longer than the gap
// limit holds none.
inline HourlyReal hourly_log_distance(const std::vector<LocationTrace>& traces, double day_start,
                                      const IngestConfig& cfg) {
    HourlyReal out;
    std::array<double, kHoursPerDay> meters{};
    std::array<bool, kHoursPerDay> has_fix{};
    std::array<double, kHoursPerDay> max_gap{};

    const double gap_limit = cfg.gap_limit_minutes * 60.0;
    const double day_end = day_start + kSecondsPerDay;

    // Largest uncovered sub-interval per hour. Fix times partition the hour;
    // window edges act as virtual endpoints.
    std::vector<double> in_day;
    for (const auto& tr : traces)
        if (tr.timestamp >= day_start && tr.timestamp < day_end) in_day.push_back(tr.timestamp);
    std::sort(in_day.begin(), in_day.end());
    for (int h = 0; h < kHoursPerDay; ++h) {
        const double lo = day_start + h * 3600.0;
        const double hi = lo + 3600.0;
        double prev = lo;
        double worst = 0.0;
        bool any = false;
        for (double ts : in_day) {
            if (ts < lo || ts >= hi) continue;
            any = true;
            worst = std::max(worst, ts - prev);
            prev = ts;
        }
        worst = std::max(worst, hi - prev);
        has_fix[static_cast<std::size_t>(h)] = any;
        max_gap[static_cast<std::size_t>(h)] = worst;
    }

    // Distance apportioned by time overlap with each hour window.
    for (std::size_t i = 1; i < traces.size(); ++i) {
        const auto& a = traces[i - 1];
        const auto& b = traces[i];
        if (b.timestamp <= a.timestamp) continue;
        if (b.timestamp <= day_start || a.timestamp >= day_end) continue;
        const double d = haversine_m(a.latitude, a.longitude, b.latitude, b.longitude);
        const double span = b.timestamp - a.timestamp;
        for (int h = 0; h < kHoursPerDay; ++h) {
            const double lo = day_start + h * 3600.0;
            const double hi = lo + 3600.0;
            const double overlap = std::min(hi, b.timestamp) - std::max(lo, a.timestamp);
            if (overlap > 0.0) meters[static_cast<std::size_t>(h)] += d * overlap / span;
        }
    }

    for (int h = 0; h < kHoursPerDay; ++h) {
        const auto hh = static_cast<std::size_t>(h);
        if (!has_fix[hh] || max_gap[hh] > gap_limit) {
            out.missing[hh] = 1;
            out.values[hh] = 0.0;
        } else {
            out.missing[hh] = 0;
            out.values[hh] = std::log1p(meters[hh]);
        }
    }
    return out;
}

inline int local_hour(double timestamp, const IngestConfig& cfg) {
    const double local = timestamp + cfg.utc_offset_minutes * 60.0;
    double sec_of_day = std::fmod(local, kSecondsPerDay);
    if (sec_of_day < 0) sec_of_day += kSecondsPerDay;
    return static_cast<int>(sec_of_day / 3600.0);
}

// Most usual nocturnal position: mode over a 50 m grid, then the centroid of
// the winning cell. Ties break toward the lexicographically smallest cell.
inline HomeEstimate estimate_home(const std::vector<LocationTrace>& traces,
                                  const IngestConfig& cfg) {
    std::vector<const LocationTrace*> night;
    for (const auto& tr : traces) {
        const int h = local_hour(tr.timestamp, cfg);
        if (h >= cfg.night_start_hour && h < cfg.night_end_hour) night.push_back(&tr);
    }
    if (night.empty()) throw NoNocturnalData("estimate_home: no fixes in the nocturnal window");

    const double rad = std::numbers::pi / 180.0;
    const double lat_ref = night.front()->latitude;
    const double m_per_deg_lat = kEarthRadiusM * rad;
    const double m_per_deg_lon = kEarthRadiusM * rad * std::cos(lat_ref * rad);
    const double cell_m = 50.0;

    std::map<std::pair<long, long>, std::vector<const LocationTrace*>> cells;
    for (const auto* tr : night) {
        const long cy = static_cast<long>(std::floor(tr->latitude * m_per_deg_lat / cell_m));
        const long cx = static_cast<long>(std::floor(tr->longitude * m_per_deg_lon / cell_m));
        cells[{cy, cx}].push_back(tr);
    }
    const std::vector<const LocationTrace*>* best = nullptr;
    for (const auto& [key, members] : cells) {
        if (!best || members.size() > best->size()) best = &members;
    }
    HomeEstimate home;
    home.support_count = static_cast<int>(best->size());
    for (const auto* tr : *best) {
        home.latitude += tr->latitude;
        home.longitude += tr->longitude;
    }
    home.latitude /= home.support_count;
    home.longitude /= home.support_count;
    return home;
}

// Hour value 1 when any fix lies within the radius of home (boundary
// inclusive), 0 when fixes exist but none does, missing when the hour holds
// no fix.
inline HourlyBinary at_home_vector(const std::vector<LocationTrace>& traces,
                                   const HomeEstimate& home, double day_start,
                                   const IngestConfig& cfg) {
    HourlyBinary out;
    out.missing.fill(1);
    out.values.fill(0);
    for (const auto& tr : traces) {
        if (tr.timestamp < day_start || tr.timestamp >= day_start + kSecondsPerDay) continue;
        const int h = static_cast<int>((tr.timestamp - day_start) / 3600.0);
        const auto hh = static_cast<std::size_t>(h);
        out.missing[hh] = 0;
        if (haversine_m(tr.latitude, tr.longitude, home.latitude, home.longitude) <=
            cfg.home_radius_m)
            out.values[hh] = 1;
    }
    return out;
}

struct TraceLoadSummary {
    long parsed = 0;
    long skipped = 0;
};

namespace detail {

inline bool parse_epoch_or_iso(const std::string& token, double& out) {
    // epoch seconds (integer or float)
    {
        double v = 0.0;
        const char* first = token.data();
        const char* last = token.data() + token.size();
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec == std::errc() && ptr == last) {
            out = v;
            return true;
        }
    }
    // ISO-8601: YYYY-MM-DD[T ]HH:MM:SS with optional Z or +-hh:mm offset
    int y, mo, d, h, mi;
    double s;
    char sep;
    std::istringstream in(token);
    in >> y;
    if (in.get() != '-') return false;
    in >> mo;
    if (in.get() != '-') return false;
    in >> d;
    sep = static_cast<char>(in.get());
    if (sep != 'T' && sep != ' ') return false;
    in >> h;
    if (in.get() != ':') return false;
    in >> mi;
    if (in.get() != ':') return false;
    in >> s;
    if (in.fail()) return false;
    int off_min = 0;
    const int c = in.get();
    if (c == '+' || c == '-') {
        int oh = 0, om = 0;
        in >> oh;
        if (in.get() != ':') return false;
        in >> om;
        if (in.fail()) return false;
        off_min = oh * 60 + om;
        if (c == '-') off_min = -off_min;
    }
    // days-from-civil (proleptic Gregorian)
    const int yy = y - (mo <= 2 ? 1 : 0);
    const int era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy = static_cast<unsigned>((153 * (mo + (mo > 2 ? -3 : 9)) + 2) / 5 + d - 1);
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    const long days = static_cast<long>(era) * 146097 + static_cast<long>(doe) - 719468;
    out = days * kSecondsPerDay + h * 3600.0 + mi * 60.0 + s - off_min * 60.0;
    return true;
}

inline std::string civil_date(long days_since_epoch) {
    long z = days_since_epoch + 719468;
    const long era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const long y = static_cast<long>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02u", y + (m <= 2 ? 1 : 0), m, d);
    return buf;
}

}  // namespace detail

// Lines of `timestamp,lat,lon` with epoch-seconds or ISO-8601 timestamps.
// Malformed lines are counted and skipped; traces come back sorted.
inline std::vector<LocationTrace> load_traces(std::istream& in, TraceLoadSummary* summary = nullptr) {
    std::vector<LocationTrace> traces;
    TraceLoadSummary local;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string ts_tok, lat_tok, lon_tok;
        if (!std::getline(ls, ts_tok, ',') || !std::getline(ls, lat_tok, ',') ||
            !std::getline(ls, lon_tok, ',')) {
            ++local.skipped;
            continue;
        }
        LocationTrace tr{};
        try {
            if (!detail::parse_epoch_or_iso(ts_tok, tr.timestamp)) {
                ++local.skipped;
                continue;
            }
            tr.latitude = std::stod(lat_tok);
            tr.longitude = std::stod(lon_tok);
        } catch (const std::exception&) {
            ++local.skipped;
            continue;
        }
        if (tr.latitude < -90.0 || tr.latitude > 90.0 || tr.longitude < -180.0 ||
            tr.longitude > 180.0) {
            ++local.skipped;
            continue;
        }
        traces.push_back(tr);
        ++local.parsed;
    }
    std::sort(traces.begin(), traces.end(),
              [](const LocationTrace& a, const LocationTrace& b) { return a.timestamp < b.timestamp; });
    if (summary) *summary = local;
    return traces;
}

inline std::vector<LocationTrace> load_traces_file(const std::string& path,
                                                   TraceLoadSummary* summary = nullptr) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open trace file: " + path);
    return load_traces(in, summary);
}

struct BuiltDataset {
    Dataset observations;
    std::vector<std::string> dates;  // YYYY-MM-DD in local time
    HomeEstimate home;
};

// One heterogeneous observation per local calendar day: real part hourly
// log-distance, binary part the at-home indicator.
inline BuiltDataset build_dataset(const std::vector<LocationTrace>& traces,
                                  const IngestConfig& cfg) {
    if (traces.empty()) throw EmptyDataset("build_dataset: no traces");
    BuiltDataset out;
    out.home = estimate_home(traces, cfg);

    const double offset = cfg.utc_offset_minutes * 60.0;
    const long first_day = static_cast<long>(std::floor((traces.front().timestamp + offset) / kSecondsPerDay));
    const long last_day = static_cast<long>(std::floor((traces.back().timestamp + offset) / kSecondsPerDay));

    for (long day = first_day; day <= last_day; ++day) {
        const double day_start = day * kSecondsPerDay - offset;
        const auto real = hourly_log_distance(traces, day_start, cfg);
        const auto bin = at_home_vector(traces, out.home, day_start, cfg);
        HeteroObservation obs;
        obs.real_values.resize(kHoursPerDay);
        obs.real_missing.assign(kHoursPerDay, 0);
        obs.bin_values.resize(kHoursPerDay);
        obs.bin_missing.assign(kHoursPerDay, 0);
        for (int h = 0; h < kHoursPerDay; ++h) {
            const auto hh = static_cast<std::size_t>(h);
            obs.real_values[h] = real.values[hh];
            obs.real_missing[hh] = real.missing[hh];
            obs.bin_values[h] = bin.values[hh];
            obs.bin_missing[hh] = bin.missing[hh];
        }
        out.observations.push_back(std::move(obs));
        out.dates.push_back(detail::civil_date(day));
    }
    return out;
}

}  // namespace daybreak
