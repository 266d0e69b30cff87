#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace coursetrace {

/// Seconds since the Unix epoch, UTC. All timestamps in the toolkit use
/// second resolution; sub-second precision in inputs is rejected.
using Instant = std::int64_t;

constexpr std::int64_t kSecondsPerDay = 86400;

inline double minutes_between(Instant from, Instant to) {
    return static_cast<double>(to - from) / 60.0;
}

namespace detail {

// Howard Hinnant's civil-date algorithms (public domain).
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

struct CivilDate {
    std::int64_t year;
    unsigned month, day;
};

constexpr CivilDate civil_from_days(std::int64_t z) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp + (mp < 10 ? 3 : -9);
    return {y + (m <= 2), m, d};
}

constexpr bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline int parse_fixed(std::string_view s, std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) {
        if (!is_digit(s[i])) throw std::invalid_argument("bad timestamp: " + std::string(s));
        v = v * 10 + (s[i] - '0');
    }
    return v;
}

}  // namespace detail

/// Parses "YYYY-MM-DDTHH:MM:SSZ". Anything else throws.
inline Instant parse_iso8601(std::string_view s) {
    if (s.size() != 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' ||
        s[16] != ':' || s[19] != 'Z')
        throw std::invalid_argument("bad timestamp: " + std::string(s));
    const int year = detail::parse_fixed(s, 0, 4);
    const int month = detail::parse_fixed(s, 5, 2);
    const int day = detail::parse_fixed(s, 8, 2);
    const int hour = detail::parse_fixed(s, 11, 2);
    const int minute = detail::parse_fixed(s, 14, 2);
    const int second = detail::parse_fixed(s, 17, 2);
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60)
        throw std::invalid_argument("bad timestamp: " + std::string(s));
    return detail::days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day)) *
               kSecondsPerDay +
           hour * 3600 + minute * 60 + second;
}

inline std::optional<Instant> try_parse_iso8601(std::string_view s) {
    try {
        return parse_iso8601(s);
    } catch (const std::invalid_argument&) {
        return std::nullopt;
    }
}

inline std::string format_iso8601(Instant t) {
    std::int64_t days = t / kSecondsPerDay;
    std::int64_t rem = t % kSecondsPerDay;
    if (rem < 0) {
        rem += kSecondsPerDay;
        --days;
    }
    const auto [y, m, d] = detail::civil_from_days(days);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ",
                  static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                  static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
    return buf;
}

/// Day bucket index of `t` relative to `origin` (bucket 0 starts at origin).
inline std::int64_t day_index(Instant t, Instant origin) {
    std::int64_t diff = t - origin;
    if (diff >= 0) return diff / kSecondsPerDay;
    return -((-diff + kSecondsPerDay - 1) / kSecondsPerDay);
}

}  // namespace coursetrace
