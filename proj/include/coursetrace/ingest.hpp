#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "coursetrace/config.hpp"
#include "coursetrace/identity.hpp"
#include "coursetrace/types.hpp"

namespace coursetrace {

struct UnifyStats {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t staff_removed = 0;
    std::size_t excluded_removed = 0;
    std::size_t out_of_window = 0;
    std::size_t unmapped = 0;
};

/// Resolves identities, filters staff/excluded/out-of-semester records and
/// produces the unified transaction log in its canonical total order:
/// (timestamp, platform rank, position in `records`).
inline std::vector<Transaction> unify(const std::vector<RawRecord>& records,
                                      const IdentityMap& ids, const CourseConfig& config,
                                      const std::set<std::string>& exclusions,
                                      UnifyStats* stats_out = nullptr) {
    UnifyStats stats;
    stats.input = records.size();
    std::vector<Transaction> txns;
    txns.reserve(records.size());
    for (const auto& rec : records) {
        const auto* entry = ids.find(rec.platform, rec.native_user_id);
        if (!entry) {
            ++stats.unmapped;
            continue;
        }
        if (entry->role == IdentityMap::Role::Staff) {
            ++stats.staff_removed;
            continue;
        }
        if (exclusions.count(entry->anon_id)) {
            ++stats.excluded_removed;
            continue;
        }
        if (rec.timestamp < config.semester_start || rec.timestamp > config.semester_end) {
            ++stats.out_of_window;
            continue;
        }
        txns.push_back({entry->anon_id, rec.platform, rec.timestamp, rec.action, rec.attrs});
    }
    // Stable sort keeps input sequence as the final tie-break.
    std::stable_sort(txns.begin(), txns.end(), [](const Transaction& a, const Transaction& b) {
        if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
        return platform_rank(a.platform) < platform_rank(b.platform);
    });
    stats.kept = txns.size();
    if (stats_out) *stats_out = stats;
    return txns;
}

struct PlatformSummary {
    std::size_t total = 0;
    std::optional<double> mean_per_active_student;
    std::optional<double> stddev;  // population, over active students
};

/// Per-platform action totals plus mean/stddev per active student, where a
/// student is active on a platform iff they have at least one action there.
inline std::map<Platform, PlatformSummary> summarize_actions(
    const std::vector<Transaction>& txns,
    const std::set<Platform>& report_platforms = {}) {
    std::map<Platform, std::map<std::string, std::size_t>> per_student;
    for (const auto& t : txns) ++per_student[t.platform][t.anon_id];

    std::map<Platform, PlatformSummary> out;
    for (Platform p : report_platforms) out[p] = {};
    for (const auto& [platform, counts] : per_student) {
        PlatformSummary s;
        double sum = 0.0;
        for (const auto& [id, n] : counts) {
            s.total += n;
            sum += static_cast<double>(n);
        }
        const double mean = sum / static_cast<double>(counts.size());
        double ss = 0.0;
        for (const auto& [id, n] : counts) {
            const double d = static_cast<double>(n) - mean;
            ss += d * d;
        }
        s.mean_per_active_student = mean;
        s.stddev = std::sqrt(ss / static_cast<double>(counts.size()));
        out[platform] = s;
    }
    return out;
}

// --- unified log serialization (one JSON object per line) -------------------

inline nlohmann::json transaction_to_json(const Transaction& t) {
    nlohmann::json j;
    j["id"] = t.anon_id;
    j["platform"] = std::string(to_string(t.platform));
    j["ts"] = format_iso8601(t.timestamp);
    j["action"] = t.action;
    j["attrs"] = t.attrs;
    return j;
}

inline Transaction transaction_from_json(const nlohmann::json& j) {
    Transaction t;
    t.anon_id = j.at("id").get<std::string>();
    t.platform = require_platform(j.at("platform").get<std::string>());
    t.timestamp = parse_iso8601(j.at("ts").get<std::string>());
    t.action = j.at("action").get<std::string>();
    t.attrs = j.at("attrs").get<Attrs>();
    return t;
}

inline void write_unified_log(const std::filesystem::path& path,
                              const std::vector<Transaction>& txns) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& t : txns) out << transaction_to_json(t).dump() << '\n';
}

inline std::vector<Transaction> read_unified_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open unified log: " + path.string());
    std::vector<Transaction> txns;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            txns.push_back(transaction_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    return txns;
}

}  // namespace coursetrace
