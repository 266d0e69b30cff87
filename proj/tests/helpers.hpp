#pragma once

// Shared fixtures plus independent reference implementations ("oracles").
// The oracles re-derive results along different routes than the library so
// the suites can cross-check them; they are test-only code.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

#include "coursetrace/config.hpp"
#include "coursetrace/models.hpp"
#include "coursetrace/session.hpp"
#include "coursetrace/types.hpp"

namespace testutil {

using namespace coursetrace;

inline Instant base_start() { return parse_iso8601("2026-01-08T00:00:00Z"); }

/// A 15-week course with all four platforms, weekly deadlines and two tests.
inline CourseConfig base_config() {
    CourseConfig c;
    c.course_id = "course-101";
    c.platforms = {Platform::Lms, Platform::Forum, Platform::Homework, Platform::Vcs};
    c.semester_start = base_start();
    c.semester_end = parse_iso8601("2026-04-22T23:59:59Z");
    for (int i = 0; i < 10; ++i)
        c.deadlines.push_back({"hw" + std::to_string(i + 1),
                               parse_iso8601("2026-01-15T23:59:00Z") + i * 7 * kSecondsPerDay});
    c.test_dates = {parse_iso8601("2026-02-12T10:00:00Z"),
                    parse_iso8601("2026-03-19T10:00:00Z")};
    return c;
}

inline Transaction txn(std::string id, Platform p, double minutes_from_start,
                       std::string action = "view", Attrs attrs = {}) {
    Transaction t;
    t.anon_id = std::move(id);
    t.platform = p;
    t.timestamp = base_start() + static_cast<Instant>(std::llround(minutes_from_start * 60.0));
    t.action = std::move(action);
    t.attrs = std::move(attrs);
    return t;
}

/// Unique scratch directory under the system temp path.
struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path = std::filesystem::temp_directory_path() /
               ("coursetrace_" + tag + "_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
};

// --- sessionization oracle ------------------------------------------------------

/// Splits one student's timestamps by scanning pairwise gaps in raw seconds.
inline std::vector<std::vector<std::size_t>> oracle_split(const std::vector<Instant>& times,
                                                          const std::vector<std::size_t>& idx,
                                                          double cutoff_minutes) {
    std::vector<std::vector<std::size_t>> sessions;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const bool boundary =
            i == 0 || static_cast<double>(times[i] - times[i - 1]) > cutoff_minutes * 60.0;
        if (boundary) sessions.emplace_back();
        sessions.back().push_back(idx[i]);
    }
    return sessions;
}

/// Full-log partition oracle: per student, the list of transaction-index runs.
inline std::map<std::string, std::vector<std::vector<std::size_t>>> oracle_partition(
    const std::vector<Transaction>& txns, double cutoff_minutes) {
    std::map<std::string, std::pair<std::vector<Instant>, std::vector<std::size_t>>> grouped;
    for (std::size_t i = 0; i < txns.size(); ++i) {
        grouped[txns[i].anon_id].first.push_back(txns[i].timestamp);
        grouped[txns[i].anon_id].second.push_back(i);
    }
    std::map<std::string, std::vector<std::vector<std::size_t>>> out;
    for (const auto& [id, pair] : grouped)
        out[id] = oracle_split(pair.first, pair.second, cutoff_minutes);
    return out;
}

/// Library partition brought into the oracle's shape for comparison.
inline std::map<std::string, std::vector<std::vector<std::size_t>>> partition_of(
    const SessionSet& set) {
    std::map<std::string, std::vector<std::vector<std::size_t>>> out;
    for (const auto& s : set.sessions) out[s.anon_id].push_back(s.txn_indices);
    return out;
}

// --- Kendall tau oracle ------------------------------------------------------------

/// Exhaustive pair enumeration; returns nothing when a variable is constant.
inline std::optional<double> oracle_tau_b(const std::vector<double>& x,
                                          const std::vector<double>& y) {
    const std::size_t n = x.size();
    long long concordant = 0, discordant = 0, tie_x = 0, tie_y = 0, tie_both = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0 && dy == 0)
                ++tie_both;
            else if (dx == 0)
                ++tie_x;
            else if (dy == 0)
                ++tie_y;
            else if (dx * dy > 0)
                ++concordant;
            else
                ++discordant;
        }
    const double n0 = static_cast<double>(n) * (static_cast<double>(n) - 1.0) / 2.0;
    const double n1 = static_cast<double>(tie_x + tie_both);
    const double n2 = static_cast<double>(tie_y + tie_both);
    if (n0 == n1 || n0 == n2) return std::nullopt;
    return static_cast<double>(concordant - discordant) / std::sqrt((n0 - n1) * (n0 - n2));
}

// --- Kruskal-Wallis permutation oracle ------------------------------------------------

/// H statistic for tie-free data, recomputed from scratch (sorted positions
/// as ranks).
inline double oracle_kw_h(const std::vector<double>& pooled,
                          const std::vector<int>& assignment, int k) {
    const std::size_t n = pooled.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return pooled[a] < pooled[b]; });
    std::vector<double> rank_sum(static_cast<std::size_t>(k), 0.0);
    std::vector<std::size_t> sizes(static_cast<std::size_t>(k), 0);
    for (std::size_t r = 0; r < n; ++r) {
        const auto g = static_cast<std::size_t>(assignment[order[r]]);
        rank_sum[g] += static_cast<double>(r + 1);
        ++sizes[g];
    }
    const double nn = static_cast<double>(n);
    double h = 0.0;
    for (std::size_t g = 0; g < rank_sum.size(); ++g)
        h += rank_sum[g] * rank_sum[g] / static_cast<double>(sizes[g]);
    return 12.0 / (nn * (nn + 1.0)) * h - 3.0 * (nn + 1.0);
}

/// Exact two-group permutation p-value with the mid-p convention: the share
/// of assignments strictly above the observed H plus half the share at it.
inline double oracle_kw_perm_midp(const std::vector<double>& g1, const std::vector<double>& g2) {
    std::vector<double> pooled = g1;
    pooled.insert(pooled.end(), g2.begin(), g2.end());
    const std::size_t n = pooled.size(), n1 = g1.size();
    std::vector<int> base(n, 1);
    std::fill(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(n1), 0);
    const double h_obs = oracle_kw_h(pooled, base, 2);

    std::vector<bool> mask(n, false);
    std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(n1), true);
    std::sort(mask.begin(), mask.end(), std::greater<bool>());
    std::size_t total = 0, greater = 0, equal = 0;
    do {
        std::vector<int> assignment(n);
        for (std::size_t i = 0; i < n; ++i) assignment[i] = mask[i] ? 0 : 1;
        const double h = oracle_kw_h(pooled, assignment, 2);
        ++total;
        if (h > h_obs + 1e-9)
            ++greater;
        else if (h > h_obs - 1e-9)
            ++equal;
    } while (std::prev_permutation(mask.begin(), mask.end()));
    return (static_cast<double>(greater) + 0.5 * static_cast<double>(equal)) /
           static_cast<double>(total);
}

// --- model oracles ---------------------------------------------------------------------

/// Nearest-k by repeated minimum scan, then majority with the same tie rules.
inline int oracle_knn(const std::vector<std::vector<double>>& rows,
                      const std::vector<int>& labels, int k, const std::vector<double>& point) {
    std::vector<bool> used(rows.size(), false);
    int votes = 0;
    for (int picked = 0; picked < k; ++picked) {
        double best = 0.0;
        std::size_t best_idx = rows.size();
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (used[i]) continue;
            double d2 = 0.0;
            for (std::size_t j = 0; j < point.size(); ++j)
                d2 += (rows[i][j] - point[j]) * (rows[i][j] - point[j]);
            if (best_idx == rows.size() || d2 < best) {
                best = d2;
                best_idx = i;
            }
        }
        used[best_idx] = true;
        votes += labels[best_idx];
    }
    return 2 * votes > k ? 1 : 0;
}

/// Central finite differences of the logistic objective value.
inline std::vector<double> oracle_fd_gradient(const std::vector<std::vector<double>>& rows,
                                              const std::vector<int>& labels,
                                              const std::vector<double>& params, double l2,
                                              double eps = 1e-6) {
    std::vector<double> grad(params.size());
    for (std::size_t j = 0; j < params.size(); ++j) {
        auto hi = params, lo = params;
        hi[j] += eps;
        lo[j] -= eps;
        grad[j] = (logistic_objective(rows, labels, hi, l2).first -
                   logistic_objective(rows, labels, lo, l2).first) /
                  (2.0 * eps);
    }
    return grad;
}

}  // namespace testutil
