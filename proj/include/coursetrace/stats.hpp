#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coursetrace/csv.hpp"
#include "coursetrace/features.hpp"

namespace coursetrace {

// --- special functions -------------------------------------------------------

namespace detail {

// Regularized incomplete gamma P(a,x) by series expansion; converges for x < a+1.
inline double gamma_p_series(double a, double x) {
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 500; ++i) {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
    }
    return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper gamma Q(a,x) by continued fraction; converges for x >= a+1.
inline double gamma_q_cf(double a, double x) {
    const double tiny = 1e-300;
    double b = x + 1.0 - a;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 500; ++i) {
        double an = -i * (i - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x).
inline double regularized_gamma_q(double a, double x) {
    if (a <= 0.0 || x < 0.0) throw std::invalid_argument("regularized_gamma_q domain");
    if (x == 0.0) return 1.0;
    if (x < a + 1.0) return 1.0 - detail::gamma_p_series(a, x);
    return detail::gamma_q_cf(a, x);
}

/// Survival function of the chi-square distribution with `df` degrees of freedom.
inline double chi2_sf(double x, double df) {
    if (x <= 0.0) return 1.0;
    return regularized_gamma_q(df / 2.0, x / 2.0);
}

/// Standard normal survival function.
inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// --- ranks --------------------------------------------------------------------

/// Midrank-tied ranks (1-based), aligned to the input order.
inline std::vector<double> midranks(const std::vector<double>& values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        i = j + 1;
    }
    return ranks;
}

// --- Kruskal-Wallis ------------------------------------------------------------

struct KwResult {
    double H = 0;
    double p = 1;
};

/// Rank-based k-group location test. Ties get midranks and the statistic is
/// tie-corrected; p comes from the chi-square approximation with k-1 degrees
/// of freedom. All values identical yields H = 0, p = 1.
inline KwResult kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw std::invalid_argument("need at least two groups");
    std::vector<double> pooled;
    for (const auto& g : groups) {
        if (g.empty()) throw std::invalid_argument("empty group");
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const std::size_t n = pooled.size();
    if (n < 3) throw std::invalid_argument("need at least three values in total");

    const auto ranks = midranks(pooled);
    const double N = static_cast<double>(n);
    double h = 0.0;
    std::size_t offset = 0;
    for (const auto& g : groups) {
        double rank_sum = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) rank_sum += ranks[offset + i];
        h += rank_sum * rank_sum / static_cast<double>(g.size());
        offset += g.size();
    }
    h = 12.0 / (N * (N + 1.0)) * h - 3.0 * (N + 1.0);

    // Tie correction: 1 - sum(t^3 - t) / (N^3 - N) over tie groups.
    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_sum = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        tie_sum += t * t * t - t;
        i = j + 1;
    }
    const double correction = 1.0 - tie_sum / (N * N * N - N);
    if (correction <= 0.0) return {0.0, 1.0};  // every value identical
    h /= correction;
    if (h < 0.0) h = 0.0;  // guard against rounding just below zero

    const double df = static_cast<double>(groups.size() - 1);
    return {h, chi2_sf(h, df)};
}

// --- Kendall tau-b ---------------------------------------------------------------

struct TauResult {
    double tau = 0;
    double p = 1;
};

namespace detail {

// Counts inversions of `seq` by mergesort; equal elements are not inversions.
inline std::uint64_t merge_count(std::vector<double>& seq, std::vector<double>& tmp,
                                 std::size_t lo, std::size_t hi) {
    if (hi - lo < 2) return 0;
    const std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t swaps = merge_count(seq, tmp, lo, mid) + merge_count(seq, tmp, mid, hi);
    std::size_t a = lo, b = mid, out = lo;
    while (a < mid && b < hi) {
        if (seq[b] < seq[a]) {
            swaps += mid - a;
            tmp[out++] = seq[b++];
        } else {
            tmp[out++] = seq[a++];
        }
    }
    while (a < mid) tmp[out++] = seq[a++];
    while (b < hi) tmp[out++] = seq[b++];
    std::copy(tmp.begin() + static_cast<std::ptrdiff_t>(lo),
              tmp.begin() + static_cast<std::ptrdiff_t>(hi),
              seq.begin() + static_cast<std::ptrdiff_t>(lo));
    return swaps;
}

struct TieCounts {
    double pairs = 0;    // sum t(t-1)/2
    double triple = 0;   // sum t(t-1)(t-2)
    double var_term = 0; // sum t(t-1)(2t+5)
};

template <typename Equal>
TieCounts count_ties(std::size_t n, Equal same) {
    TieCounts c;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && same(j, j + 1)) ++j;
        const double t = static_cast<double>(j - i + 1);
        c.pairs += t * (t - 1.0) / 2.0;
        c.triple += t * (t - 1.0) * (t - 2.0);
        c.var_term += t * (t - 1.0) * (2.0 * t + 5.0);
        i = j + 1;
    }
    return c;
}

}  // namespace detail

/// Kendall's tau-b with tie corrections; two-sided p-value from the normal
/// approximation of the concordance statistic with the tie-adjusted variance.
/// Returns nothing when either variable has no variation.
inline std::optional<TauResult> kendall_tau(const std::vector<double>& x,
                                            const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::invalid_argument("length mismatch");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (x[a] != x[b]) return x[a] < x[b];
        return y[a] < y[b];
    });

    auto xtie = detail::count_ties(
        n, [&](std::size_t a, std::size_t b) { return x[order[a]] == x[order[b]]; });
    auto joint = detail::count_ties(n, [&](std::size_t a, std::size_t b) {
        return x[order[a]] == x[order[b]] && y[order[a]] == y[order[b]];
    });

    std::vector<double> y_seq(n);
    for (std::size_t i = 0; i < n; ++i) y_seq[i] = y[order[i]];
    std::vector<double> tmp(n);
    const double dis = static_cast<double>(detail::merge_count(y_seq, tmp, 0, n));

    std::vector<double> y_sorted = y_seq;  // now sorted by the merge
    auto ytie = detail::count_ties(
        n, [&](std::size_t a, std::size_t b) { return y_sorted[a] == y_sorted[b]; });

    const double nn = static_cast<double>(n);
    const double tot = nn * (nn - 1.0) / 2.0;
    if (tot == xtie.pairs || tot == ytie.pairs) return std::nullopt;  // constant input

    const double s = tot - xtie.pairs - ytie.pairs + joint.pairs - 2.0 * dis;
    const double tau = s / std::sqrt((tot - xtie.pairs) * (tot - ytie.pairs));

    double var = (nn * (nn - 1.0) * (2.0 * nn + 5.0) - xtie.var_term - ytie.var_term) / 18.0;
    if (n > 2)
        var += xtie.triple * ytie.triple / (9.0 * nn * (nn - 1.0) * (nn - 2.0));
    var += xtie.pairs * 2.0 * ytie.pairs * 2.0 / (2.0 * nn * (nn - 1.0));
    double p = 1.0;
    if (var > 0.0) p = std::min(1.0, 2.0 * normal_sf(std::fabs(s) / std::sqrt(var)));
    return TauResult{tau, p};
}

// --- feature screening ------------------------------------------------------------

struct FeatureStat {
    std::string feature;
    std::string window;
    std::optional<double> kw_H;
    std::optional<double> kw_p;
    std::optional<double> tau;
    std::optional<double> tau_p;
    std::size_t n_kw = 0;
    std::size_t n_tau = 0;
    std::string note;
};

inline std::string significance_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "";
}

/// Runs the two screens for every feature in every window table: the rank test
/// across the binary outcome groups and the rank correlation against the
/// ordinal final grade. Missing values are excluded per cell; sample sizes are
/// reported. Rows with no usable data carry a note instead of numbers.
inline std::vector<FeatureStat> screen_features(
    const std::vector<std::pair<std::string, FeatureTable>>& windows,
    const std::map<std::string, Group2>& binary_labels,
    const std::map<std::string, int>& ordinal_grades) {
    std::vector<FeatureStat> out;
    for (const auto& [window_label, table] : windows) {
        for (const auto& feature : table.feature_names) {
            FeatureStat stat;
            stat.feature = feature;
            stat.window = window_label;

            std::vector<double> distinction, rest;
            std::vector<double> xs, ys;
            for (const auto& [id, cells] : table.rows) {
                auto cell = cells.find(feature);
                if (cell == cells.end()) continue;
                auto label = binary_labels.find(id);
                if (label != binary_labels.end()) {
                    (label->second == Group2::Distinction ? distinction : rest)
                        .push_back(cell->second);
                }
                auto grade = ordinal_grades.find(id);
                if (grade != ordinal_grades.end()) {
                    xs.push_back(cell->second);
                    ys.push_back(static_cast<double>(grade->second));
                }
            }

            if (distinction.empty() && rest.empty() && xs.empty()) {
                stat.note = "no data";
                out.push_back(std::move(stat));
                continue;
            }
            if (!distinction.empty() && !rest.empty() &&
                distinction.size() + rest.size() >= 3) {
                auto kw = kruskal_wallis({distinction, rest});
                stat.kw_H = kw.H;
                stat.kw_p = kw.p;
                stat.n_kw = distinction.size() + rest.size();
            } else {
                stat.note = "group missing";
            }
            if (xs.size() >= 2) {
                if (auto tau = kendall_tau(xs, ys)) {
                    stat.tau = tau->tau;
                    stat.tau_p = tau->p;
                    stat.n_tau = xs.size();
                } else if (stat.note.empty()) {
                    stat.note = "constant values";
                }
            }
            out.push_back(std::move(stat));
        }
    }
    return out;
}

inline void write_stats_csv(const std::filesystem::path& path,
                            const std::vector<FeatureStat>& stats) {
    // Column groups per window, preserving first-seen order.
    std::vector<std::string> windows;
    std::vector<std::string> features;
    for (const auto& s : stats) {
        if (std::find(windows.begin(), windows.end(), s.window) == windows.end())
            windows.push_back(s.window);
        if (std::find(features.begin(), features.end(), s.feature) == features.end())
            features.push_back(s.feature);
    }
    std::map<std::pair<std::string, std::string>, const FeatureStat*> cell;
    for (const auto& s : stats) cell[{s.feature, s.window}] = &s;

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::vector<std::string> header = {"feature"};
    for (const auto& w : windows)
        for (const char* col : {"kw_H", "kw_p", "kw_sig", "tau", "tau_p", "tau_sig", "n"})
            header.push_back(w + "_" + col);
    out << csv_join(header) << '\n';

    auto num = [](const std::optional<double>& v) {
        return v ? detail::format_number(*v) : std::string();
    };
    for (const auto& f : features) {
        std::vector<std::string> row = {f};
        for (const auto& w : windows) {
            auto it = cell.find({f, w});
            if (it == cell.end()) {
                row.insert(row.end(), 7, "");
                continue;
            }
            const FeatureStat& s = *it->second;
            row.push_back(num(s.kw_H));
            row.push_back(num(s.kw_p));
            row.push_back(s.kw_p ? significance_stars(*s.kw_p) : "");
            row.push_back(num(s.tau));
            row.push_back(num(s.tau_p));
            row.push_back(s.tau_p ? significance_stars(*s.tau_p) : "");
            row.push_back(std::to_string(std::max(s.n_kw, s.n_tau)));
        }
        out << csv_join(row) << '\n';
    }
}

inline std::vector<FeatureStat> read_stats_csv(const std::filesystem::path& path) {
    auto table = read_csv_file(path);
    if (table.header.empty() || table.header[0] != "feature")
        throw std::runtime_error(path.string() + ": not a stats CSV");
    // Window labels recoverable from "<window>_kw_H" columns.
    std::vector<std::pair<std::string, std::size_t>> window_cols;
    for (std::size_t i = 1; i < table.header.size(); ++i) {
        const std::string& h = table.header[i];
        if (h.size() > 5 && h.substr(h.size() - 5) == "_kw_H")
            window_cols.push_back({h.substr(0, h.size() - 5), i});
    }
    std::vector<FeatureStat> stats;
    for (const auto& row : table.rows) {
        for (const auto& [window, base] : window_cols) {
            FeatureStat s;
            s.feature = row.at(0);
            s.window = window;
            auto get = [&](std::size_t i) -> std::optional<double> {
                if (i >= row.size() || row[i].empty()) return std::nullopt;
                return std::stod(row[i]);
            };
            s.kw_H = get(base);
            s.kw_p = get(base + 1);
            s.tau = get(base + 3);
            s.tau_p = get(base + 4);
            if (auto n = get(base + 6)) s.n_kw = static_cast<std::size_t>(*n);
            stats.push_back(std::move(s));
        }
    }
    return stats;
}

}  // namespace coursetrace
