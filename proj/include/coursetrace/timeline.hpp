#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "coursetrace/config.hpp"
#include "coursetrace/csv.hpp"
#include "coursetrace/features.hpp"
#include "coursetrace/session.hpp"

namespace coursetrace {

/// Sessions per calendar day for one performance group. Day 0 starts at
/// semester_start; sessions are bucketed by their start instant.
struct ActivitySeries {
    Group3 group = Group3::Distinction;
    std::vector<std::size_t> counts;
};

struct Timeline {
    std::vector<ActivitySeries> series;  // distinction, pass, fail
    std::vector<std::pair<std::string, int>> deadline_days;
    std::vector<int> test_days;
    int n_days = 0;
};

inline Timeline build_series(const SessionSet& sessions,
                             const std::map<std::string, Group3>& labels,
                             const CourseConfig& config) {
    Timeline tl;
    tl.n_days = static_cast<int>(day_index(config.semester_end, config.semester_start)) + 1;
    for (Group3 g : {Group3::Distinction, Group3::Pass, Group3::Fail})
        tl.series.push_back({g, std::vector<std::size_t>(static_cast<std::size_t>(tl.n_days), 0)});
    for (const auto& s : sessions.sessions) {
        auto label = labels.find(s.anon_id);
        if (label == labels.end())
            throw std::invalid_argument("no performance label for session owner " + s.anon_id);
        const auto day = day_index(s.start, config.semester_start);
        if (day < 0 || day >= tl.n_days)
            throw std::invalid_argument("session outside the semester for " + s.anon_id);
        ++tl.series[static_cast<std::size_t>(label->second)].counts[static_cast<std::size_t>(day)];
    }
    for (const auto& d : config.deadlines)
        tl.deadline_days.emplace_back(d.label,
                                      static_cast<int>(day_index(d.at, config.semester_start)));
    for (Instant t : config.test_dates)
        tl.test_days.push_back(static_cast<int>(day_index(t, config.semester_start)));
    return tl;
}

struct SpikeReport {
    std::string label;
    int day = 0;
    double pre_mean = 0.0;
    double baseline_mean = 0.0;
    std::optional<double> ratio;  // missing when the baseline is zero
    bool spike = false;
    bool zero_baseline = false;
};

/// Pre-deadline activity against the everyday baseline. The pre-window is the
/// `pre_window_days` days directly before the deadline day; the baseline is
/// the mean over all days outside every pre-window.
inline std::vector<SpikeReport> detect_spikes(
    const ActivitySeries& series, const std::vector<std::pair<std::string, int>>& deadlines,
    int pre_window_days = 3) {
    if (series.counts.empty()) throw std::invalid_argument("empty series");
    if (pre_window_days < 1) throw std::invalid_argument("pre-window must be at least one day");
    const int n_days = static_cast<int>(series.counts.size());

    std::vector<bool> in_pre(series.counts.size(), false);
    for (const auto& [label, day] : deadlines)
        for (int d = day - pre_window_days; d < day; ++d)
            if (d >= 0 && d < n_days) in_pre[static_cast<std::size_t>(d)] = true;

    double baseline_sum = 0.0;
    std::size_t baseline_days = 0;
    for (std::size_t d = 0; d < series.counts.size(); ++d)
        if (!in_pre[d]) {
            baseline_sum += static_cast<double>(series.counts[d]);
            ++baseline_days;
        }
    const double baseline =
        baseline_days > 0 ? baseline_sum / static_cast<double>(baseline_days) : 0.0;

    std::vector<SpikeReport> out;
    for (const auto& [label, day] : deadlines) {
        SpikeReport r;
        r.label = label;
        r.day = day;
        double pre_sum = 0.0;
        std::size_t pre_days = 0;
        for (int d = day - pre_window_days; d < day; ++d)
            if (d >= 0 && d < n_days) {
                pre_sum += static_cast<double>(series.counts[static_cast<std::size_t>(d)]);
                ++pre_days;
            }
        r.pre_mean = pre_days > 0 ? pre_sum / static_cast<double>(pre_days) : 0.0;
        r.baseline_mean = baseline;
        if (baseline > 0.0) {
            r.ratio = r.pre_mean / baseline;
            r.spike = *r.ratio > 1.0;
        } else {
            r.zero_baseline = true;
            r.spike = r.pre_mean > 0.0;
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline void write_timeline_csv(const std::filesystem::path& path, const Timeline& tl) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::set<int> deadline_days, test_days(tl.test_days.begin(), tl.test_days.end());
    for (const auto& [label, day] : tl.deadline_days) deadline_days.insert(day);
    out << "day,group,count,deadline,test\n";
    for (int day = 0; day < tl.n_days; ++day)
        for (const auto& series : tl.series)
            out << csv_join({std::to_string(day), std::string(to_string(series.group)),
                             std::to_string(series.counts[static_cast<std::size_t>(day)]),
                             deadline_days.count(day) ? "1" : "0",
                             test_days.count(day) ? "1" : "0"})
                << '\n';
}

inline void write_spikes_csv(const std::filesystem::path& path,
                             const std::map<Group3, std::vector<SpikeReport>>& by_group) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "group,deadline,day,pre_mean,baseline_mean,ratio,spike,zero_baseline\n";
    for (const auto& [group, reports] : by_group)
        for (const auto& r : reports)
            out << csv_join({std::string(to_string(group)), r.label, std::to_string(r.day),
                             detail::format_number(r.pre_mean),
                             detail::format_number(r.baseline_mean),
                             r.ratio ? detail::format_number(*r.ratio) : std::string(),
                             r.spike ? "1" : "0", r.zero_baseline ? "1" : "0"})
                << '\n';
}

}  // namespace coursetrace
