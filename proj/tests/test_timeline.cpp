#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "coursetrace/timeline.hpp"
#include "helpers.hpp"

using namespace coursetrace;
using testutil::base_config;
using testutil::txn;
using Catch::Approx;

namespace {

SessionSet sessions_of(const std::vector<Transaction>& txns) {
    return sessionize_cutoff(txns, 15, SessionKind::Browser, "course-101");
}

}  // namespace

TEST_CASE("one session lands in one group's day bucket") {
    auto config = base_config();
    auto txns = std::vector<Transaction>{txn("p1", Platform::Lms, 3 * 1440.0 + 30)};
    auto tl = build_series(sessions_of(txns), {{"p1", Group3::Pass}}, config);
    REQUIRE(tl.series.size() == 3);
    const auto& pass = tl.series[1];
    CHECK(pass.group == Group3::Pass);
    CHECK(pass.counts[3] == 1);
    std::size_t total = 0;
    for (auto c : pass.counts) total += c;
    CHECK(total == 1);
    // Other groups stay flat zero.
    for (auto c : tl.series[0].counts) CHECK(c == 0);
    for (auto c : tl.series[2].counts) CHECK(c == 0);
    CHECK(tl.n_days == 105);
    CHECK(tl.deadline_days.size() == config.deadlines.size());
}

TEST_CASE("series conservation: group sums equal the session count") {
    auto config = base_config();
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> minute(0.0, 104.0 * 1440.0);
    std::vector<Transaction> txns;
    std::map<std::string, Group3> labels;
    for (int s = 0; s < 12; ++s) {
        std::string id = "s" + std::to_string(s);
        labels[id] = static_cast<Group3>(s % 3);
        std::vector<double> times;
        for (int e = 0; e < 30; ++e) times.push_back(minute(rng));
        std::sort(times.begin(), times.end());
        for (double t : times) txns.push_back(txn(id, Platform::Lms, t));
    }
    std::stable_sort(txns.begin(), txns.end(),
                     [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    auto sessions = sessions_of(txns);
    auto tl = build_series(sessions, labels, config);
    std::size_t series_total = 0;
    for (const auto& s : tl.series)
        for (auto c : s.counts) series_total += c;
    CHECK(series_total == sessions.sessions.size());
}

TEST_CASE("unlabeled session owners are rejected") {
    auto config = base_config();
    auto txns = std::vector<Transaction>{txn("mystery", Platform::Lms, 100.0)};
    CHECK_THROWS_WITH(build_series(sessions_of(txns), {{"other", Group3::Pass}}, config),
                      Catch::Matchers::ContainsSubstring("mystery"));
}

TEST_CASE("flat series has ratio one at every deadline") {
    ActivitySeries series;
    series.group = Group3::Pass;
    series.counts.assign(105, 4);
    std::vector<std::pair<std::string, int>> deadlines = {{"hw1", 10}, {"hw2", 40}, {"hw3", 90}};
    auto spikes = detect_spikes(series, deadlines, 3);
    REQUIRE(spikes.size() == 3);
    for (const auto& s : spikes) {
        REQUIRE(s.ratio.has_value());
        CHECK(*s.ratio == Approx(1.0));
        CHECK_FALSE(s.spike);
    }
}

TEST_CASE("activity only on deadline eves flags a degenerate baseline") {
    ActivitySeries series;
    series.group = Group3::Fail;
    series.counts.assign(50, 0);
    series.counts[9] = 5;  // the day before the deadline at day 10
    auto spikes = detect_spikes(series, {{"hw", 10}}, 3);
    REQUIRE(spikes.size() == 1);
    CHECK(spikes[0].zero_baseline);
    CHECK_FALSE(spikes[0].ratio.has_value());
    CHECK(spikes[0].pre_mean == Approx(5.0 / 3.0));
    CHECK(spikes[0].spike);
}

TEST_CASE("spike detection reacts to a pre-deadline burst") {
    ActivitySeries series;
    series.group = Group3::Distinction;
    series.counts.assign(60, 2);
    for (int d : {17, 18, 19}) series.counts[static_cast<std::size_t>(d)] = 10;
    auto spikes = detect_spikes(series, {{"hw", 20}}, 3);
    REQUIRE(spikes.size() == 1);
    REQUIRE(spikes[0].ratio.has_value());
    CHECK(*spikes[0].ratio == Approx(5.0));
    CHECK(spikes[0].spike);
}

TEST_CASE("translating every clock by a day leaves series and ratios unchanged") {
    auto config = base_config();
    std::vector<Transaction> txns;
    std::map<std::string, Group3> labels = {{"a", Group3::Distinction}};
    for (double m : {100.0, 3000.0, 9000.0, 20000.0}) txns.push_back(txn("a", Platform::Lms, m));

    auto moved_config = config;
    moved_config.semester_start += kSecondsPerDay;
    moved_config.semester_end += kSecondsPerDay;
    for (auto& d : moved_config.deadlines) d.at += kSecondsPerDay;
    for (auto& t : moved_config.test_dates) t += kSecondsPerDay;
    auto moved_txns = txns;
    for (auto& t : moved_txns) t.timestamp += kSecondsPerDay;

    auto tl = build_series(sessions_of(txns), labels, config);
    auto moved = build_series(sessions_of(moved_txns), labels, moved_config);
    CHECK(tl.series[0].counts == moved.series[0].counts);
    auto spikes = detect_spikes(tl.series[0], tl.deadline_days);
    auto moved_spikes = detect_spikes(moved.series[0], moved.deadline_days);
    REQUIRE(spikes.size() == moved_spikes.size());
    for (std::size_t i = 0; i < spikes.size(); ++i) {
        CHECK(spikes[i].ratio == moved_spikes[i].ratio);
        CHECK(spikes[i].spike == moved_spikes[i].spike);
    }
}

TEST_CASE("extending the origin a day earlier shifts buckets by one index") {
    auto config = base_config();
    std::vector<Transaction> txns;
    std::map<std::string, Group3> labels = {{"a", Group3::Distinction}};
    for (double m : {100.0, 3000.0, 9000.0, 20000.0}) txns.push_back(txn("a", Platform::Lms, m));

    auto early_config = config;
    early_config.semester_start -= kSecondsPerDay;
    auto tl = build_series(sessions_of(txns), labels, config);
    auto early = build_series(sessions_of(txns), labels, early_config);
    REQUIRE(early.series[0].counts.size() == tl.series[0].counts.size() + 1);
    CHECK(early.series[0].counts[0] == 0);
    for (std::size_t day = 0; day < tl.series[0].counts.size(); ++day)
        CHECK(tl.series[0].counts[day] == early.series[0].counts[day + 1]);
}

TEST_CASE("timeline CSV layout") {
    testutil::TempDir dir("timeline");
    auto config = base_config();
    auto txns = std::vector<Transaction>{txn("p1", Platform::Lms, 3 * 1440.0)};
    auto tl = build_series(sessions_of(txns), {{"p1", Group3::Distinction}}, config);
    write_timeline_csv(dir.path / "t.csv", tl);
    auto text = read_file(dir.path / "t.csv");
    CHECK(text.find("day,group,count,deadline,test\n") == 0);
    CHECK(text.find("3,distinction,1,0,0") != std::string::npos);
    // Day 7 carries the first deadline marker.
    CHECK(text.find("7,distinction,0,1,0") != std::string::npos);
}
