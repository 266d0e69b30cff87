#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coursetrace/config.hpp"
#include "coursetrace/features.hpp"
#include "coursetrace/types.hpp"
#include "coursetrace/util.hpp"

namespace coursetrace {

/// Behavior parameters for one performance group.
struct GroupSpec {
    std::size_t students = 0;
    double rate_multiplier = 1.0;       // scales burst frequency
    double gap_mean_minutes = 1500.0;   // between-burst gap distribution
    double gap_stddev_minutes = 400.0;
    double forum_prob = 0.25;           // chance a burst is forum-flavored
};

/// Ground-truth cohort description. Bursts are the generative unit: every
/// burst keeps its internal gaps under the browser cutoff and consecutive
/// bursts are separated by more than it, so bursts and browser sessions
/// coincide exactly.
struct CohortSpec {
    std::uint64_t seed = 0;
    GroupSpec distinction, pass, fail;
    double burst_events_mean = 6.0;
    double burst_events_stddev = 3.0;
    double event_gap_min_minutes = 0.2;
    double event_gap_max_minutes = 8.0;
    double platform_switch_prob = 0.04;  // chance a burst touches a second platform
    double deadline_boost = 1.0;         // burst-rate factor inside pre-deadline windows
    int deadline_window_days = 3;
    double forum_question_prob = 0.2;    // share of forum events that post a question
    double forum_answer_prob = 0.2;      // ... an answer; the rest are views
    double homework_resubmit_prob = 0.3;

    void validate(const CourseConfig& config) const {
        auto in01 = [](double p) { return p >= 0.0 && p <= 1.0; };
        for (const GroupSpec* g : {&distinction, &pass, &fail}) {
            if (g->rate_multiplier <= 0.0 || g->gap_mean_minutes <= 0.0 ||
                g->gap_stddev_minutes < 0.0)
                throw std::invalid_argument("group rates must be positive");
            if (!in01(g->forum_prob)) throw std::invalid_argument("forum_prob outside [0,1]");
        }
        if (distinction.students + pass.students + fail.students == 0)
            throw std::invalid_argument("cohort has no students");
        if (burst_events_mean < 1.0 || burst_events_stddev < 0.0)
            throw std::invalid_argument("burst length distribution invalid");
        if (event_gap_min_minutes <= 0.0 || event_gap_max_minutes < event_gap_min_minutes)
            throw std::invalid_argument("event gap range invalid");
        if (event_gap_max_minutes >= config.browser_cutoff_minutes)
            throw std::invalid_argument(
                "infeasible: within-burst gaps would reach the browser cutoff");
        if (!in01(platform_switch_prob) || !in01(forum_question_prob) ||
            !in01(forum_answer_prob) || !in01(homework_resubmit_prob))
            throw std::invalid_argument("probability outside [0,1]");
        if (forum_question_prob + forum_answer_prob > 1.0)
            throw std::invalid_argument("forum question+answer rates exceed 1");
        if (deadline_boost < 1.0) throw std::invalid_argument("deadline_boost must be >= 1");
        if (deadline_window_days < 1)
            throw std::invalid_argument("deadline_window_days must be >= 1");
    }

    static CohortSpec from_json(const nlohmann::json& j) {
        CohortSpec s;
        s.seed = j.value("seed", 0ull);
        auto group = [&](const char* name, GroupSpec& g) {
            const auto& gj = j.at("groups").at(name);
            g.students = gj.at("students").get<std::size_t>();
            g.rate_multiplier = gj.value("rate_multiplier", 1.0);
            g.gap_mean_minutes = gj.value("gap_mean_minutes", 1500.0);
            g.gap_stddev_minutes = gj.value("gap_stddev_minutes", 400.0);
            g.forum_prob = gj.value("forum_prob", 0.25);
        };
        group("distinction", s.distinction);
        group("pass", s.pass);
        group("fail", s.fail);
        if (j.contains("burst")) {
            const auto& b = j.at("burst");
            s.burst_events_mean = b.value("events_mean", 6.0);
            s.burst_events_stddev = b.value("events_stddev", 3.0);
            s.event_gap_min_minutes = b.value("event_gap_min_minutes", 0.2);
            s.event_gap_max_minutes = b.value("event_gap_max_minutes", 8.0);
        }
        s.platform_switch_prob = j.value("platform_switch_prob", 0.04);
        s.deadline_boost = j.value("deadline_boost", 1.0);
        s.deadline_window_days = j.value("deadline_window_days", 3);
        s.forum_question_prob = j.value("forum_question_prob", 0.2);
        s.forum_answer_prob = j.value("forum_answer_prob", 0.2);
        s.homework_resubmit_prob = j.value("homework_resubmit_prob", 0.3);
        return s;
    }

    static CohortSpec load(const std::filesystem::path& path) {
        try {
            return from_json(nlohmann::json::parse(read_file(path)));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("cannot parse cohort spec " + path.string() + ": " + e.what());
        }
    }
};

struct SynthResult {
    std::vector<Transaction> txns;
    std::vector<GradeRecord> grades;
    std::map<std::string, Group3> groups;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

struct LetterScore {
    const char* letter;
    double score;
};

inline const std::vector<LetterScore>& letters_for(Group3 g) {
    static const std::vector<LetterScore> distinction = {{"A+", 98}, {"A", 95}, {"A-", 91}};
    static const std::vector<LetterScore> pass = {{"B+", 88}, {"B", 85}, {"B-", 81},
                                                  {"C+", 78}, {"C", 75}, {"C-", 71}};
    static const std::vector<LetterScore> fail = {{"D", 65}, {"F", 50}};
    switch (g) {
        case Group3::Distinction: return distinction;
        case Group3::Pass: return pass;
        case Group3::Fail: return fail;
    }
    return pass;
}

inline double test_score_mean(Group3 g) {
    switch (g) {
        case Group3::Distinction: return 92.0;
        case Group3::Pass: return 79.0;
        case Group3::Fail: return 58.0;
    }
    return 79.0;
}

}  // namespace detail

/// Generates a cohort's unified transaction log plus grade records. The same
/// (spec, config) pair always produces byte-identical output; students are
/// generated from independently derived engines and merged in the canonical
/// log order.
inline SynthResult generate(const CohortSpec& spec, const CourseConfig& config) {
    spec.validate(config);
    SynthResult result;

    std::vector<Platform> course_platforms(config.platforms.begin(), config.platforms.end());
    std::vector<Platform> non_forum;
    for (Platform p : course_platforms)
        if (p != Platform::Forum) non_forum.push_back(p);
    const bool has_forum = config.platforms.count(Platform::Forum) > 0;

    std::vector<int> deadline_day;
    for (const auto& d : config.deadlines)
        deadline_day.push_back(static_cast<int>(day_index(d.at, config.semester_start)));
    auto boosted = [&](Instant t) {
        const auto day = day_index(t, config.semester_start);
        for (int dd : deadline_day)
            if (day >= dd - spec.deadline_window_days && day < dd) return true;
        return false;
    };

    struct StudentRows {
        std::vector<Transaction> txns;
    };
    std::vector<StudentRows> per_student;

    std::size_t student_no = 0;
    auto generate_group = [&](const GroupSpec& group, Group3 g3) {
        for (std::size_t i = 0; i < group.students; ++i, ++student_no) {
            char idbuf[16];
            std::snprintf(idbuf, sizeof(idbuf), "syn%05zu", student_no);
            const std::string anon_id = idbuf;
            std::mt19937_64 rng(detail::splitmix64(spec.seed ^ (student_no + 1) * 0x54c77d0bece3f4adull));
            std::normal_distribution<double> gap_dist(group.gap_mean_minutes,
                                                      group.gap_stddev_minutes);
            std::normal_distribution<double> burst_len(spec.burst_events_mean,
                                                       spec.burst_events_stddev);
            std::uniform_real_distribution<double> event_gap(spec.event_gap_min_minutes,
                                                             spec.event_gap_max_minutes);
            std::uniform_real_distribution<double> unit(0.0, 1.0);

            // Grade first so the draw order is independent of activity volume.
            const auto& letters = detail::letters_for(g3);
            const auto& chosen =
                letters[std::min(letters.size() - 1,
                                 static_cast<std::size_t>(unit(rng) * static_cast<double>(
                                                                          letters.size())))];
            GradeRecord grade;
            grade.anon_id = anon_id;
            grade.letter = chosen.letter;
            std::normal_distribution<double> test_noise(0.0, 5.0);
            auto clamp_score = [](double v) { return std::min(100.0, std::max(0.0, std::round(v))); };
            grade.final_score = clamp_score(chosen.score + test_noise(rng) / 2.0);
            grade.test1_score = clamp_score(detail::test_score_mean(g3) + test_noise(rng));
            grade.test2_score = clamp_score(detail::test_score_mean(g3) + test_noise(rng));
            result.grades.push_back(grade);
            result.groups[anon_id] = g3;

            StudentRows rows;
            // Homework cursor state.
            int hw_question = 1, hw_part = 1;
            std::map<std::string, int> attempts;

            const double gap_floor = config.browser_cutoff_minutes + 1.0;
            auto next_gap_minutes = [&](Instant at) {
                double g = gap_dist(rng) / group.rate_multiplier;
                if (boosted(at)) g /= spec.deadline_boost;
                return std::max(g, gap_floor);
            };

            Instant t = config.semester_start +
                        static_cast<Instant>(std::llround(next_gap_minutes(config.semester_start) * 60.0 * unit(rng)));
            while (t <= config.semester_end) {
                long burst_n = std::lround(burst_len(rng));
                const double switch_draw = unit(rng);
                const bool hetero =
                    course_platforms.size() > 1 && switch_draw < spec.platform_switch_prob;
                if (hetero && burst_n < 2) burst_n = 2;
                if (burst_n < 1) burst_n = 1;

                Platform primary;
                if (has_forum && unit(rng) < group.forum_prob) {
                    primary = Platform::Forum;
                } else if (!non_forum.empty()) {
                    primary = non_forum[std::min(
                        non_forum.size() - 1,
                        static_cast<std::size_t>(unit(rng) *
                                                 static_cast<double>(non_forum.size())))];
                } else {
                    primary = Platform::Forum;
                }
                Platform secondary = primary;
                long switch_at = burst_n;
                if (hetero) {
                    std::vector<Platform> others;
                    for (Platform p : course_platforms)
                        if (p != primary) others.push_back(p);
                    secondary = others[std::min(
                        others.size() - 1,
                        static_cast<std::size_t>(unit(rng) * static_cast<double>(others.size())))];
                    switch_at = 1 + static_cast<long>(unit(rng) * static_cast<double>(burst_n - 1));
                }

                Instant event_time = t;
                for (long e = 0; e < burst_n && event_time <= config.semester_end; ++e) {
                    if (e > 0)
                        event_time += std::max<Instant>(
                            1, static_cast<Instant>(std::llround(event_gap(rng) * 60.0)));
                    if (event_time > config.semester_end) break;
                    const Platform platform = e >= switch_at ? secondary : primary;
                    Transaction txn;
                    txn.anon_id = anon_id;
                    txn.platform = platform;
                    txn.timestamp = event_time;
                    switch (platform) {
                        case Platform::Lms:
                            txn.action = "view";
                            break;
                        case Platform::Forum: {
                            const double u = unit(rng);
                            if (u < spec.forum_question_prob) {
                                txn.action = "post";
                                txn.attrs["kind"] = "question";
                            } else if (u < spec.forum_question_prob + spec.forum_answer_prob) {
                                txn.action = "post";
                                txn.attrs["kind"] = "answer";
                            } else {
                                txn.action = "view";
                            }
                            break;
                        }
                        case Platform::Homework: {
                            txn.action = "submit";
                            // Work on the assignment of the next upcoming deadline.
                            int assignment = 1;
                            for (std::size_t di = 0; di < config.deadlines.size(); ++di)
                                if (config.deadlines[di].at >= event_time) {
                                    assignment = static_cast<int>(di) + 1;
                                    break;
                                }
                            if (!config.deadlines.empty() &&
                                event_time > config.deadlines.back().at)
                                assignment = static_cast<int>(config.deadlines.size());
                            const bool resubmit = unit(rng) < spec.homework_resubmit_prob;
                            if (!resubmit) {
                                hw_part = hw_part % 3 + 1;
                                if (hw_part == 1) hw_question = hw_question % 8 + 1;
                            }
                            std::string key = "a" + std::to_string(assignment) + "/q" +
                                              std::to_string(hw_question) + "/p" +
                                              std::to_string(hw_part);
                            txn.attrs["assignment_id"] = "a" + std::to_string(assignment);
                            txn.attrs["question_id"] = "q" + std::to_string(hw_question);
                            txn.attrs["part_id"] = "p" + std::to_string(hw_part);
                            txn.attrs["attempt"] = std::to_string(++attempts[key]);
                            break;
                        }
                        case Platform::Vcs: {
                            txn.action = "commit";
                            txn.attrs["lines_changed"] =
                                std::to_string(1 + static_cast<int>(unit(rng) * 400.0));
                            break;
                        }
                    }
                    rows.txns.push_back(std::move(txn));
                }
                t = event_time + static_cast<Instant>(std::llround(next_gap_minutes(event_time) * 60.0));
            }
            per_student.push_back(std::move(rows));
        }
    };

    generate_group(spec.distinction, Group3::Distinction);
    generate_group(spec.pass, Group3::Pass);
    generate_group(spec.fail, Group3::Fail);

    for (auto& rows : per_student)
        result.txns.insert(result.txns.end(), rows.txns.begin(), rows.txns.end());
    std::stable_sort(result.txns.begin(), result.txns.end(),
                     [](const Transaction& a, const Transaction& b) {
                         if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
                         return platform_rank(a.platform) < platform_rank(b.platform);
                     });
    return result;
}

}  // namespace coursetrace
