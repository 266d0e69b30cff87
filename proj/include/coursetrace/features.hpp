#pragma once

#include <algorithm>
#include <cstdio>
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
#include "coursetrace/session.hpp"
#include "coursetrace/types.hpp"

namespace coursetrace {

enum class Group3 { Distinction, Pass, Fail };
enum class Group2 { Distinction, NonDistinction };

inline std::string_view to_string(Group3 g) {
    switch (g) {
        case Group3::Distinction: return "distinction";
        case Group3::Pass: return "pass";
        case Group3::Fail: return "fail";
    }
    return "?";
}

/// Closed grade scale, ordinal from F (0) to A+ (10).
inline const std::vector<std::string>& grade_letters() {
    static const std::vector<std::string> letters = {"F",  "D",  "C-", "C", "C+", "B-",
                                                     "B",  "B+", "A-", "A", "A+"};
    return letters;
}

inline int grade_ordinal(const std::string& letter) {
    const auto& letters = grade_letters();
    for (std::size_t i = 0; i < letters.size(); ++i)
        if (letters[i] == letter) return static_cast<int>(i);
    throw std::invalid_argument("unknown grade letter: " + letter);
}

inline Group3 grade_group(const std::string& letter) {
    const int ord = grade_ordinal(letter);
    if (ord >= 8) return Group3::Distinction;  // A-, A, A+
    if (ord >= 2) return Group3::Pass;         // C- through B+
    return Group3::Fail;                       // D, F
}

inline Group2 binary_group(Group3 g) {
    return g == Group3::Distinction ? Group2::Distinction : Group2::NonDistinction;
}

inline std::map<std::string, std::pair<Group3, Group2>> label_groups(
    const std::vector<GradeRecord>& grades) {
    std::map<std::string, std::pair<Group3, Group2>> out;
    for (const auto& g : grades) {
        Group3 three = grade_group(g.letter);
        if (!out.emplace(g.anon_id, std::make_pair(three, binary_group(three))).second)
            throw std::invalid_argument("duplicate grade record for " + g.anon_id);
    }
    return out;
}

/// Half-open analysis window [start, end). Sessions are assigned by their
/// start instant.
struct TimeWindow {
    std::string label;
    Instant start{};
    Instant end{};

    bool contains(Instant t) const { return t >= start && t < end; }
};

inline const std::vector<std::string>& window_labels() {
    static const std::vector<std::string> labels = {"pre_test1", "pre_test2", "full_semester"};
    return labels;
}

inline TimeWindow make_window(const std::string& label, const CourseConfig& config) {
    if (label == "pre_test1") return {label, config.semester_start, config.test_dates.at(0)};
    if (label == "pre_test2") return {label, config.semester_start, config.test_dates.at(1)};
    // Closed at the semester end: a session starting exactly then still counts.
    if (label == "full_semester") return {label, config.semester_start, config.semester_end + 1};
    throw std::invalid_argument("unknown window label: " + label);
}

/// Per-student study-habit profile over one window. Totals are zero for an
/// inactive student; means and ratios are missing (0/0 has no value).
struct FeatureVector {
    std::size_t session_count = 0;
    std::size_t total_actions = 0;
    double total_time_minutes = 0;
    std::size_t homogeneous_count = 0;
    std::size_t heterogeneous_count = 0;
    std::optional<double> avg_actions;
    std::optional<double> avg_duration_minutes;
    std::optional<double> avg_gap_minutes;
    std::optional<double> consistency;
    std::optional<double> pratio;
    std::size_t piazza_questions = 0;
    std::size_t piazza_answers = 0;
    // Engaged only when the course uses the homework platform.
    std::optional<std::size_t> wa_parts_submitted;
    std::optional<std::size_t> wa_first_attempts;
    std::optional<std::size_t> wa_multiple_attempts;
    std::optional<double> test1_grade;
    std::optional<double> test2_grade;
};

/// consistency = avg_gap * (cohort max session count - own session count).
/// Zero for the most active student regardless of gap; missing when the
/// student has no defined gap.
inline std::optional<double> consistency(std::optional<double> avg_gap_minutes,
                                         std::size_t session_count,
                                         std::size_t cohort_max_session_count) {
    if (!avg_gap_minutes) return std::nullopt;
    if (cohort_max_session_count < session_count)
        throw std::invalid_argument("cohort max below a member's session count");
    return *avg_gap_minutes *
           static_cast<double>(cohort_max_session_count - session_count);
}

inline std::map<std::string, FeatureVector> compute_features(
    const SessionSet& sessions, const std::vector<Transaction>& txns, const TimeWindow& window,
    const std::set<std::string>& cohort, const CourseConfig& config) {
    if (window.start < config.semester_start || window.end > config.semester_end + 1 ||
        window.start >= window.end)
        throw std::invalid_argument("window '" + window.label + "' outside the semester");
    const bool homework = config.platforms.count(Platform::Homework) > 0;

    std::map<std::string, std::vector<const Session*>> selected;
    for (const auto& id : cohort) selected[id];
    for (const auto& s : sessions.sessions) {
        if (!window.contains(s.start)) continue;
        auto it = selected.find(s.anon_id);
        if (it != selected.end()) it->second.push_back(&s);
    }

    std::map<std::string, FeatureVector> out;
    std::size_t cohort_max = 0;
    for (auto& [id, list] : selected) {
        std::sort(list.begin(), list.end(),
                  [](const Session* a, const Session* b) { return a->start < b->start; });
        FeatureVector f;
        f.session_count = list.size();
        cohort_max = std::max(cohort_max, f.session_count);
        std::size_t forum_sessions = 0;
        std::map<std::string, std::size_t> homework_keys;
        for (const Session* s : list) {
            f.total_actions += s->action_count();
            f.total_time_minutes += s->duration_minutes();
            if (classify_homogeneity(*s) == Homogeneity::Homogeneous)
                ++f.homogeneous_count;
            else
                ++f.heterogeneous_count;
            bool has_forum = false;
            for (std::size_t i : s->txn_indices) {
                const Transaction& t = txns.at(i);
                if (t.platform == Platform::Forum) {
                    has_forum = true;
                    auto kind = t.attrs.find("kind");
                    if (kind != t.attrs.end()) {
                        if (kind->second == "question") ++f.piazza_questions;
                        if (kind->second == "answer") ++f.piazza_answers;
                    }
                } else if (t.platform == Platform::Homework) {
                    auto a = t.attrs.find("assignment_id");
                    auto q = t.attrs.find("question_id");
                    auto p = t.attrs.find("part_id");
                    if (a == t.attrs.end() || q == t.attrs.end() || p == t.attrs.end())
                        throw std::invalid_argument(
                            "homework transaction without assignment/question/part ids");
                    ++homework_keys[a->second + '/' + q->second + '/' + p->second];
                }
            }
            if (has_forum) ++forum_sessions;
        }
        if (f.session_count > 0) {
            f.avg_actions =
                static_cast<double>(f.total_actions) / static_cast<double>(f.session_count);
            f.avg_duration_minutes = f.total_time_minutes / static_cast<double>(f.session_count);
            f.pratio = static_cast<double>(forum_sessions) / static_cast<double>(f.session_count);
        }
        if (f.session_count >= 2) {
            double gaps = 0;
            for (std::size_t i = 1; i < list.size(); ++i)
                gaps += minutes_between(list[i - 1]->end, list[i]->start);
            f.avg_gap_minutes = gaps / static_cast<double>(list.size() - 1);
        }
        if (homework) {
            std::size_t submissions = 0, multiple = 0;
            for (const auto& [key, n] : homework_keys) {
                submissions += n;
                if (n >= 2) ++multiple;
            }
            f.wa_parts_submitted = submissions;
            f.wa_first_attempts = homework_keys.size();
            f.wa_multiple_attempts = multiple;
        }
        out[id] = std::move(f);
    }
    for (auto& [id, f] : out)
        f.consistency = consistency(f.avg_gap_minutes, f.session_count, cohort_max);
    return out;
}

/// Adds test scores to the vectors of students that have them. Which tests
/// are included follows the window: only tests the window has already passed
/// may enter the feature set.
inline void attach_test_grades(std::map<std::string, FeatureVector>& features,
                               const std::vector<GradeRecord>& grades, bool include_test1,
                               bool include_test2) {
    for (const auto& g : grades) {
        auto it = features.find(g.anon_id);
        if (it == features.end()) continue;
        if (include_test1) it->second.test1_grade = g.test1_score;
        if (include_test2) it->second.test2_grade = g.test2_score;
    }
}

// --- feature schema ----------------------------------------------------------

struct FeatureDef {
    const char* name;
    std::optional<double> (*get)(const FeatureVector&);
    bool homework_only;
    bool test_grade;
};

/// Fixed feature order shared by the CSV layout, the screening report and the
/// model datasets.
inline const std::vector<FeatureDef>& feature_schema() {
    static const std::vector<FeatureDef> schema = {
        {"session_count",
         [](const FeatureVector& f) -> std::optional<double> {
             return static_cast<double>(f.session_count);
         },
         false, false},
        {"avg_actions", [](const FeatureVector& f) { return f.avg_actions; }, false, false},
        {"total_actions",
         [](const FeatureVector& f) -> std::optional<double> {
             return static_cast<double>(f.total_actions);
         },
         false, false},
        {"avg_duration",
         [](const FeatureVector& f) { return f.avg_duration_minutes; }, false, false},
        {"total_time",
         [](const FeatureVector& f) -> std::optional<double> { return f.total_time_minutes; },
         false, false},
        {"avg_gap", [](const FeatureVector& f) { return f.avg_gap_minutes; }, false, false},
        {"consistency", [](const FeatureVector& f) { return f.consistency; }, false, false},
        {"homogeneous_sessions",
         [](const FeatureVector& f) -> std::optional<double> {
             return static_cast<double>(f.homogeneous_count);
         },
         false, false},
        {"heterogeneous_sessions",
         [](const FeatureVector& f) -> std::optional<double> {
             return static_cast<double>(f.heterogeneous_count);
         },
         false, false},
        {"piazza_questions",
         [](const FeatureVector& f) -> std::optional<double> {
             return static_cast<double>(f.piazza_questions);
         },
         false, false},
        {"piazza_answers",
         [](const FeatureVector& f) -> std::optional<double> {
             return static_cast<double>(f.piazza_answers);
         },
         false, false},
        {"pratio", [](const FeatureVector& f) { return f.pratio; }, false, false},
        {"wa_parts_submitted",
         [](const FeatureVector& f) -> std::optional<double> {
             if (!f.wa_parts_submitted) return std::nullopt;
             return static_cast<double>(*f.wa_parts_submitted);
         },
         true, false},
        {"wa_first_attempts",
         [](const FeatureVector& f) -> std::optional<double> {
             if (!f.wa_first_attempts) return std::nullopt;
             return static_cast<double>(*f.wa_first_attempts);
         },
         true, false},
        {"wa_multiple_attempts",
         [](const FeatureVector& f) -> std::optional<double> {
             if (!f.wa_multiple_attempts) return std::nullopt;
             return static_cast<double>(*f.wa_multiple_attempts);
         },
         true, false},
        {"test1_grade", [](const FeatureVector& f) { return f.test1_grade; }, false, true},
        {"test2_grade", [](const FeatureVector& f) { return f.test2_grade; }, false, true},
    };
    return schema;
}

// --- CSV serialization ---------------------------------------------------------

namespace detail {
inline std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}
}  // namespace detail

inline void write_features_csv(const std::filesystem::path& path,
                               const std::map<std::string, FeatureVector>& features,
                               bool homework_enabled) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    // Test-grade columns appear only when attached for this window.
    auto column_used = [&](const FeatureDef& def) {
        if (def.homework_only && !homework_enabled) return false;
        if (!def.test_grade) return true;
        for (const auto& [id, f] : features)
            if (def.get(f)) return true;
        return false;
    };
    std::vector<const FeatureDef*> columns;
    for (const auto& def : feature_schema())
        if (column_used(def)) columns.push_back(&def);

    std::vector<std::string> header = {"anon_id"};
    for (const auto* def : columns) header.emplace_back(def->name);
    out << csv_join(header) << '\n';
    for (const auto& [id, f] : features) {
        std::vector<std::string> row = {id};
        for (const auto* def : columns) {
            auto v = def->get(f);
            row.push_back(v ? detail::format_number(*v) : std::string());
        }
        out << csv_join(row) << '\n';
    }
}

/// Feature values as read back from a features CSV: per student, per feature
/// name; missing cells are absent from the inner map.
struct FeatureTable {
    std::vector<std::string> feature_names;
    std::map<std::string, std::map<std::string, double>> rows;
};

inline FeatureTable read_features_csv(const std::filesystem::path& path) {
    auto table = read_csv_file(path);
    if (table.header.empty() || table.header[0] != "anon_id")
        throw std::runtime_error(path.string() + ": not a features CSV");
    FeatureTable out;
    out.feature_names.assign(table.header.begin() + 1, table.header.end());
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size())
            throw std::runtime_error(path.string() + ": ragged row");
        auto& cells = out.rows[row[0]];
        for (std::size_t i = 1; i < row.size(); ++i)
            if (!row[i].empty()) cells[table.header[i]] = std::stod(row[i]);
    }
    return out;
}

// --- grades CSV -----------------------------------------------------------------

inline void write_grades_csv(const std::filesystem::path& path,
                             const std::vector<GradeRecord>& grades) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "anon_id,letter,final_score,test1_score,test2_score\n";
    auto cell = [](const std::optional<double>& v) {
        return v ? detail::format_number(*v) : std::string();
    };
    for (const auto& g : grades)
        out << csv_join({g.anon_id, g.letter, cell(g.final_score), cell(g.test1_score),
                         cell(g.test2_score)})
            << '\n';
}

inline std::vector<GradeRecord> read_grades_csv(const std::filesystem::path& path) {
    auto table = read_csv_file(path);
    int id_col = table.column("anon_id"), letter_col = table.column("letter");
    if (id_col < 0 || letter_col < 0)
        throw std::runtime_error(path.string() + ": grades CSV needs anon_id and letter columns");
    int final_col = table.column("final_score");
    int t1_col = table.column("test1_score");
    int t2_col = table.column("test2_score");
    std::vector<GradeRecord> grades;
    auto opt_cell = [&](const std::vector<std::string>& row, int col) -> std::optional<double> {
        if (col < 0 || static_cast<std::size_t>(col) >= row.size() || row[col].empty())
            return std::nullopt;
        return std::stod(row[col]);
    };
    for (const auto& row : table.rows) {
        GradeRecord g;
        g.anon_id = row.at(id_col);
        g.letter = row.at(letter_col);
        grade_ordinal(g.letter);  // validate
        g.final_score = opt_cell(row, final_col);
        g.test1_score = opt_cell(row, t1_col);
        g.test2_score = opt_cell(row, t2_col);
        grades.push_back(std::move(g));
    }
    return grades;
}

}  // namespace coursetrace
