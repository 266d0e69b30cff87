#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coursetrace/time.hpp"
#include "coursetrace/types.hpp"

namespace coursetrace {

enum class SessionKind { Browser, Study, Fixed };

inline std::string_view to_string(SessionKind k) {
    switch (k) {
        case SessionKind::Browser: return "browser";
        case SessionKind::Study: return "study";
        case SessionKind::Fixed: return "fixed";
    }
    return "?";
}

inline SessionKind session_kind_from(std::string_view s) {
    if (s == "browser") return SessionKind::Browser;
    if (s == "study") return SessionKind::Study;
    if (s == "fixed") return SessionKind::Fixed;
    throw std::invalid_argument("unknown session kind: " + std::string(s));
}

enum class Homogeneity { Homogeneous, Heterogeneous };

/// A maximal run of one student's transactions whose consecutive gaps stay
/// within the cutoff that produced it. Transactions are referenced by index
/// into the unified log they were built from.
struct Session {
    std::string anon_id;
    SessionKind kind = SessionKind::Browser;
    std::vector<std::size_t> txn_indices;
    Instant start{};
    Instant end{};
    std::set<Platform> platforms;

    double duration_minutes() const { return minutes_between(start, end); }
    std::size_t action_count() const { return txn_indices.size(); }
};

/// Heterogeneous iff the session touches two or more platforms; the order of
/// platform switches inside the session is irrelevant.
inline Homogeneity classify_homogeneity(const Session& s) {
    return s.platforms.size() >= 2 ? Homogeneity::Heterogeneous : Homogeneity::Homogeneous;
}

struct SessionSet {
    std::string course_id;
    SessionKind kind = SessionKind::Browser;
    double cutoff_minutes = 0;  // bucket length in minutes for Fixed sets
    std::vector<Session> sessions;
};

namespace detail {

inline void require_time_ordered(const std::vector<Transaction>& txns) {
    for (std::size_t i = 1; i < txns.size(); ++i)
        if (txns[i].timestamp < txns[i - 1].timestamp)
            throw std::invalid_argument("transactions must be time-ordered");
}

inline std::map<std::string, std::vector<std::size_t>> indices_by_student(
    const std::vector<Transaction>& txns) {
    std::map<std::string, std::vector<std::size_t>> per_student;
    for (std::size_t i = 0; i < txns.size(); ++i) per_student[txns[i].anon_id].push_back(i);
    return per_student;
}

inline Session make_session(const std::vector<Transaction>& txns, SessionKind kind,
                            std::vector<std::size_t> indices) {
    Session s;
    s.anon_id = txns[indices.front()].anon_id;
    s.kind = kind;
    s.start = txns[indices.front()].timestamp;
    s.end = txns[indices.back()].timestamp;
    for (std::size_t i : indices) s.platforms.insert(txns[i].platform);
    s.txn_indices = std::move(indices);
    return s;
}

}  // namespace detail

/// Splits each student's stream at gaps strictly greater than the cutoff.
/// A gap exactly equal to the cutoff keeps the run together. Gaps are
/// measured between consecutive transaction instants of the same student.
inline SessionSet sessionize_cutoff(const std::vector<Transaction>& txns, double cutoff_minutes,
                                    SessionKind kind, std::string course_id = "") {
    if (!(cutoff_minutes > 0)) throw std::invalid_argument("cutoff must be positive");
    detail::require_time_ordered(txns);

    SessionSet set;
    set.course_id = std::move(course_id);
    set.kind = kind;
    set.cutoff_minutes = cutoff_minutes;
    for (const auto& [student, indices] : detail::indices_by_student(txns)) {
        std::vector<std::size_t> run;
        for (std::size_t i : indices) {
            if (!run.empty() &&
                minutes_between(txns[run.back()].timestamp, txns[i].timestamp) > cutoff_minutes) {
                set.sessions.push_back(detail::make_session(txns, kind, std::move(run)));
                run.clear();
            }
            run.push_back(i);
        }
        if (!run.empty()) set.sessions.push_back(detail::make_session(txns, kind, std::move(run)));
    }
    return set;
}

/// Buckets transactions into aligned calendar windows of `unit_seconds`
/// starting at `align_start`. Empty buckets are omitted.
inline SessionSet sessionize_fixed(const std::vector<Transaction>& txns, std::int64_t unit_seconds,
                                   Instant align_start, std::string course_id = "") {
    if (unit_seconds <= 0) throw std::invalid_argument("unit must be positive");
    detail::require_time_ordered(txns);

    SessionSet set;
    set.course_id = std::move(course_id);
    set.kind = SessionKind::Fixed;
    set.cutoff_minutes = static_cast<double>(unit_seconds) / 60.0;
    for (const auto& [student, indices] : detail::indices_by_student(txns)) {
        std::vector<std::size_t> run;
        std::int64_t current_bucket = 0;
        for (std::size_t i : indices) {
            std::int64_t diff = txns[i].timestamp - align_start;
            std::int64_t bucket =
                diff >= 0 ? diff / unit_seconds : -((-diff + unit_seconds - 1) / unit_seconds);
            if (!run.empty() && bucket != current_bucket) {
                set.sessions.push_back(
                    detail::make_session(txns, SessionKind::Fixed, std::move(run)));
                run.clear();
            }
            current_bucket = bucket;
            run.push_back(i);
        }
        if (!run.empty())
            set.sessions.push_back(detail::make_session(txns, SessionKind::Fixed, std::move(run)));
    }
    return set;
}

/// Number of sessions whose transaction lists are exactly equal across the
/// two sets, i.e. runs that are a session under both cutoffs at once.
inline std::size_t session_overlap(const SessionSet& browser, const SessionSet& study) {
    if (!browser.course_id.empty() && !study.course_id.empty() &&
        browser.course_id != study.course_id)
        throw std::invalid_argument("session sets come from different courses");
    std::set<std::vector<std::size_t>> browser_runs;
    for (const auto& s : browser.sessions) browser_runs.insert(s.txn_indices);
    std::size_t overlap = 0;
    for (const auto& s : study.sessions)
        if (browser_runs.count(s.txn_indices)) ++overlap;
    return overlap;
}

struct SessionKindSummary {
    std::size_t count = 0;
    std::optional<double> mean_duration_minutes;
    std::size_t homogeneous = 0;
    std::size_t heterogeneous = 0;
};

inline SessionKindSummary summarize_session_set(const SessionSet& set) {
    SessionKindSummary s;
    s.count = set.sessions.size();
    double total = 0.0;
    for (const auto& sess : set.sessions) {
        total += sess.duration_minutes();
        if (classify_homogeneity(sess) == Homogeneity::Homogeneous)
            ++s.homogeneous;
        else
            ++s.heterogeneous;
    }
    if (s.count > 0) s.mean_duration_minutes = total / static_cast<double>(s.count);
    return s;
}

inline std::map<SessionKind, SessionKindSummary> summarize_sessions(const SessionSet& browser,
                                                                    const SessionSet& study) {
    return {{SessionKind::Browser, summarize_session_set(browser)},
            {SessionKind::Study, summarize_session_set(study)}};
}

// --- session log serialization ----------------------------------------------

struct SessionLog {
    std::string course_id;
    double browser_cutoff_minutes = 15;
    double study_cutoff_minutes = 40;
    std::optional<double> fixed_unit_minutes;  // set when fixed-duration sessions are included
    SessionSet browser;
    SessionSet study;
    SessionSet fixed;
};

inline nlohmann::json session_to_json(const Session& s) {
    nlohmann::json j;
    j["id"] = s.anon_id;
    j["kind"] = std::string(to_string(s.kind));
    j["start"] = format_iso8601(s.start);
    j["end"] = format_iso8601(s.end);
    j["actions"] = s.txn_indices.size();
    auto& ps = j["platforms"] = nlohmann::json::array();
    for (Platform p : s.platforms) ps.push_back(std::string(to_string(p)));
    j["homogeneity"] = classify_homogeneity(s) == Homogeneity::Homogeneous ? "homogeneous"
                                                                           : "heterogeneous";
    j["txn"] = s.txn_indices;
    return j;
}

inline Session session_from_json(const nlohmann::json& j) {
    Session s;
    s.anon_id = j.at("id").get<std::string>();
    s.kind = session_kind_from(j.at("kind").get<std::string>());
    s.start = parse_iso8601(j.at("start").get<std::string>());
    s.end = parse_iso8601(j.at("end").get<std::string>());
    for (const auto& p : j.at("platforms")) s.platforms.insert(require_platform(p.get<std::string>()));
    s.txn_indices = j.at("txn").get<std::vector<std::size_t>>();
    if (s.txn_indices.empty()) throw std::invalid_argument("session without transactions");
    return s;
}

inline void write_session_log(const std::filesystem::path& path, const SessionLog& log) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    nlohmann::json meta;
    meta["meta"] = {{"course_id", log.course_id},
                    {"browser_cutoff_minutes", log.browser_cutoff_minutes},
                    {"study_cutoff_minutes", log.study_cutoff_minutes}};
    out << meta.dump() << '\n';
    for (const auto& s : log.browser.sessions) out << session_to_json(s).dump() << '\n';
    for (const auto& s : log.study.sessions) out << session_to_json(s).dump() << '\n';
}

inline SessionLog read_session_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open session log: " + path.string());
    SessionLog log;
    std::string line;
    std::size_t line_no = 0;
    bool saw_meta = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            auto j = nlohmann::json::parse(line);
            if (!saw_meta) {
                const auto& meta = j.at("meta");
                log.course_id = meta.at("course_id").get<std::string>();
                log.browser_cutoff_minutes = meta.at("browser_cutoff_minutes").get<double>();
                log.study_cutoff_minutes = meta.at("study_cutoff_minutes").get<double>();
                saw_meta = true;
                continue;
            }
            Session s = session_from_json(j);
            if (s.kind == SessionKind::Browser)
                log.browser.sessions.push_back(std::move(s));
            else if (s.kind == SessionKind::Study)
                log.study.sessions.push_back(std::move(s));
            else
                throw std::invalid_argument("fixed-duration sessions do not belong in a session log");
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": " +
                                     e.what());
        }
    }
    log.browser.course_id = log.course_id;
    log.browser.kind = SessionKind::Browser;
    log.browser.cutoff_minutes = log.browser_cutoff_minutes;
    log.study.course_id = log.course_id;
    log.study.kind = SessionKind::Study;
    log.study.cutoff_minutes = log.study_cutoff_minutes;
    return log;
}

}  // namespace coursetrace
