#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "coursetrace/platform.hpp"
#include "coursetrace/time.hpp"
#include "coursetrace/util.hpp"

namespace coursetrace {

struct Deadline {
    std::string label;
    Instant at{};
};

/// Per-course settings: which platforms are in play, the calendar, and the
/// two session cutoffs.
struct CourseConfig {
    std::string course_id;
    std::set<Platform> platforms;
    std::vector<Deadline> deadlines;
    std::vector<Instant> test_dates;
    int browser_cutoff_minutes = 15;
    int study_cutoff_minutes = 40;
    Instant semester_start{};
    Instant semester_end{};

    void validate() const {
        if (course_id.empty()) throw std::invalid_argument("course_id must be nonempty");
        if (platforms.empty()) throw std::invalid_argument("course needs at least one platform");
        if (browser_cutoff_minutes <= 0 || study_cutoff_minutes <= 0)
            throw std::invalid_argument("cutoffs must be positive");
        if (browser_cutoff_minutes >= study_cutoff_minutes)
            throw std::invalid_argument("browser cutoff must be below study cutoff");
        if (semester_start >= semester_end)
            throw std::invalid_argument("semester_start must precede semester_end");
        if (test_dates.size() < 2)
            throw std::invalid_argument("need at least two test dates for window analysis");
        for (std::size_t i = 0; i < test_dates.size(); ++i) {
            if (i > 0 && test_dates[i] <= test_dates[i - 1])
                throw std::invalid_argument("test dates must be strictly increasing");
            if (test_dates[i] <= semester_start || test_dates[i] >= semester_end)
                throw std::invalid_argument("test dates must lie inside the semester");
        }
        for (const auto& d : deadlines)
            if (d.at < semester_start || d.at > semester_end)
                throw std::invalid_argument("deadline '" + d.label + "' outside the semester");
    }

    static CourseConfig from_json(const nlohmann::json& j) {
        CourseConfig c;
        c.course_id = j.at("course_id").get<std::string>();
        for (const auto& p : j.at("platforms"))
            c.platforms.insert(require_platform(p.get<std::string>()));
        c.semester_start = parse_iso8601(j.at("semester_start").get<std::string>());
        c.semester_end = parse_iso8601(j.at("semester_end").get<std::string>());
        if (j.contains("deadlines"))
            for (const auto& d : j.at("deadlines"))
                c.deadlines.push_back(
                    {d.at("label").get<std::string>(), parse_iso8601(d.at("at").get<std::string>())});
        for (const auto& t : j.at("test_dates"))
            c.test_dates.push_back(parse_iso8601(t.get<std::string>()));
        c.browser_cutoff_minutes = j.value("browser_cutoff_minutes", 15);
        c.study_cutoff_minutes = j.value("study_cutoff_minutes", 40);
        c.validate();
        return c;
    }

    static CourseConfig load(const std::filesystem::path& path) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(path));
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("cannot parse course config " + path.string() + ": " + e.what());
        }
        try {
            return from_json(j);
        } catch (const std::exception& e) {
            throw std::runtime_error("invalid course config " + path.string() + ": " + e.what());
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["course_id"] = course_id;
        auto& ps = j["platforms"] = nlohmann::json::array();
        for (Platform p : platforms) ps.push_back(std::string(to_string(p)));
        j["semester_start"] = format_iso8601(semester_start);
        j["semester_end"] = format_iso8601(semester_end);
        auto& ds = j["deadlines"] = nlohmann::json::array();
        for (const auto& d : deadlines) ds.push_back({{"label", d.label}, {"at", format_iso8601(d.at)}});
        auto& ts = j["test_dates"] = nlohmann::json::array();
        for (Instant t : test_dates) ts.push_back(format_iso8601(t));
        j["browser_cutoff_minutes"] = browser_cutoff_minutes;
        j["study_cutoff_minutes"] = study_cutoff_minutes;
        return j;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << to_json().dump(2) << '\n';
    }
};

}  // namespace coursetrace
