#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "coursetrace/csv.hpp"
#include "coursetrace/time.hpp"
#include "coursetrace/types.hpp"

namespace coursetrace {

struct LineError {
    std::size_t line_no;  // 1-based physical line in the input file
    std::string message;
};

struct ParseResult {
    std::vector<RawRecord> records;
    std::vector<LineError> errors;
};

namespace detail {

inline std::optional<long> parse_long(const std::string& s) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

struct Adapter {
    std::vector<std::string> header;
    // Fills action/attrs from the row; throws std::invalid_argument on bad fields.
    std::function<void(const std::vector<std::string>&, RawRecord&)> fill;
};

inline const std::map<std::pair<Platform, std::string>, Adapter>& adapter_registry() {
    static const std::map<std::pair<Platform, std::string>, Adapter> registry = [] {
        std::map<std::pair<Platform, std::string>, Adapter> r;
        r[{Platform::Lms, "lms_csv"}] = {
            {"user_id", "timestamp", "action"},
            [](const std::vector<std::string>& row, RawRecord& rec) { rec.action = row[2]; }};
        r[{Platform::Forum, "forum_csv"}] = {
            {"user_id", "timestamp", "action", "kind"},
            [](const std::vector<std::string>& row, RawRecord& rec) {
                rec.action = row[2];
                if (!row[3].empty()) {
                    if (row[3] != "question" && row[3] != "answer")
                        throw std::invalid_argument("kind must be question or answer");
                    rec.attrs["kind"] = row[3];
                }
            }};
        r[{Platform::Homework, "homework_csv"}] = {
            {"user_id", "timestamp", "action", "assignment_id", "question_id", "part_id",
             "attempt"},
            [](const std::vector<std::string>& row, RawRecord& rec) {
                rec.action = row[2];
                if (row[3].empty() || row[4].empty() || row[5].empty())
                    throw std::invalid_argument(
                        "homework records need assignment_id, question_id and part_id");
                rec.attrs["assignment_id"] = row[3];
                rec.attrs["question_id"] = row[4];
                rec.attrs["part_id"] = row[5];
                auto attempt = parse_long(row[6]);
                if (!attempt || *attempt < 1)
                    throw std::invalid_argument("attempt must be a positive integer");
                rec.attrs["attempt"] = row[6];
            }};
        r[{Platform::Vcs, "vcs_csv"}] = {
            {"user_id", "timestamp", "action", "lines_changed"},
            [](const std::vector<std::string>& row, RawRecord& rec) {
                rec.action = row[2];
                auto lines = parse_long(row[3]);
                if (!lines || *lines < 0)
                    throw std::invalid_argument("lines_changed must be a nonnegative integer");
                rec.attrs["lines_changed"] = row[3];
            }};
        return r;
    }();
    return registry;
}

}  // namespace detail

inline std::vector<std::string> adapter_names(Platform platform) {
    std::vector<std::string> names;
    for (const auto& [key, adapter] : detail::adapter_registry())
        if (key.first == platform) names.push_back(key.second);
    return names;
}

inline std::string default_adapter(Platform platform) {
    switch (platform) {
        case Platform::Lms: return "lms_csv";
        case Platform::Forum: return "forum_csv";
        case Platform::Homework: return "homework_csv";
        case Platform::Vcs: return "vcs_csv";
    }
    return {};
}

/// Parses one platform log file. Malformed lines are reported with their line
/// numbers instead of being dropped silently; when the malformed share of data
/// lines exceeds `max_error_ratio` the whole parse aborts.
inline ParseResult parse_platform_log(const std::filesystem::path& path, Platform platform,
                                      const std::string& format, double max_error_ratio = 0.01) {
    auto it = detail::adapter_registry().find({platform, format});
    if (it == detail::adapter_registry().end())
        throw std::invalid_argument("unknown adapter '" + format + "' for platform " +
                                    std::string(to_string(platform)));
    const detail::Adapter& adapter = it->second;

    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log file: " + path.string());

    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    std::size_t data_lines = 0;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
        if (!saw_header) {
            auto header = csv_split(line);
            if (header != adapter.header)
                throw std::runtime_error(path.string() + ": header does not match adapter '" +
                                         format + "'");
            saw_header = true;
            continue;
        }
        ++data_lines;
        try {
            auto row = csv_split(line);
            if (row.size() != adapter.header.size())
                throw std::invalid_argument("expected " + std::to_string(adapter.header.size()) +
                                            " fields, got " + std::to_string(row.size()));
            RawRecord rec;
            rec.platform = platform;
            rec.native_user_id = row[0];
            if (rec.native_user_id.empty()) throw std::invalid_argument("empty user_id");
            rec.timestamp = parse_iso8601(row[1]);
            adapter.fill(row, rec);
            result.records.push_back(std::move(rec));
        } catch (const std::invalid_argument& e) {
            result.errors.push_back({line_no, e.what()});
        }
    }

    if (data_lines > 0 &&
        static_cast<double>(result.errors.size()) / static_cast<double>(data_lines) >
            max_error_ratio)
        throw std::runtime_error(path.string() + ": " + std::to_string(result.errors.size()) +
                                 " of " + std::to_string(data_lines) +
                                 " lines malformed, above the abort threshold");
    return result;
}

}  // namespace coursetrace
