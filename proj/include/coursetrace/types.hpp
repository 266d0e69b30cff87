#pragma once

#include <map>
#include <optional>
#include <string>

#include "coursetrace/platform.hpp"
#include "coursetrace/time.hpp"

namespace coursetrace {

/// Platform-specific key/value payload. Ordered map so that every
/// serialization of the same record is byte-identical.
using Attrs = std::map<std::string, std::string>;

/// One action as parsed from a platform log, before identity resolution.
struct RawRecord {
    Platform platform{};
    std::string native_user_id;
    Instant timestamp{};
    std::string action;
    Attrs attrs;
};

/// One anonymized student action in the unified log.
struct Transaction {
    std::string anon_id;
    Platform platform{};
    Instant timestamp{};
    std::string action;
    Attrs attrs;

    bool operator==(const Transaction&) const = default;
};

/// Final course outcome for one student. Test scores feed the model
/// feature sets for the windows that end after the respective test.
struct GradeRecord {
    std::string anon_id;
    std::string letter;
    std::optional<double> final_score;
    std::optional<double> test1_score;
    std::optional<double> test2_score;
};

}  // namespace coursetrace
