#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace coursetrace {

/// The four platform roles a transaction can come from. The rank order
/// (LMS < FORUM < HOMEWORK < VCS) is the timestamp tie-break used when
/// merging logs, so it is part of the on-disk contract.
enum class Platform { Lms = 0, Forum = 1, Homework = 2, Vcs = 3 };

constexpr std::array<Platform, 4> kAllPlatforms = {Platform::Lms, Platform::Forum,
                                                   Platform::Homework, Platform::Vcs};

constexpr int platform_rank(Platform p) { return static_cast<int>(p); }

constexpr std::string_view to_string(Platform p) {
    switch (p) {
        case Platform::Lms: return "LMS";
        case Platform::Forum: return "FORUM";
        case Platform::Homework: return "HOMEWORK";
        case Platform::Vcs: return "VCS";
    }
    return "?";
}

inline std::optional<Platform> platform_from(std::string_view name) {
    for (Platform p : kAllPlatforms)
        if (name == to_string(p)) return p;
    return std::nullopt;
}

inline Platform require_platform(std::string_view name) {
    auto p = platform_from(name);
    if (!p) throw std::invalid_argument("unknown platform: " + std::string(name));
    return *p;
}

}  // namespace coursetrace
