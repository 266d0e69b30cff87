#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "coursetrace/csv.hpp"
#include "coursetrace/platform.hpp"
#include "coursetrace/util.hpp"

namespace coursetrace {

using NativeId = std::pair<Platform, std::string>;

struct LinkPair {
    NativeId a;
    NativeId b;
};

/// Resolves platform-native ids to opaque anonymous ids. One person may own
/// several native ids (at most one per platform); they all share one anon_id.
struct IdentityMap {
    enum class Role { Student, Staff };
    struct Entry {
        std::string anon_id;
        Role role = Role::Student;
    };

    std::map<NativeId, Entry> entries;

    const Entry* find(Platform platform, const std::string& native_id) const {
        auto it = entries.find({platform, native_id});
        return it == entries.end() ? nullptr : &it->second;
    }

    std::set<std::string> student_ids() const {
        std::set<std::string> out;
        for (const auto& [native, e] : entries)
            if (e.role == Role::Student) out.insert(e.anon_id);
        return out;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << "platform,native_user_id,anon_id,role\n";
        for (const auto& [native, e] : entries)
            out << csv_join({std::string(to_string(native.first)), native.second, e.anon_id,
                             e.role == Role::Staff ? "staff" : "student"})
                << '\n';
    }

    static IdentityMap load(const std::filesystem::path& path) {
        auto table = read_csv_file(path);
        IdentityMap map;
        for (const auto& row : table.rows) {
            if (row.size() != 4) throw std::runtime_error("bad identity map row in " + path.string());
            map.entries[{require_platform(row[0]), row[1]}] = {
                row[2], row[3] == "staff" ? Role::Staff : Role::Student};
        }
        return map;
    }
};

namespace detail {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), std::size_t{0});
    }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }
    void unite(std::size_t a, std::size_t b) { parent_[find(a)] = find(b); }

private:
    std::vector<std::size_t> parent_;
};

inline std::string describe_members(const std::vector<NativeId>& members) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < members.size(); ++i) {
        if (i) ss << " - ";
        ss << to_string(members[i].first) << ":" << members[i].second;
    }
    return ss.str();
}

}  // namespace detail

/// Links native ids into persons (transitive closure over the link table) and
/// assigns each person an opaque anon_id. The id generation is deterministic
/// for a given input and guarantees that no native id occurs as a substring
/// of any anon_id.
inline IdentityMap build_identity_map(const std::map<Platform, std::vector<std::string>>& rosters,
                                      const std::vector<LinkPair>& links,
                                      const std::set<NativeId>& staff_ids) {
    std::vector<NativeId> nodes;
    for (const auto& [platform, ids] : rosters)
        for (const auto& id : ids) {
            if (id.empty()) throw std::invalid_argument("empty native id in roster");
            nodes.emplace_back(platform, id);
        }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());

    std::map<NativeId, std::size_t> index;
    for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i]] = i;

    detail::UnionFind uf(nodes.size());
    for (const auto& link : links) {
        auto ia = index.find(link.a);
        auto ib = index.find(link.b);
        if (ia == index.end() || ib == index.end())
            throw std::invalid_argument("link references id absent from rosters: " +
                                        detail::describe_members({link.a, link.b}));
        uf.unite(ia->second, ib->second);
    }

    std::map<std::size_t, std::vector<NativeId>> persons;
    for (std::size_t i = 0; i < nodes.size(); ++i) persons[uf.find(i)].push_back(nodes[i]);

    // Two native ids on one platform cannot belong to one person; a link
    // chain that forces this is contradictory.
    for (auto& [root, members] : persons) {
        std::sort(members.begin(), members.end());
        for (std::size_t i = 1; i < members.size(); ++i)
            if (members[i].first == members[i - 1].first)
                throw std::runtime_error("contradictory links merge two ids on one platform: " +
                                         detail::describe_members(members));
    }

    IdentityMap map;
    std::set<std::string> used;
    for (const auto& [root, members] : persons) {
        std::string basis;
        for (const auto& [platform, id] : members) {
            basis += to_string(platform);
            basis += ':';
            basis += id;
            basis += '\n';
        }
        std::string anon;
        bool ok = false;
        for (std::uint64_t salt = 0; salt < 10000 && !ok; ++salt) {
            anon = to_hex(fnv1a64(basis, 14695981039346656037ull + salt)).substr(0, 10);
            ok = !used.count(anon);
            for (const auto& n : nodes)
                if (ok && anon.find(n.second) != std::string::npos) ok = false;
        }
        if (!ok)
            throw std::runtime_error("cannot generate anon ids avoiding native-id substrings");
        used.insert(anon);

        bool staff = std::any_of(members.begin(), members.end(),
                                 [&](const NativeId& n) { return staff_ids.count(n) > 0; });
        for (const auto& member : members)
            map.entries[member] = {anon,
                                   staff ? IdentityMap::Role::Staff : IdentityMap::Role::Student};
    }
    return map;
}

// --- file loaders for the ingest CLI ---------------------------------------

/// roster.csv: platform,native_user_id
inline std::map<Platform, std::vector<std::string>> load_roster(const std::filesystem::path& path) {
    auto table = read_csv_file(path);
    std::map<Platform, std::vector<std::string>> rosters;
    for (const auto& row : table.rows) {
        if (row.size() != 2) throw std::runtime_error("bad roster row in " + path.string());
        rosters[require_platform(row[0])].push_back(row[1]);
    }
    return rosters;
}

/// links.csv: platform_a,native_a,platform_b,native_b
inline std::vector<LinkPair> load_links(const std::filesystem::path& path) {
    auto table = read_csv_file(path);
    std::vector<LinkPair> links;
    for (const auto& row : table.rows) {
        if (row.size() != 4) throw std::runtime_error("bad link row in " + path.string());
        links.push_back({{require_platform(row[0]), row[1]}, {require_platform(row[2]), row[3]}});
    }
    return links;
}

/// staff.csv: platform,native_user_id
inline std::set<NativeId> load_staff(const std::filesystem::path& path) {
    auto table = read_csv_file(path);
    std::set<NativeId> staff;
    for (const auto& row : table.rows) {
        if (row.size() != 2) throw std::runtime_error("bad staff row in " + path.string());
        staff.insert({require_platform(row[0]), row[1]});
    }
    return staff;
}

}  // namespace coursetrace
