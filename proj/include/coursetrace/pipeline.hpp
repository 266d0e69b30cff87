#pragma once

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "coursetrace/adapters.hpp"
#include "coursetrace/config.hpp"
#include "coursetrace/features.hpp"
#include "coursetrace/identity.hpp"
#include "coursetrace/ingest.hpp"
#include "coursetrace/models.hpp"
#include "coursetrace/session.hpp"
#include "coursetrace/stats.hpp"
#include "coursetrace/synth.hpp"
#include "coursetrace/timeline.hpp"
#include "coursetrace/util.hpp"
#include "coursetrace/version.hpp"

namespace coursetrace {

struct PipelineOptions {
    std::filesystem::path course_config;
    std::filesystem::path cohort_spec;  // synth mode
    std::filesystem::path raw_dir;      // ingest mode
    std::filesystem::path exclusions;   // ingest mode, optional
    std::filesystem::path grades;       // ingest mode
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;  // overrides the cohort spec seed
    SessionKind feature_kind = SessionKind::Study;
    int folds = 5;
    double alpha = 0.05;
    LogisticConfig logistic;
    TreeConfig tree;
    KnnConfig knn;
};

struct StageRecord {
    std::string name;
    double seconds = 0.0;
    std::map<std::string, std::string> outputs;  // file name -> digest
};

struct RunManifest {
    std::string tool_version = kVersion;
    std::uint64_t root_seed = 0;
    std::map<std::string, std::string> inputs;  // label -> digest
    std::vector<StageRecord> stages;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool_version"] = tool_version;
        j["root_seed"] = root_seed;
        j["inputs"] = inputs;
        auto& stages_json = j["stages"] = nlohmann::json::array();
        for (const auto& s : stages) {
            nlohmann::json sj;
            sj["name"] = s.name;
            sj["seconds"] = s.seconds;
            sj["outputs"] = s.outputs;
            stages_json.push_back(std::move(sj));
        }
        return j;
    }
};

/// Reads an exclusion list: one anon_id per line, '#' starts a comment.
inline std::set<std::string> read_exclusions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open exclusions file: " + path.string());
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        out.insert(std::string(t));
    }
    return out;
}

/// Ingests one raw-log directory: per-platform CSVs named lms.csv, forum.csv,
/// homework.csv, vcs.csv (for the platforms the course uses) plus roster.csv,
/// links.csv and staff.csv.
inline std::vector<Transaction> ingest_directory(const std::filesystem::path& dir,
                                                 const CourseConfig& config,
                                                 const std::set<std::string>& exclusions,
                                                 UnifyStats* stats = nullptr,
                                                 IdentityMap* map_out = nullptr,
                                                 std::vector<LineError>* errors_out = nullptr) {
    auto rosters = load_roster(dir / "roster.csv");
    std::vector<LinkPair> links;
    if (std::filesystem::exists(dir / "links.csv")) links = load_links(dir / "links.csv");
    std::set<NativeId> staff;
    if (std::filesystem::exists(dir / "staff.csv")) staff = load_staff(dir / "staff.csv");
    IdentityMap ids = build_identity_map(rosters, links, staff);

    std::vector<RawRecord> records;
    for (Platform p : config.platforms) {
        std::string name{to_string(p)};
        std::transform(name.begin(), name.end(), name.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        auto path = dir / (name + ".csv");
        if (!std::filesystem::exists(path)) continue;
        auto parsed = parse_platform_log(path, p, default_adapter(p));
        records.insert(records.end(), parsed.records.begin(), parsed.records.end());
        if (errors_out)
            errors_out->insert(errors_out->end(), parsed.errors.begin(), parsed.errors.end());
    }
    if (map_out) *map_out = ids;
    return unify(records, ids, config, exclusions, stats);
}

/// The feature-selection rule for models: behavior features significant in
/// this window, plus whatever test-grade columns the window carries. Falls
/// back to all columns when nothing is significant.
inline std::vector<std::string> select_features(const FeatureTable& table,
                                                const std::vector<FeatureStat>& stats,
                                                const std::string& window, double alpha) {
    std::set<std::string> significant;
    for (const auto& s : stats)
        if (s.window == window && s.kw_p && *s.kw_p < alpha) significant.insert(s.feature);
    std::vector<std::string> selected;
    for (const auto& name : table.feature_names) {
        const bool grade = name == "test1_grade" || name == "test2_grade";
        if (grade || significant.count(name)) selected.push_back(name);
    }
    bool any_behavior = false;
    for (const auto& name : selected)
        if (name != "test1_grade" && name != "test2_grade") any_behavior = true;
    if (!any_behavior) return table.feature_names;
    return selected;
}

inline RunManifest run_pipeline(const PipelineOptions& opt) {
    namespace fs = std::filesystem;
    RunManifest manifest;
    fs::create_directories(opt.out_dir);

    CourseConfig config = CourseConfig::load(opt.course_config);
    manifest.inputs["course_config"] = file_digest(opt.course_config);

    const bool synth_mode = !opt.cohort_spec.empty();
    CohortSpec cohort;
    if (synth_mode) {
        cohort = CohortSpec::load(opt.cohort_spec);
        manifest.inputs["cohort_spec"] = file_digest(opt.cohort_spec);
        if (opt.seed) cohort.seed = *opt.seed;
        manifest.root_seed = cohort.seed;
    } else {
        if (opt.raw_dir.empty()) throw std::runtime_error("need either a cohort spec or raw logs");
        manifest.root_seed = opt.seed.value_or(0);
    }
    // All downstream randomness (the CV shuffle) derives from the root seed.
    const std::uint64_t model_seed = manifest.root_seed;

    std::vector<Transaction> txns;
    std::vector<GradeRecord> grades;

    auto run_stage = [&](const std::string& name, auto&& body,
                         std::vector<fs::path> outputs) {
        StageRecord record;
        record.name = name;
        const auto start = std::chrono::steady_clock::now();
        try {
            body();
        } catch (const std::exception& e) {
            throw std::runtime_error("stage " + name + ": " + e.what());
        }
        record.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        for (const auto& p : outputs) record.outputs[p.filename().string()] = file_digest(p);
        manifest.stages.push_back(std::move(record));
    };

    const auto unified_path = opt.out_dir / "unified.log";
    const auto grades_path = opt.out_dir / "grades.csv";
    if (synth_mode) {
        run_stage(
            "synth",
            [&] {
                auto result = generate(cohort, config);
                txns = std::move(result.txns);
                grades = std::move(result.grades);
                write_unified_log(unified_path, txns);
                write_grades_csv(grades_path, grades);
            },
            {unified_path, grades_path});
    } else {
        run_stage(
            "ingest",
            [&] {
                std::set<std::string> exclusions;
                if (!opt.exclusions.empty()) exclusions = read_exclusions(opt.exclusions);
                txns = ingest_directory(opt.raw_dir, config, exclusions);
                grades = read_grades_csv(opt.grades);
                write_unified_log(unified_path, txns);
                write_grades_csv(grades_path, grades);
            },
            {unified_path, grades_path});
    }

    SessionLog sessions;
    const auto sessions_path = opt.out_dir / "sessions.log";
    run_stage(
        "sessionize",
        [&] {
            sessions.course_id = config.course_id;
            sessions.browser_cutoff_minutes = config.browser_cutoff_minutes;
            sessions.study_cutoff_minutes = config.study_cutoff_minutes;
            sessions.browser = sessionize_cutoff(txns, config.browser_cutoff_minutes,
                                                 SessionKind::Browser, config.course_id);
            sessions.study = sessionize_cutoff(txns, config.study_cutoff_minutes,
                                               SessionKind::Study, config.course_id);
            write_session_log(sessions_path, sessions);
        },
        {sessions_path});

    std::set<std::string> cohort_ids;
    for (const auto& g : grades) cohort_ids.insert(g.anon_id);

    std::vector<std::pair<std::string, FeatureTable>> tables;
    {
        std::vector<fs::path> outputs;
        for (const auto& w : window_labels()) outputs.push_back(opt.out_dir / ("features_" + w + ".csv"));
        run_stage(
            "features",
            [&] {
                const SessionSet& base =
                    opt.feature_kind == SessionKind::Browser ? sessions.browser : sessions.study;
                for (const auto& label : window_labels()) {
                    auto window = make_window(label, config);
                    auto features = compute_features(base, txns, window, cohort_ids, config);
                    attach_test_grades(features, grades, label != "pre_test1",
                                       label == "full_semester");
                    const auto path = opt.out_dir / ("features_" + label + ".csv");
                    write_features_csv(path, features,
                                       config.platforms.count(Platform::Homework) > 0);
                    tables.emplace_back(label, read_features_csv(path));
                }
            },
            outputs);
    }

    std::vector<FeatureStat> stats;
    const auto stats_path = opt.out_dir / "stats.csv";
    run_stage(
        "analyze",
        [&] {
            std::map<std::string, Group2> binary;
            std::map<std::string, int> ordinal;
            for (const auto& g : grades) {
                binary[g.anon_id] = binary_group(grade_group(g.letter));
                ordinal[g.anon_id] = grade_ordinal(g.letter);
            }
            stats = screen_features(tables, binary, ordinal);
            write_stats_csv(stats_path, stats);
        },
        {stats_path});

    const auto models_path = opt.out_dir / "models.csv";
    const auto details_path = opt.out_dir / "models_details.csv";
    run_stage(
        "train",
        [&] {
            std::map<std::string, Group2> binary;
            for (const auto& g : grades) binary[g.anon_id] = binary_group(grade_group(g.letter));
            ModelReport report;
            for (const auto& [window, table] : tables) {
                auto selected = select_features(table, stats, window, opt.alpha);
                Dataset data = build_dataset(table, binary, selected);
                for (ClassifierKind kind :
                     {ClassifierKind::DecisionTree, ClassifierKind::Knn,
                      ClassifierKind::LogisticRegression}) {
                    ClassifierSpec spec;
                    spec.kind = kind;
                    spec.logistic = opt.logistic;
                    spec.tree = opt.tree;
                    spec.knn = opt.knn;
                    report.cells[std::string(to_string(kind))][window] =
                        evaluate(data, spec, opt.folds, model_seed);
                }
            }
            write_model_report_csv(models_path, report, window_labels());
            write_model_details_csv(details_path, report);
        },
        {models_path, details_path});

    const auto timeline_path = opt.out_dir / "timeline.csv";
    const auto spikes_path = opt.out_dir / "spikes.csv";
    run_stage(
        "timeline",
        [&] {
            std::map<std::string, Group3> label3;
            for (const auto& g : grades) label3[g.anon_id] = grade_group(g.letter);
            // Ungraded students are outside the cohort; their sessions are dropped.
            SessionSet graded = sessions.browser;
            std::erase_if(graded.sessions,
                          [&](const Session& s) { return !label3.count(s.anon_id); });
            auto tl = build_series(graded, label3, config);
            write_timeline_csv(timeline_path, tl);
            std::map<Group3, std::vector<SpikeReport>> spikes;
            for (const auto& series : tl.series)
                spikes[series.group] = detect_spikes(series, tl.deadline_days);
            write_spikes_csv(spikes_path, spikes);
        },
        {timeline_path, spikes_path});

    std::ofstream mf(opt.out_dir / "manifest.json");
    if (!mf) throw std::runtime_error("cannot write manifest");
    mf << manifest.to_json().dump(2) << '\n';
    return manifest;
}

}  // namespace coursetrace
