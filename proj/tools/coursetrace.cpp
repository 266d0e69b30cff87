// Command-line front end for the course-log analytics toolkit. Subcommands
// mirror the pipeline stages; `pipeline` runs them all from one config.

#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "coursetrace/adapters.hpp"
#include "coursetrace/config.hpp"
#include "coursetrace/features.hpp"
#include "coursetrace/identity.hpp"
#include "coursetrace/ingest.hpp"
#include "coursetrace/models.hpp"
#include "coursetrace/pipeline.hpp"
#include "coursetrace/session.hpp"
#include "coursetrace/stats.hpp"
#include "coursetrace/synth.hpp"
#include "coursetrace/timeline.hpp"
#include "coursetrace/version.hpp"

namespace {

using namespace coursetrace;

std::string normalize_window(std::string w) {
    if (w == "full") return "full_semester";
    return w;
}

void print_action_summary(const std::map<Platform, PlatformSummary>& summary) {
    std::printf("%-10s %10s %18s %10s\n", "platform", "total", "avg/active-student", "stddev");
    for (const auto& [platform, s] : summary) {
        if (s.mean_per_active_student)
            std::printf("%-10s %10zu %18.2f %10.2f\n", std::string(to_string(platform)).c_str(),
                        s.total, *s.mean_per_active_student, *s.stddev);
        else
            std::printf("%-10s %10zu %18s %10s\n", std::string(to_string(platform)).c_str(),
                        s.total, "-", "-");
    }
}

int cmd_ingest(const std::string& course, const std::string& in_dir, const std::string& out,
               const std::string& exclusions_path, const std::string& map_out,
               const std::string& summary_out) {
    auto config = CourseConfig::load(course);
    std::set<std::string> exclusions;
    if (!exclusions_path.empty()) exclusions = read_exclusions(exclusions_path);
    UnifyStats stats;
    IdentityMap map;
    std::vector<LineError> line_errors;
    auto txns = ingest_directory(in_dir, config, exclusions, &stats, &map, &line_errors);
    write_unified_log(out, txns);
    if (!map_out.empty()) map.save(map_out);

    for (const auto& e : line_errors)
        std::fprintf(stderr, "warning: line %zu: %s\n", e.line_no, e.message.c_str());
    std::fprintf(stderr,
                 "ingest: %zu records in, %zu kept, %zu staff, %zu excluded, %zu outside "
                 "semester, %zu unmapped\n",
                 stats.input, stats.kept, stats.staff_removed, stats.excluded_removed,
                 stats.out_of_window, stats.unmapped);

    auto summary = summarize_actions(txns, config.platforms);
    print_action_summary(summary);
    if (!summary_out.empty()) {
        std::ofstream f(summary_out);
        f << "platform,total,avg_per_active_student,stddev\n";
        for (const auto& [platform, s] : summary) {
            f << to_string(platform) << ',' << s.total << ',';
            if (s.mean_per_active_student)
                f << detail::format_number(*s.mean_per_active_student) << ','
                  << detail::format_number(*s.stddev);
            else
                f << ',';
            f << '\n';
        }
    }
    return 0;
}

int cmd_sessionize(const std::string& in, const std::string& course, double cutoff_browser,
                   double cutoff_study, const std::string& out) {
    if (cutoff_browser >= cutoff_study)
        throw std::invalid_argument("browser cutoff must be below study cutoff");
    auto txns = read_unified_log(in);
    std::string course_id;
    if (!course.empty()) course_id = CourseConfig::load(course).course_id;
    SessionLog log;
    log.course_id = course_id;
    log.browser_cutoff_minutes = cutoff_browser;
    log.study_cutoff_minutes = cutoff_study;
    log.browser = sessionize_cutoff(txns, cutoff_browser, SessionKind::Browser, course_id);
    log.study = sessionize_cutoff(txns, cutoff_study, SessionKind::Study, course_id);
    write_session_log(out, log);

    auto summary = summarize_sessions(log.browser, log.study);
    for (const auto& [kind, s] : summary)
        std::fprintf(stderr, "%s: %zu sessions, mean duration %.2f min, %zu homogeneous, %zu heterogeneous\n",
                     std::string(to_string(kind)).c_str(), s.count,
                     s.mean_duration_minutes.value_or(0.0), s.homogeneous, s.heterogeneous);
    std::fprintf(stderr, "overlap (sessions identical under both cutoffs): %zu\n",
                 session_overlap(log.browser, log.study));
    return 0;
}

int cmd_features(const std::string& sessions_path, const std::string& log_path,
                 const std::string& course, const std::string& grades_path, std::string window,
                 const std::string& kind, const std::string& out) {
    auto config = CourseConfig::load(course);
    auto txns = read_unified_log(log_path);
    auto sessions = read_session_log(sessions_path);
    auto grades = read_grades_csv(grades_path);
    window = normalize_window(window);

    std::set<std::string> cohort;
    for (const auto& g : grades) cohort.insert(g.anon_id);

    const SessionSet& base = kind == "browser" ? sessions.browser : sessions.study;
    auto features = compute_features(base, txns, make_window(window, config), cohort, config);
    attach_test_grades(features, grades, window != "pre_test1", window == "full_semester");
    write_features_csv(out, features, config.platforms.count(Platform::Homework) > 0);
    std::fprintf(stderr, "features: %zu students, window %s, %s sessions\n", features.size(),
                 window.c_str(), kind.c_str());
    return 0;
}

int cmd_analyze(const std::string& features_arg, const std::string& grades_path,
                const std::string& out) {
    std::vector<std::pair<std::string, FeatureTable>> tables;
    auto pos = features_arg.find("{w}");
    if (pos != std::string::npos) {
        for (const auto& w : window_labels()) {
            std::string path = features_arg;
            path.replace(pos, 3, w);
            tables.emplace_back(w, read_features_csv(path));
        }
    } else {
        // Single table; recover the window label from the file name if present.
        std::string label = "window";
        auto name = std::filesystem::path(features_arg).stem().string();
        for (const auto& w : window_labels())
            if (name.find(w) != std::string::npos) label = w;
        tables.emplace_back(label, read_features_csv(features_arg));
    }
    auto grades = read_grades_csv(grades_path);
    std::map<std::string, Group2> binary;
    std::map<std::string, int> ordinal;
    for (const auto& g : grades) {
        binary[g.anon_id] = binary_group(grade_group(g.letter));
        ordinal[g.anon_id] = grade_ordinal(g.letter);
    }
    auto stats = screen_features(tables, binary, ordinal);
    write_stats_csv(out, stats);
    std::size_t significant = 0;
    for (const auto& s : stats)
        if (s.kw_p && *s.kw_p < 0.05) ++significant;
    std::fprintf(stderr, "analyze: %zu feature/window cells, %zu significant at 0.05\n",
                 stats.size(), significant);
    return 0;
}

int cmd_train(const std::string& features_path, const std::string& grades_path,
              std::string window, const std::vector<std::string>& model_names,
              std::uint64_t seed, int folds, const std::string& select_path, double alpha,
              const LogisticConfig& logistic, const TreeConfig& tree, const KnnConfig& knn,
              const std::string& out, const std::string& details_out) {
    window = normalize_window(window);
    auto table = read_features_csv(features_path);
    auto grades = read_grades_csv(grades_path);
    std::map<std::string, Group2> binary;
    for (const auto& g : grades) binary[g.anon_id] = binary_group(grade_group(g.letter));

    std::vector<std::string> selected = table.feature_names;
    if (!select_path.empty())
        selected = select_features(table, read_stats_csv(select_path), window, alpha);
    Dataset data = build_dataset(table, binary, selected);
    std::fprintf(stderr, "train: %zu rows, %zu features, %zu imputed cells\n", data.size(),
                 data.feature_names.size(), data.imputed_cells);

    ModelReport report;
    for (const auto& name : model_names) {
        ClassifierSpec spec;
        spec.kind = classifier_from(name);
        spec.logistic = logistic;
        spec.tree = tree;
        spec.knn = knn;
        auto eval = evaluate(data, spec, folds, seed);
        report.cells[std::string(to_string(spec.kind))][window] = eval;
        std::fprintf(stderr, "  %-20s F1 %.4f (precision %.4f, recall %.4f, %d folds)\n",
                     std::string(to_string(spec.kind)).c_str(), eval.f1, eval.precision,
                     eval.recall, eval.folds);
    }
    write_model_report_csv(out, report, {window});
    if (!details_out.empty()) write_model_details_csv(details_out, report);
    return 0;
}

int cmd_timeline(const std::string& sessions_path, const std::string& grades_path,
                 const std::string& course, const std::string& out, const std::string& spikes_out,
                 int pre_window_days) {
    auto config = CourseConfig::load(course);
    auto sessions = read_session_log(sessions_path);
    auto grades = read_grades_csv(grades_path);
    std::map<std::string, Group3> labels;
    for (const auto& g : grades) labels[g.anon_id] = grade_group(g.letter);
    SessionSet graded = sessions.browser;
    std::erase_if(graded.sessions, [&](const Session& s) { return !labels.count(s.anon_id); });

    auto tl = build_series(graded, labels, config);
    write_timeline_csv(out, tl);
    if (!spikes_out.empty()) {
        std::map<Group3, std::vector<SpikeReport>> spikes;
        for (const auto& series : tl.series)
            spikes[series.group] = detect_spikes(series, tl.deadline_days, pre_window_days);
        write_spikes_csv(spikes_out, spikes);
    }
    return 0;
}

int cmd_synth(const std::string& spec_path, const std::string& course,
              std::optional<std::uint64_t> seed, const std::string& out,
              const std::string& grades_out) {
    auto config = CourseConfig::load(course);
    auto spec = CohortSpec::load(spec_path);
    if (seed) spec.seed = *seed;
    auto result = generate(spec, config);
    write_unified_log(out, result.txns);
    write_grades_csv(grades_out, result.grades);
    std::fprintf(stderr, "synth: %zu transactions, %zu students, seed %llu\n", result.txns.size(),
                 result.grades.size(), static_cast<unsigned long long>(spec.seed));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unified course-log analytics: sessionization, study-habit features and "
                 "performance prediction"};
    app.set_version_flag("--version", coursetrace::kVersion);
    app.require_subcommand(1);

    // ingest
    std::string in_course, in_dir, in_out = "unified.log", in_exclusions, in_map_out, in_summary;
    auto* ingest_cmd = app.add_subcommand("ingest", "Parse raw platform logs into a unified log");
    ingest_cmd->add_option("--course", in_course, "course config (JSON)")->required();
    ingest_cmd->add_option("--in", in_dir, "directory with per-platform CSVs + roster/links/staff")
        ->required();
    ingest_cmd->add_option("--out", in_out, "unified log output");
    ingest_cmd->add_option("--exclusions", in_exclusions, "file with one anon_id per line");
    ingest_cmd->add_option("--map-out", in_map_out, "write the identity map CSV here");
    ingest_cmd->add_option("--summary", in_summary, "write the per-platform action summary CSV");

    // sessionize
    std::string se_in, se_course, se_out = "sessions.log";
    double se_browser = 15, se_study = 40;
    auto* sess_cmd = app.add_subcommand("sessionize", "Group transactions into sessions");
    sess_cmd->add_option("--in", se_in, "unified log")->required();
    sess_cmd->add_option("--course", se_course, "course config (stamps the course id)");
    sess_cmd->add_option("--cutoff-browser", se_browser, "browser cutoff in minutes");
    sess_cmd->add_option("--cutoff-study", se_study, "study cutoff in minutes");
    sess_cmd->add_option("--out", se_out, "session log output");

    // features
    std::string fe_sessions, fe_log, fe_course, fe_grades, fe_window, fe_kind = "study",
                fe_out = "features.csv";
    auto* feat_cmd = app.add_subcommand("features", "Per-student feature vectors over a window");
    feat_cmd->add_option("--sessions", fe_sessions, "session log")->required();
    feat_cmd->add_option("--log", fe_log, "unified log the sessions reference")->required();
    feat_cmd->add_option("--course", fe_course, "course config")->required();
    feat_cmd->add_option("--grades", fe_grades, "grades CSV (defines the cohort)")->required();
    feat_cmd->add_option("--window", fe_window, "pre_test1|pre_test2|full_semester|full")
        ->required();
    feat_cmd->add_option("--kind", fe_kind, "study|browser")
        ->check(CLI::IsMember({"study", "browser"}));
    feat_cmd->add_option("--out", fe_out, "features CSV output");

    // analyze
    std::string an_features, an_grades, an_out = "stats.csv";
    auto* an_cmd =
        app.add_subcommand("analyze", "Screen features against outcomes (rank tests)");
    an_cmd->add_option("--features", an_features,
                       "features CSV; use {w} to expand the three windows")
        ->required();
    an_cmd->add_option("--grades", an_grades, "grades CSV")->required();
    an_cmd->add_option("--out", an_out, "stats CSV output");

    // train
    std::string tr_features, tr_grades, tr_window, tr_select, tr_out = "report.csv", tr_details;
    std::vector<std::string> tr_models = {"tree", "knn", "logreg"};
    std::uint64_t tr_seed = 7;
    int tr_folds = 5;
    double tr_alpha = 0.05;
    coursetrace::LogisticConfig tr_logistic;
    coursetrace::TreeConfig tr_tree;
    coursetrace::KnnConfig tr_knn;
    auto* tr_cmd = app.add_subcommand("train", "Cross-validated Distinction classifiers");
    tr_cmd->add_option("--features", tr_features, "features CSV for one window")->required();
    tr_cmd->add_option("--grades", tr_grades, "grades CSV")->required();
    tr_cmd->add_option("--window", tr_window, "window label for the report")->required();
    tr_cmd->add_option("--model", tr_models, "logreg|tree|knn (repeatable; default all)");
    tr_cmd->add_option("--seed", tr_seed, "CV shuffle seed");
    tr_cmd->add_option("--folds", tr_folds, "fold count");
    tr_cmd->add_option("--select", tr_select, "stats CSV to restrict to significant features");
    tr_cmd->add_option("--alpha", tr_alpha, "significance level for --select");
    tr_cmd->add_option("--l2", tr_logistic.l2, "logistic L2 strength");
    tr_cmd->add_option("--step", tr_logistic.step, "logistic gradient step");
    tr_cmd->add_option("--max-iter", tr_logistic.max_iter, "logistic iteration cap");
    tr_cmd->add_option("--max-depth", tr_tree.max_depth, "tree depth cap");
    tr_cmd->add_option("--min-leaf", tr_tree.min_leaf, "tree minimum leaf size");
    tr_cmd->add_option("--k", tr_knn.k, "neighbor count");
    tr_cmd->add_option("--out", tr_out, "report CSV output");
    tr_cmd->add_option("--details", tr_details, "per-fold details CSV");

    // timeline
    std::string tl_sessions, tl_grades, tl_course, tl_out = "timeline.csv", tl_spikes;
    int tl_pre_days = 3;
    auto* tl_cmd = app.add_subcommand("timeline", "Daily session counts by performance group");
    tl_cmd->add_option("--sessions", tl_sessions, "session log")->required();
    tl_cmd->add_option("--grades", tl_grades, "grades CSV")->required();
    tl_cmd->add_option("--course", tl_course, "course config")->required();
    tl_cmd->add_option("--out", tl_out, "timeline CSV output");
    tl_cmd->add_option("--spikes", tl_spikes, "per-deadline spike report CSV");
    tl_cmd->add_option("--pre-window-days", tl_pre_days, "days before a deadline that count as its run-up");

    // synth
    std::string sy_spec, sy_course, sy_out = "unified.log", sy_grades = "grades.csv";
    std::optional<std::uint64_t> sy_seed;
    auto* sy_cmd = app.add_subcommand("synth", "Generate a synthetic cohort");
    sy_cmd->add_option("--spec", sy_spec, "cohort spec (JSON)")->required();
    sy_cmd->add_option("--course", sy_course, "course config")->required();
    sy_cmd->add_option("--seed", sy_seed, "override the spec seed");
    sy_cmd->add_option("--out", sy_out, "unified log output");
    sy_cmd->add_option("--grades", sy_grades, "grades CSV output");

    // pipeline
    coursetrace::PipelineOptions pl;
    std::string pl_kind = "study";
    std::optional<std::uint64_t> pl_seed;
    auto* pl_cmd = app.add_subcommand("pipeline", "Run every stage from one config");
    pl_cmd->add_option("--course", pl.course_config, "course config")->required();
    pl_cmd->add_option("--spec", pl.cohort_spec, "cohort spec (synthetic mode)");
    pl_cmd->add_option("--raw", pl.raw_dir, "raw log directory (ingest mode)");
    pl_cmd->add_option("--grades", pl.grades, "grades CSV (ingest mode)");
    pl_cmd->add_option("--exclusions", pl.exclusions, "exclusion list (ingest mode)");
    pl_cmd->add_option("--out-dir", pl.out_dir, "output directory")->required();
    pl_cmd->add_option("--seed", pl_seed, "root seed (overrides the spec)");
    pl_cmd->add_option("--kind", pl_kind, "session kind for features: study|browser")
        ->check(CLI::IsMember({"study", "browser"}));
    pl_cmd->add_option("--folds", pl.folds, "CV fold count");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest_cmd)
            return cmd_ingest(in_course, in_dir, in_out, in_exclusions, in_map_out, in_summary);
        if (*sess_cmd) return cmd_sessionize(se_in, se_course, se_browser, se_study, se_out);
        if (*feat_cmd)
            return cmd_features(fe_sessions, fe_log, fe_course, fe_grades, fe_window, fe_kind,
                                fe_out);
        if (*an_cmd) return cmd_analyze(an_features, an_grades, an_out);
        if (*tr_cmd)
            return cmd_train(tr_features, tr_grades, tr_window, tr_models, tr_seed, tr_folds,
                             tr_select, tr_alpha, tr_logistic, tr_tree, tr_knn, tr_out,
                             tr_details);
        if (*tl_cmd)
            return cmd_timeline(tl_sessions, tl_grades, tl_course, tl_out, tl_spikes, tl_pre_days);
        if (*sy_cmd) return cmd_synth(sy_spec, sy_course, sy_seed, sy_out, sy_grades);
        if (*pl_cmd) {
            pl.seed = pl_seed;
            pl.feature_kind = pl_kind == "browser" ? coursetrace::SessionKind::Browser
                                                   : coursetrace::SessionKind::Study;
            auto manifest = coursetrace::run_pipeline(pl);
            std::fprintf(stderr, "pipeline: %zu stages complete, manifest at %s\n",
                         manifest.stages.size(), (pl.out_dir / "manifest.json").c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
