// Acceptance suite: ten go/no-go checks over the whole toolkit, one line of
// output per check. Exit code 0 iff everything passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coursetrace/pipeline.hpp"
#include "helpers.hpp"

using namespace coursetrace;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(double v, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

/// The engineered cohort: a 2x activity gap between Distinction and Fail,
/// graded forum use, strong deadline response. 200 students.
CohortSpec engineered_spec(std::uint64_t seed) {
    CohortSpec spec;
    spec.seed = seed;
    spec.distinction = {90, 2.0, 2600.0, 700.0, 0.50};
    spec.pass = {70, 1.3, 2600.0, 700.0, 0.30};
    spec.fail = {40, 1.0, 2600.0, 700.0, 0.15};
    spec.burst_events_mean = 6.0;
    spec.burst_events_stddev = 3.0;
    spec.event_gap_min_minutes = 0.2;
    spec.event_gap_max_minutes = 8.0;
    spec.platform_switch_prob = 0.04;
    spec.deadline_boost = 3.0;
    spec.deadline_window_days = 3;
    spec.forum_question_prob = 0.25;
    spec.forum_answer_prob = 0.20;
    spec.homework_resubmit_prob = 0.35;
    return spec;
}

struct CohortData {
    CourseConfig config;
    SynthResult synth;
    SessionSet browser;
    SessionSet study;
    std::vector<std::pair<std::string, FeatureTable>> tables;
    std::vector<FeatureStat> stats;
    std::set<std::string> cohort_ids;
    std::map<std::string, Group2> binary;
    std::map<std::string, int> ordinal;
};

/// Runs the analysis pipeline in memory on the engineered cohort.
CohortData build_cohort(std::uint64_t seed) {
    CohortData d;
    d.config = testutil::base_config();
    d.synth = generate(engineered_spec(seed), d.config);
    d.browser = sessionize_cutoff(d.synth.txns, d.config.browser_cutoff_minutes,
                                  SessionKind::Browser, d.config.course_id);
    d.study = sessionize_cutoff(d.synth.txns, d.config.study_cutoff_minutes, SessionKind::Study,
                                d.config.course_id);
    for (const auto& g : d.synth.grades) {
        d.cohort_ids.insert(g.anon_id);
        d.binary[g.anon_id] = binary_group(grade_group(g.letter));
        d.ordinal[g.anon_id] = grade_ordinal(g.letter);
    }
    testutil::TempDir tmp("acceptance_tables");
    for (const auto& label : window_labels()) {
        auto window = make_window(label, d.config);
        auto features = compute_features(d.study, d.synth.txns, window, d.cohort_ids, d.config);
        attach_test_grades(features, d.synth.grades, label != "pre_test1",
                           label == "full_semester");
        auto path = tmp.path / ("features_" + label + ".csv");
        write_features_csv(path, features, true);
        d.tables.emplace_back(label, read_features_csv(path));
    }
    d.stats = screen_features(d.tables, d.binary, d.ordinal);
    return d;
}

const FeatureTable& table_for(const CohortData& d, const std::string& window) {
    for (const auto& [label, table] : d.tables)
        if (label == window) return table;
    throw std::logic_error("no table for " + window);
}

// --- criteria -------------------------------------------------------------------

Outcome c1_sessionizer_oracle() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<int> n_events(0, 100);
    std::uniform_real_distribution<double> gap(0.0, 120.0);
    std::uniform_real_distribution<double> cutoff_dist(1.0, 90.0);
    std::size_t mismatches = 0;
    for (int stream = 0; stream < 500; ++stream) {
        std::vector<Transaction> txns;
        double t = gap(rng) * 5.0;
        const int events = n_events(rng);
        for (int e = 0; e < events; ++e) {
            t += gap(rng);
            txns.push_back(testutil::txn("student", Platform::Lms, t));
        }
        const double cutoff = cutoff_dist(rng);
        auto set = sessionize_cutoff(txns, cutoff, SessionKind::Browser);
        if (testutil::partition_of(set) != testutil::oracle_partition(txns, cutoff)) ++mismatches;
    }
    const double elapsed = seconds_since(start);
    Outcome o;
    o.pass = mismatches == 0 && elapsed < 5.0;
    o.detail = "500 streams, " + std::to_string(mismatches) + " mismatches, " + fmt(elapsed) +
               "s (<5s)";
    return o;
}

Outcome c2_refinement() {
    auto config = testutil::base_config();
    std::size_t checked = 0;
    bool ok = true;
    std::string note;
    for (std::uint64_t seed : {11ull, 12ull, 13ull}) {
        auto spec = engineered_spec(seed);
        spec.distinction.students = 20;
        spec.pass.students = 20;
        spec.fail.students = 20;
        if (seed != 11) {
            // Gap distributions with real mass between the two cutoffs, so
            // study sessions genuinely merge several bursts.
            for (GroupSpec* g : {&spec.distinction, &spec.pass, &spec.fail}) {
                g->gap_mean_minutes = 45.0;
                g->gap_stddev_minutes = 35.0;
            }
        }
        auto result = generate(spec, config);
        auto browser = sessionize_cutoff(result.txns, 15, SessionKind::Browser);
        auto study = sessionize_cutoff(result.txns, 40, SessionKind::Study);
        if (browser.sessions.size() < study.sessions.size()) {
            ok = false;
            note = "count inversion at seed " + std::to_string(seed);
            break;
        }
        std::map<std::size_t, std::size_t> study_of;
        for (std::size_t si = 0; si < study.sessions.size(); ++si)
            for (std::size_t i : study.sessions[si].txn_indices) study_of[i] = si;
        for (const auto& b : browser.sessions) {
            const std::size_t target = study_of.at(b.txn_indices.front());
            for (std::size_t i : b.txn_indices)
                if (study_of.at(i) != target) {
                    ok = false;
                    note = "browser session straddles study sessions";
                }
            ++checked;
        }
    }
    Outcome o;
    o.pass = ok;
    o.detail = ok ? std::to_string(checked) + " browser sessions refine their study sessions"
                  : note;
    return o;
}

Outcome c3_homogeneity() {
    auto config = testutil::base_config();
    Outcome o;
    o.pass = true;
    std::string shares;
    for (std::uint64_t seed : {101ull, 102ull, 103ull}) {
        auto result = generate(engineered_spec(seed), config);
        auto summary = summarize_session_set(
            sessionize_cutoff(result.txns, config.browser_cutoff_minutes, SessionKind::Browser));
        const double share =
            static_cast<double>(summary.homogeneous) / static_cast<double>(summary.count);
        if (!shares.empty()) shares += ", ";
        shares += fmt(100.0 * share, 1) + "%";
        if (share < 0.93) o.pass = false;  // 95% target, +-2 points over seeds
    }
    o.detail = "homogeneous browser-session share " + shares + " (>=93%)";
    return o;
}

Outcome c4_deadline_spikes(const CohortData& d) {
    auto tl = build_series(d.browser, d.synth.groups, d.config);
    Outcome o;
    o.pass = true;
    std::string parts;
    for (const auto& series : tl.series) {
        auto spikes = detect_spikes(series, tl.deadline_days, 3);
        std::size_t hit = 0;
        for (const auto& s : spikes) {
            const bool spiking = (s.ratio && *s.ratio > 1.5) || (s.zero_baseline && s.pre_mean > 0);
            if (spiking) ++hit;
        }
        const double frac = static_cast<double>(hit) / static_cast<double>(spikes.size());
        if (!parts.empty()) parts += ", ";
        parts += std::string(to_string(series.group)) + " " + std::to_string(hit) + "/" +
                 std::to_string(spikes.size());
        if (frac < 0.9) o.pass = false;
    }
    o.detail = "spike ratio >1.5 at " + parts + " deadlines (>=90% each)";
    return o;
}

Outcome c5_stats_oracles() {
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng(5005);

    // Kendall tau-b against pair enumeration, exact.
    std::uniform_int_distribution<int> n_dist(2, 12);
    std::uniform_int_distribution<int> small(0, 5);
    std::size_t tau_mismatches = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = n_dist(rng);
        std::vector<double> x(static_cast<std::size_t>(n)), y(x.size());
        for (auto& v : x) v = small(rng);
        for (auto& v : y) v = small(rng);
        auto lib = kendall_tau(x, y);
        auto oracle = testutil::oracle_tau_b(x, y);
        if (lib.has_value() != oracle.has_value() || (lib && lib->tau != *oracle))
            ++tau_mismatches;
    }

    // Chi-square p against the exact permutation mid-p, tie-free n in [10,14].
    std::uniform_int_distribution<int> size_dist(5, 7);
    std::uniform_real_distribution<double> value(0.0, 1e6);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        std::set<double> seen;
        auto draw = [&] {
            double v = value(rng);
            while (seen.count(v)) v = value(rng);
            seen.insert(v);
            return v;
        };
        std::vector<double> g1(static_cast<std::size_t>(size_dist(rng)));
        std::vector<double> g2(static_cast<std::size_t>(size_dist(rng)));
        for (auto& v : g1) v = draw();
        for (auto& v : g2) v = draw();
        const double p_chi = kruskal_wallis({g1, g2}).p;
        const double p_exact = testutil::oracle_kw_perm_midp(g1, g2);
        worst = std::max(worst, std::fabs(p_chi - p_exact));
    }
    const double elapsed = seconds_since(start);

    Outcome o;
    o.pass = tau_mismatches == 0 && worst <= 0.05 && elapsed < 10.0;
    o.detail = "tau mismatches " + std::to_string(tau_mismatches) + "/200, worst |p-p_exact| " +
               fmt(worst) + " (<=0.05), " + fmt(elapsed) + "s (<10s)";
    return o;
}

Outcome c6_significance_recovery(const CohortData& d) {
    Outcome o;
    o.pass = true;
    std::ostringstream detail;
    for (const char* feature : {"session_count", "total_time", "pratio"}) {
        for (const auto& s : d.stats) {
            if (s.feature != feature) continue;
            if (!s.kw_p || *s.kw_p >= 0.05) {
                o.pass = false;
                detail << feature << "@" << s.window << " p="
                       << (s.kw_p ? fmt(*s.kw_p) : "n/a") << " ";
            }
        }
    }
    double worst_tau = -1.0;
    for (const auto& s : d.stats)
        if (s.feature == "consistency") {
            if (!s.tau || *s.tau >= 0.0) {
                o.pass = false;
                detail << "consistency@" << s.window << " tau not negative ";
            } else {
                worst_tau = std::max(worst_tau, *s.tau);
            }
        }
    if (o.pass)
        detail << "session_count/total_time/pratio significant in all windows; consistency tau "
               << "<= " << fmt(worst_tau);
    o.detail = detail.str();
    return o;
}

Outcome c7_classifiers(const CohortData& d) {
    const double prevalence = 90.0 / 200.0;
    Outcome o;
    o.pass = true;
    std::ostringstream detail;

    auto dataset_for = [&](const std::string& window) {
        const auto& table = table_for(d, window);
        auto selected = select_features(table, d.stats, window, 0.05);
        return build_dataset(table, d.binary, selected);
    };
    auto spec_for = [](ClassifierKind kind) {
        ClassifierSpec spec;
        spec.kind = kind;
        return spec;
    };
    const std::vector<ClassifierKind> kinds = {
        ClassifierKind::DecisionTree, ClassifierKind::Knn, ClassifierKind::LogisticRegression};

    auto full = dataset_for("full_semester");
    detail << "full:";
    for (auto kind : kinds) {
        const double f1 = evaluate(full, spec_for(kind), 5, 7).f1;
        detail << " " << to_string(kind) << "=" << fmt(f1);
        if (f1 < 0.85) o.pass = false;
    }

    auto pre = dataset_for("pre_test1");
    detail << "; pre_test1 (need >=" << fmt(prevalence + 0.1, 2) << "):";
    for (auto kind : kinds) {
        const double f1 = evaluate(pre, spec_for(kind), 5, 7).f1;
        detail << " " << to_string(kind) << "=" << fmt(f1);
        if (f1 < prevalence + 0.1) o.pass = false;
    }

    // Label shuffle: mean pooled F1 over 20 seeds near prevalence.
    detail << "; shuffled means:";
    std::mt19937_64 shuffle_rng(404);
    for (auto kind : kinds) {
        double total = 0.0;
        for (int s = 0; s < 20; ++s) {
            Dataset shuffled = full;
            std::shuffle(shuffled.labels.begin(), shuffled.labels.end(), shuffle_rng);
            total += evaluate(shuffled, spec_for(kind), 5, static_cast<std::uint64_t>(s)).f1;
        }
        const double mean = total / 20.0;
        detail << " " << to_string(kind) << "=" << fmt(mean);
        if (std::fabs(mean - prevalence) > 0.15) o.pass = false;
    }
    o.detail = detail.str();
    return o;
}

Outcome c8_numerics() {
    Outcome o;
    o.pass = true;
    std::ostringstream detail;

    // Logistic gradient vs central finite differences, relative error.
    std::mt19937_64 rng(808);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<std::vector<double>> rows(25, std::vector<double>(4));
    std::vector<int> labels(25);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (auto& v : rows[i]) v = noise(rng);
        labels[i] = noise(rng) > 0 ? 1 : 0;
    }
    std::vector<double> params(5);
    for (auto& p : params) p = noise(rng) * 0.5;
    auto [value, grad] = logistic_objective(rows, labels, params, 1.0);
    (void)value;
    auto fd = testutil::oracle_fd_gradient(rows, labels, params, 1.0);
    double worst_rel = 0.0;
    for (std::size_t j = 0; j < grad.size(); ++j)
        worst_rel = std::max(worst_rel,
                             std::fabs(grad[j] - fd[j]) / std::max(1e-8, std::fabs(fd[j])));
    if (worst_rel > 1e-5) o.pass = false;
    detail << "grad rel err " << worst_rel;

    // Idempotent z-scoring.
    auto once = rows;
    Standardizer::fit(once).apply(once);
    auto twice = once;
    Standardizer::fit(twice).apply(twice);
    double worst_abs = 0.0;
    for (std::size_t i = 0; i < once.size(); ++i)
        for (std::size_t j = 0; j < once[i].size(); ++j)
            worst_abs = std::max(worst_abs, std::fabs(once[i][j] - twice[i][j]));
    if (worst_abs > 1e-9) o.pass = false;
    detail << ", z idempotence " << worst_abs;

    // KNN against the scan oracle.
    std::uniform_int_distribution<int> n_dist(3, 25);
    std::uniform_int_distribution<int> coord(0, 4);
    std::size_t knn_mismatches = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = n_dist(rng);
        std::vector<std::vector<double>> pts;
        std::vector<int> lab;
        for (int i = 0; i < n; ++i) {
            pts.push_back({static_cast<double>(coord(rng)), static_cast<double>(coord(rng))});
            lab.push_back(coord(rng) % 2);
        }
        std::uniform_int_distribution<int> k_dist(1, n);
        const int k = k_dist(rng);
        std::vector<double> probe = {static_cast<double>(coord(rng)),
                                     static_cast<double>(coord(rng))};
        if (knn_predict(pts, lab, k, probe) != testutil::oracle_knn(pts, lab, k, probe))
            ++knn_mismatches;
    }
    if (knn_mismatches > 0) o.pass = false;
    detail << ", knn mismatches " << knn_mismatches << "/100";
    o.detail = detail.str();
    return o;
}

Outcome c9_determinism() {
    testutil::TempDir dir("acc_determinism");
    testutil::base_config().save(dir.path / "course.json");
    {
        auto spec = engineered_spec(7);
        spec.distinction.students = 15;
        spec.pass.students = 12;
        spec.fail.students = 10;
        nlohmann::json j = {
            {"seed", 7},
            {"groups",
             {{"distinction",
               {{"students", spec.distinction.students}, {"rate_multiplier", 2.0},
                {"forum_prob", 0.5}}},
              {"pass", {{"students", spec.pass.students}, {"rate_multiplier", 1.3}}},
              {"fail", {{"students", spec.fail.students}}}}},
            {"deadline_boost", 3.0}};
        std::ofstream f(dir.path / "spec.json");
        f << j.dump(2);
    }
    PipelineOptions a, b;
    a.course_config = b.course_config = dir.path / "course.json";
    a.cohort_spec = b.cohort_spec = dir.path / "spec.json";
    a.out_dir = dir.path / "a";
    b.out_dir = dir.path / "b";
    run_pipeline(a);
    run_pipeline(b);
    const std::vector<std::string> files = {
        "unified.log", "grades.csv", "sessions.log", "features_pre_test1.csv",
        "features_pre_test2.csv", "features_full_semester.csv", "stats.csv", "models.csv",
        "models_details.csv", "timeline.csv", "spikes.csv"};
    std::size_t same = 0;
    for (const auto& f : files)
        if (file_digest(dir.path / "a" / f) == file_digest(dir.path / "b" / f)) ++same;
    Outcome o;
    o.pass = same == files.size();
    o.detail = std::to_string(same) + "/" + std::to_string(files.size()) +
               " report files byte-identical across reruns";
    return o;
}

Outcome c10_smoke() {
    const auto start = std::chrono::steady_clock::now();
    testutil::TempDir dir("acc_smoke");
    testutil::base_config().save(dir.path / "course.json");
    {
        nlohmann::json j = {{"seed", 99},
                            {"groups",
                             {{"distinction", {{"students", 60}, {"rate_multiplier", 2.0}}},
                              {"pass", {{"students", 50}, {"rate_multiplier", 1.3}}},
                              {"fail", {{"students", 40}}}}},
                            {"deadline_boost", 3.0}};
        std::ofstream f(dir.path / "spec.json");
        f << j.dump(2);
    }
    PipelineOptions opt;
    opt.course_config = dir.path / "course.json";
    opt.cohort_spec = dir.path / "spec.json";
    opt.out_dir = dir.path / "out";
    auto manifest = run_pipeline(opt);
    const double elapsed = seconds_since(start);
    Outcome o;
    o.pass = manifest.stages.size() == 6 && elapsed < 60.0;
    o.detail = "150-student 15-week pipeline in " + fmt(elapsed) + "s (<60s)";
    return o;
}

}  // namespace

int main() {
    std::vector<std::pair<std::string, Outcome>> results;
    auto run = [&](int id, const std::string& name, auto&& fn) {
        Outcome outcome;
        try {
            outcome = fn();
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s  %2d. %-24s %s\n", outcome.pass ? "PASS" : "FAIL", id, name.c_str(),
                    outcome.detail.c_str());
        std::fflush(stdout);
        results.emplace_back(name, outcome);
    };

    run(1, "sessionizer-oracle", c1_sessionizer_oracle);
    run(2, "refinement-invariant", c2_refinement);
    run(3, "homogeneity-replication", c3_homogeneity);

    CohortData cohort = build_cohort(2026);
    run(4, "deadline-spikes", [&] { return c4_deadline_spikes(cohort); });
    run(5, "stats-oracles", c5_stats_oracles);
    run(6, "significance-recovery", [&] { return c6_significance_recovery(cohort); });
    run(7, "classifier-sanity", [&] { return c7_classifiers(cohort); });
    run(8, "numerical-checks", c8_numerics);
    run(9, "pipeline-determinism", c9_determinism);
    run(10, "end-to-end-smoke", c10_smoke);

    std::size_t failed = 0;
    for (const auto& [name, outcome] : results)
        if (!outcome.pass) ++failed;
    if (failed) {
        std::printf("%zu of %zu acceptance criteria FAILED\n", failed, results.size());
        return 1;
    }
    std::printf("all %zu acceptance criteria passed\n", results.size());
    return 0;
}
