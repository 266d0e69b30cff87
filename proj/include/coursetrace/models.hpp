#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "coursetrace/csv.hpp"
#include "coursetrace/features.hpp"

namespace coursetrace {

/// Model-ready matrix: one row per student, labels 1 = Distinction.
struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<std::string> row_ids;
    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    std::size_t imputed_cells = 0;

    std::size_t size() const { return rows.size(); }
};

/// Rows come from students present in both the table and the label map.
/// Missing feature values are imputed as 0 (the count is kept).
inline Dataset build_dataset(const FeatureTable& table,
                             const std::map<std::string, Group2>& labels,
                             const std::vector<std::string>& feature_subset = {}) {
    Dataset d;
    d.feature_names = feature_subset.empty() ? table.feature_names : feature_subset;
    for (const auto& name : d.feature_names)
        if (std::find(table.feature_names.begin(), table.feature_names.end(), name) ==
            table.feature_names.end())
            throw std::invalid_argument("feature '" + name + "' not in the table");
    for (const auto& [id, cells] : table.rows) {
        auto label = labels.find(id);
        if (label == labels.end()) continue;
        std::vector<double> row;
        row.reserve(d.feature_names.size());
        for (const auto& name : d.feature_names) {
            auto cell = cells.find(name);
            if (cell == cells.end()) {
                row.push_back(0.0);
                ++d.imputed_cells;
            } else {
                row.push_back(cell->second);
            }
        }
        d.row_ids.push_back(id);
        d.rows.push_back(std::move(row));
        d.labels.push_back(label->second == Group2::Distinction ? 1 : 0);
    }
    return d;
}

// --- standardization -----------------------------------------------------------

/// Column z-scoring with population statistics; zero-variance columns pass
/// through unscaled.
struct Standardizer {
    std::vector<double> mean;
    std::vector<double> scale;

    static Standardizer fit(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw std::invalid_argument("cannot fit on empty data");
        const std::size_t d = rows[0].size();
        Standardizer s;
        s.mean.assign(d, 0.0);
        s.scale.assign(d, 1.0);
        for (const auto& row : rows)
            for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
        for (auto& m : s.mean) m /= static_cast<double>(rows.size());
        std::vector<double> var(d, 0.0);
        for (const auto& row : rows)
            for (std::size_t j = 0; j < d; ++j) {
                const double diff = row[j] - s.mean[j];
                var[j] += diff * diff;
            }
        for (std::size_t j = 0; j < d; ++j) {
            var[j] /= static_cast<double>(rows.size());
            if (var[j] > 0.0)
                s.scale[j] = std::sqrt(var[j]);
            else
                s.mean[j] = 0.0;  // constant column passes through untouched
        }
        return s;
    }

    void apply(std::vector<std::vector<double>>& rows) const {
        for (auto& row : rows)
            for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - mean[j]) / scale[j];
    }
};

inline std::pair<Dataset, Dataset> standardize(const Dataset& train, const Dataset& apply) {
    auto s = Standardizer::fit(train.rows);
    Dataset a = train, b = apply;
    s.apply(a.rows);
    s.apply(b.rows);
    return {a, b};
}

// --- logistic regression ---------------------------------------------------------

struct LogisticConfig {
    double l2 = 1.0;
    double step = 0.1;
    double tol = 1e-6;
    int max_iter = 10000;
};

struct LogisticModel {
    std::vector<double> weights;
    double intercept = 0.0;
    bool converged = false;
    double final_grad_norm = 0.0;
    int iterations = 0;

    double decision(const std::vector<double>& row) const {
        double z = intercept;
        for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * row[j];
        return z;
    }
    int predict(const std::vector<double>& row) const { return decision(row) >= 0.0 ? 1 : 0; }
};

namespace detail {
inline double log1p_exp(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
inline double sigmoid(double z) { return z > 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }
}  // namespace detail

/// Mean cross-entropy plus (l2 / 2n) * ||w||^2, intercept unpenalized.
/// `params` is the weight vector with the intercept appended last.
/// Returns the objective value and its gradient.
inline std::pair<double, std::vector<double>> logistic_objective(
    const std::vector<std::vector<double>>& rows, const std::vector<int>& labels,
    const std::vector<double>& params, double l2) {
    const std::size_t n = rows.size();
    const std::size_t d = params.size() - 1;
    const double inv_n = 1.0 / static_cast<double>(n);
    double value = 0.0;
    std::vector<double> grad(params.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double z = params[d];
        for (std::size_t j = 0; j < d; ++j) z += params[j] * rows[i][j];
        const double y = static_cast<double>(labels[i]);
        value += detail::log1p_exp(z) - y * z;
        const double residual = detail::sigmoid(z) - y;
        for (std::size_t j = 0; j < d; ++j) grad[j] += residual * rows[i][j];
        grad[d] += residual;
    }
    value *= inv_n;
    for (auto& g : grad) g *= inv_n;
    for (std::size_t j = 0; j < d; ++j) {
        value += 0.5 * l2 * inv_n * params[j] * params[j];
        grad[j] += l2 * inv_n * params[j];
    }
    return {value, std::move(grad)};
}

/// Deterministic full-batch gradient descent with a fixed step; stops when the
/// gradient norm drops below tol. Non-convergence is reported, not fatal.
inline LogisticModel train_logistic(const Dataset& data, const LogisticConfig& cfg = {}) {
    if (data.rows.empty()) throw std::invalid_argument("empty training data");
    const std::size_t d = data.feature_names.size();
    std::vector<double> params(d + 1, 0.0);
    LogisticModel model;
    double grad_norm = 0.0;
    int iter = 0;
    for (; iter < cfg.max_iter; ++iter) {
        auto [value, grad] = logistic_objective(data.rows, data.labels, params, cfg.l2);
        grad_norm = 0.0;
        for (double g : grad) grad_norm += g * g;
        grad_norm = std::sqrt(grad_norm);
        if (grad_norm < cfg.tol) {
            model.converged = true;
            break;
        }
        for (std::size_t j = 0; j < params.size(); ++j) params[j] -= cfg.step * grad[j];
    }
    model.weights.assign(params.begin(), params.end() - 1);
    model.intercept = params.back();
    model.final_grad_norm = grad_norm;
    model.iterations = iter;
    return model;
}

// --- decision tree -----------------------------------------------------------------

struct TreeConfig {
    int max_depth = 4;
    int min_leaf = 5;
};

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
};

struct DecisionTree {
    std::vector<TreeNode> nodes;

    int predict(const std::vector<double>& row) const {
        int idx = 0;
        while (nodes[static_cast<std::size_t>(idx)].feature >= 0) {
            const TreeNode& node = nodes[static_cast<std::size_t>(idx)];
            idx = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                : node.right;
        }
        return nodes[static_cast<std::size_t>(idx)].label;
    }
};

namespace detail {

inline double gini(std::size_t pos, std::size_t total) {
    if (total == 0) return 0.0;
    const double p = static_cast<double>(pos) / static_cast<double>(total);
    return 2.0 * p * (1.0 - p);
}

struct TreeBuilder {
    const std::vector<std::vector<double>>& rows;
    const std::vector<int>& labels;
    TreeConfig cfg;
    std::vector<TreeNode> nodes;

    int majority(const std::vector<std::size_t>& idx) const {
        std::size_t pos = 0;
        for (std::size_t i : idx) pos += static_cast<std::size_t>(labels[i]);
        // Exact tie predicts the negative class.
        return 2 * pos > idx.size() ? 1 : 0;
    }

    int build(std::vector<std::size_t> idx, int depth) {
        const std::size_t n = idx.size();
        std::size_t pos = 0;
        for (std::size_t i : idx) pos += static_cast<std::size_t>(labels[i]);
        const bool pure = pos == 0 || pos == n;

        int best_feature = -1;
        double best_threshold = 0.0;
        double best_impurity = gini(pos, n);
        if (!pure && depth < cfg.max_depth &&
            n >= 2 * static_cast<std::size_t>(cfg.min_leaf)) {
            const std::size_t d = rows[idx[0]].size();
            for (std::size_t f = 0; f < d; ++f) {
                std::vector<std::size_t> sorted = idx;
                std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
                    return rows[a][f] < rows[b][f];
                });
                std::size_t left_pos = 0;
                for (std::size_t i = 0; i + 1 < n; ++i) {
                    left_pos += static_cast<std::size_t>(labels[sorted[i]]);
                    if (rows[sorted[i]][f] == rows[sorted[i + 1]][f]) continue;
                    const std::size_t nl = i + 1, nr = n - nl;
                    if (nl < static_cast<std::size_t>(cfg.min_leaf) ||
                        nr < static_cast<std::size_t>(cfg.min_leaf))
                        continue;
                    const double impurity =
                        (static_cast<double>(nl) * gini(left_pos, nl) +
                         static_cast<double>(nr) * gini(pos - left_pos, nr)) /
                        static_cast<double>(n);
                    // Strict improvement keeps the lowest (feature, threshold) on ties.
                    if (impurity < best_impurity - 1e-12) {
                        best_impurity = impurity;
                        best_feature = static_cast<int>(f);
                        best_threshold =
                            (rows[sorted[i]][f] + rows[sorted[i + 1]][f]) / 2.0;
                    }
                }
            }
        }

        const int node_index = static_cast<int>(nodes.size());
        nodes.emplace_back();
        if (best_feature < 0) {
            nodes[static_cast<std::size_t>(node_index)].label = majority(idx);
            return node_index;
        }
        std::vector<std::size_t> left, right;
        for (std::size_t i : idx)
            (rows[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left : right)
                .push_back(i);
        nodes[static_cast<std::size_t>(node_index)].feature = best_feature;
        nodes[static_cast<std::size_t>(node_index)].threshold = best_threshold;
        const int l = build(std::move(left), depth + 1);
        nodes[static_cast<std::size_t>(node_index)].left = l;
        const int r = build(std::move(right), depth + 1);
        nodes[static_cast<std::size_t>(node_index)].right = r;
        return node_index;
    }
};

}  // namespace detail

/// Binary CART with Gini impurity, midpoint thresholds and deterministic
/// tie-breaking by lowest feature index then lowest threshold.
inline DecisionTree train_tree(const Dataset& data, const TreeConfig& cfg = {}) {
    if (data.rows.empty()) throw std::invalid_argument("empty training data");
    detail::TreeBuilder builder{data.rows, data.labels, cfg, {}};
    std::vector<std::size_t> idx(data.rows.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    builder.build(std::move(idx), 0);
    return DecisionTree{std::move(builder.nodes)};
}

// --- k-nearest neighbors --------------------------------------------------------------

struct KnnConfig {
    int k = 5;
};

/// Majority vote among the k nearest rows by Euclidean distance. Distance
/// ties resolve to the lower row index; vote ties predict the negative class.
inline int knn_predict(const std::vector<std::vector<double>>& train_rows,
                       const std::vector<int>& train_labels, int k,
                       const std::vector<double>& point) {
    if (k < 1 || static_cast<std::size_t>(k) > train_rows.size())
        throw std::invalid_argument("k must be in [1, n]");
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
        double d2 = 0.0;
        for (std::size_t j = 0; j < point.size(); ++j) {
            const double diff = train_rows[i][j] - point[j];
            d2 += diff * diff;
        }
        dist.emplace_back(d2, i);
    }
    std::sort(dist.begin(), dist.end());
    int votes = 0;
    for (int i = 0; i < k; ++i) votes += train_labels[dist[static_cast<std::size_t>(i)].second];
    return 2 * votes > k ? 1 : 0;
}

// --- cross-validated evaluation ----------------------------------------------------------

enum class ClassifierKind { LogisticRegression, DecisionTree, Knn };

inline std::string_view to_string(ClassifierKind k) {
    switch (k) {
        case ClassifierKind::LogisticRegression: return "logistic_regression";
        case ClassifierKind::DecisionTree: return "decision_tree";
        case ClassifierKind::Knn: return "knn";
    }
    return "?";
}

inline ClassifierKind classifier_from(std::string_view name) {
    if (name == "logreg" || name == "logistic_regression") return ClassifierKind::LogisticRegression;
    if (name == "tree" || name == "decision_tree") return ClassifierKind::DecisionTree;
    if (name == "knn") return ClassifierKind::Knn;
    throw std::invalid_argument("unknown classifier: " + std::string(name));
}

struct ClassifierSpec {
    ClassifierKind kind = ClassifierKind::LogisticRegression;
    LogisticConfig logistic;
    TreeConfig tree;
    KnnConfig knn;
};

struct FoldStat {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::size_t train_size = 0, test_size = 0;
};

inline double precision_score(std::size_t tp, std::size_t fp) {
    return tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
}

inline double recall_score(std::size_t tp, std::size_t fn) {
    return tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
}

/// Harmonic mean of precision and recall; 0 when both are empty.
inline double f1_score(std::size_t tp, std::size_t fp, std::size_t fn) {
    const double p = precision_score(tp, fp);
    const double r = recall_score(tp, fn);
    return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

struct EvalReport {
    double f1 = 0.0, precision = 0.0, recall = 0.0;
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    int folds = 0;
    std::vector<FoldStat> fold_stats;
};

/// Stratified k-fold cross-validation with a seeded shuffle; F1 on the
/// positive class pooled over the test folds. When a class has fewer members
/// than the requested fold count the evaluation refolds with fewer, larger
/// folds; below two members per class it aborts.
inline EvalReport evaluate(const Dataset& data, const ClassifierSpec& spec, int folds,
                           std::uint64_t seed) {
    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < data.labels.size(); ++i)
        (data.labels[i] == 1 ? pos_idx : neg_idx).push_back(i);
    const std::size_t min_class = std::min(pos_idx.size(), neg_idx.size());
    if (min_class < 2)
        throw std::runtime_error("both classes need at least two members, have " +
                                 std::to_string(min_class));
    const int folds_used = std::min<int>(folds, static_cast<int>(min_class));

    std::mt19937_64 rng(seed);
    std::shuffle(pos_idx.begin(), pos_idx.end(), rng);
    std::shuffle(neg_idx.begin(), neg_idx.end(), rng);
    std::vector<int> fold_of(data.labels.size(), 0);
    for (std::size_t i = 0; i < pos_idx.size(); ++i)
        fold_of[pos_idx[i]] = static_cast<int>(i) % folds_used;
    for (std::size_t i = 0; i < neg_idx.size(); ++i)
        fold_of[neg_idx[i]] = static_cast<int>(i) % folds_used;

    EvalReport report;
    report.folds = folds_used;
    for (int fold = 0; fold < folds_used; ++fold) {
        Dataset train, test;
        train.feature_names = test.feature_names = data.feature_names;
        for (std::size_t i = 0; i < data.rows.size(); ++i) {
            Dataset& dst = fold_of[i] == fold ? test : train;
            dst.rows.push_back(data.rows[i]);
            dst.labels.push_back(data.labels[i]);
        }
        auto [train_z, test_z] = standardize(train, test);

        std::vector<int> predictions(test_z.rows.size(), 0);
        switch (spec.kind) {
            case ClassifierKind::LogisticRegression: {
                auto model = train_logistic(train_z, spec.logistic);
                for (std::size_t i = 0; i < test_z.rows.size(); ++i)
                    predictions[i] = model.predict(test_z.rows[i]);
                break;
            }
            case ClassifierKind::DecisionTree: {
                auto model = train_tree(train_z, spec.tree);
                for (std::size_t i = 0; i < test_z.rows.size(); ++i)
                    predictions[i] = model.predict(test_z.rows[i]);
                break;
            }
            case ClassifierKind::Knn: {
                const int k =
                    std::min<int>(spec.knn.k, static_cast<int>(train_z.rows.size()));
                for (std::size_t i = 0; i < test_z.rows.size(); ++i)
                    predictions[i] =
                        knn_predict(train_z.rows, train_z.labels, k, test_z.rows[i]);
                break;
            }
        }

        FoldStat fs;
        fs.train_size = train.rows.size();
        fs.test_size = test.rows.size();
        for (std::size_t i = 0; i < predictions.size(); ++i) {
            if (predictions[i] == 1 && test.labels[i] == 1) ++fs.tp;
            if (predictions[i] == 1 && test.labels[i] == 0) ++fs.fp;
            if (predictions[i] == 0 && test.labels[i] == 1) ++fs.fn;
            if (predictions[i] == 0 && test.labels[i] == 0) ++fs.tn;
        }
        report.tp += fs.tp;
        report.fp += fs.fp;
        report.fn += fs.fn;
        report.tn += fs.tn;
        report.fold_stats.push_back(fs);
    }

    report.precision = precision_score(report.tp, report.fp);
    report.recall = recall_score(report.tp, report.fn);
    report.f1 = f1_score(report.tp, report.fp, report.fn);
    return report;
}

// --- report serialization ----------------------------------------------------------------

struct ModelReport {
    // classifier -> window -> evaluation
    std::map<std::string, std::map<std::string, EvalReport>> cells;
};

inline void write_model_report_csv(const std::filesystem::path& path, const ModelReport& report,
                                   const std::vector<std::string>& windows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    std::vector<std::string> header = {"classifier"};
    header.insert(header.end(), windows.begin(), windows.end());
    out << csv_join(header) << '\n';
    for (const auto& [classifier, row] : report.cells) {
        std::vector<std::string> cells = {classifier};
        for (const auto& w : windows) {
            auto it = row.find(w);
            cells.push_back(it == row.end() ? "" : detail::format_number(it->second.f1));
        }
        out << csv_join(cells) << '\n';
    }
}

inline void write_model_details_csv(const std::filesystem::path& path,
                                    const ModelReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "classifier,window,f1,precision,recall,folds,tp,fp,fn,tn\n";
    for (const auto& [classifier, row] : report.cells)
        for (const auto& [window, e] : row)
            out << csv_join({classifier, window, detail::format_number(e.f1),
                             detail::format_number(e.precision), detail::format_number(e.recall),
                             std::to_string(e.folds), std::to_string(e.tp), std::to_string(e.fp),
                             std::to_string(e.fn), std::to_string(e.tn)})
                << '\n';
}

}  // namespace coursetrace
