#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ckrank {

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

// Feature embeddings one checkpoint produces on one task's split:
// labels[i] in [0, num_classes) pairs with features.row(i).
struct FeatureTable {
    std::string checkpoint_id;
    std::string task_id;
    Split split = Split::train;
    std::vector<int> labels;
    Eigen::MatrixXd features; // n x d
    int num_classes = 0;

    Eigen::Index rows() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
};

// Source-classifier softmax outputs; each row of source_probs is a
// distribution over the checkpoint's own label space.
struct SourcePredictionTable {
    std::string checkpoint_id;
    std::string task_id;
    Split split = Split::train;
    std::vector<int> labels;
    Eigen::MatrixXd source_probs; // n x |Z|
    int num_classes = 0;

    Eigen::Index rows() const { return source_probs.rows(); }
    Eigen::Index source_classes() const { return source_probs.cols(); }
};

enum class CovarianceKind { full, diagonal };
enum class SplitMode { paper_split, single_split };

inline const char* to_string(CovarianceKind k) {
    return k == CovarianceKind::full ? "full" : "diagonal";
}
inline const char* to_string(SplitMode m) {
    return m == SplitMode::paper_split ? "paper_split" : "single_split";
}

struct MeasureConfig {
    double pca_energy = 0.8;
    int components_per_class = 5;
    CovarianceKind covariance_kind = CovarianceKind::full;
    int em_max_iters = 200;
    double em_rel_tol = 1e-5;
    int em_restarts = 3;
    double ridge = 1e-6;
    double prob_floor = 1e-12;
    std::uint64_t seed = 0;
    int probe_epochs = 500;
    double probe_lr = 0.1;
    double probe_l2 = 1e-4;
    SplitMode split_mode = SplitMode::paper_split;
    // Advisory metadata only; nothing enforces it.
    std::string compute_budget_note;

    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument("MeasureConfig: " + m); };
        if (!(pca_energy > 0.0) || pca_energy > 1.0) fail("pca_energy must be in (0, 1]");
        if (components_per_class < 1) fail("components_per_class must be positive");
        if (em_max_iters < 1) fail("em_max_iters must be positive");
        if (!(em_rel_tol > 0.0)) fail("em_rel_tol must be positive");
        if (em_restarts < 1) fail("em_restarts must be positive");
        if (!(ridge > 0.0)) fail("ridge must be positive");
        if (!(prob_floor > 0.0)) fail("prob_floor must be positive");
        if (probe_epochs < 1) fail("probe_epochs must be positive");
        if (!(probe_lr > 0.0)) fail("probe_lr must be positive");
        if (probe_l2 < 0.0) fail("probe_l2 must be nonnegative");
    }
};

// Keys are (checkpoint_id, task_id); std::map keeps reports in lexicographic
// byte order, the declared deterministic ordering.
using CellKey = std::pair<std::string, std::string>;

struct GroundTruthTable {
    std::map<CellKey, double> accuracies;

    bool contains(const std::string& ck, const std::string& task) const {
        return accuracies.count({ck, task}) != 0;
    }
};

struct ScoreMatrix {
    std::string measure_name;
    std::map<CellKey, double> scores;
    std::map<CellKey, double> wall_clock_s; // optional, may be empty
};

struct Violation {
    std::string message;
    long row = -1; // -1: table-level violation
};

namespace detail {

inline void check_labels(const std::vector<int>& labels, int num_classes,
                         std::vector<Violation>& out) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || labels[i] >= num_classes) {
            out.push_back({"label " + std::to_string(labels[i]) + " out of range [0, " +
                               std::to_string(num_classes) + ") at row " + std::to_string(i),
                           static_cast<long>(i)});
        }
    }
}

} // namespace detail

// Violations are data, not failures: every broken invariant is reported with
// its row index and the table is accepted iff the list comes back empty.
inline std::vector<Violation> validate_feature_table(const FeatureTable& t) {
    std::vector<Violation> out;
    const auto n = t.features.rows();
    const auto d = t.features.cols();
    if (n < 1) out.push_back({"table has no rows", -1});
    if (d < 1) out.push_back({"table has no feature columns", -1});
    if (t.num_classes < 2) out.push_back({"num_classes must be >= 2", -1});
    if (static_cast<Eigen::Index>(t.labels.size()) != n)
        out.push_back({"label count " + std::to_string(t.labels.size()) +
                           " does not match row count " + std::to_string(n),
                       -1});
    detail::check_labels(t.labels, t.num_classes, out);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            if (!std::isfinite(t.features(i, j))) {
                out.push_back({"non-finite feature at row " + std::to_string(i) + ", column " +
                                   std::to_string(j),
                               static_cast<long>(i)});
                break; // one violation per row is enough
            }
        }
    }
    return out;
}

inline std::vector<Violation> validate_source_predictions(const SourcePredictionTable& t) {
    std::vector<Violation> out;
    const auto n = t.source_probs.rows();
    const auto z = t.source_probs.cols();
    if (n < 1) out.push_back({"table has no rows", -1});
    if (z < 2) out.push_back({"source label space must have >= 2 classes", -1});
    if (t.num_classes < 2) out.push_back({"num_classes must be >= 2", -1});
    if (static_cast<Eigen::Index>(t.labels.size()) != n)
        out.push_back({"label count does not match row count", -1});
    detail::check_labels(t.labels, t.num_classes, out);
    for (Eigen::Index i = 0; i < n; ++i) {
        double sum = 0.0;
        bool bad = false;
        for (Eigen::Index j = 0; j < z; ++j) {
            const double p = t.source_probs(i, j);
            if (!std::isfinite(p) || p < 0.0) {
                out.push_back({"invalid probability at row " + std::to_string(i),
                               static_cast<long>(i)});
                bad = true;
                break;
            }
            sum += p;
        }
        if (!bad && std::abs(sum - 1.0) > 1e-6) {
            out.push_back({"row " + std::to_string(i) + " sums to " + std::to_string(sum) +
                               ", expected 1",
                           static_cast<long>(i)});
        }
    }
    return out;
}

} // namespace ckrank
