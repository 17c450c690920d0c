#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ckrank/errors.hpp"

namespace ckrank {

using CheckpointScores = std::map<std::string, double>;

namespace detail {

inline void require_same_keys(const CheckpointScores& scores, const CheckpointScores& truths,
                              const char* op) {
    if (scores.size() != truths.size())
        throw KeyMismatch(std::string(op) + ": score and truth key sets differ in size");
    for (const auto& [id, _] : scores) {
        if (truths.find(id) == truths.end())
            throw KeyMismatch(std::string(op) + ": checkpoint '" + id + "' missing from truths");
    }
}

// Checkpoint ids ordered by descending score; ties broken by lexicographic id.
inline std::vector<std::string> ids_by_score(const CheckpointScores& scores) {
    std::vector<std::string> ids;
    ids.reserve(scores.size());
    for (const auto& [id, _] : scores) ids.push_back(id);
    std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
        const double sa = scores.at(a), sb = scores.at(b);
        if (sa != sb) return sa > sb;
        return a < b;
    });
    return ids;
}

} // namespace detail

// 1 iff some maximal-truth checkpoint appears among the k highest-scored ones.
inline int recall_at_k(const CheckpointScores& scores, const CheckpointScores& truths, int k) {
    if (scores.empty()) throw EmptyInput("recall_at_k: no checkpoints");
    if (k < 1) throw std::invalid_argument("recall_at_k: k must be >= 1");
    detail::require_same_keys(scores, truths, "recall_at_k");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [_, acc] : truths) best = std::max(best, acc);
    const auto order = detail::ids_by_score(scores);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    for (std::size_t i = 0; i < top; ++i)
        if (truths.at(order[i]) == best) return 1;
    return 0;
}

// Best truth within the measure's top k, relative to the best truth overall.
inline double rel_at_k(const CheckpointScores& scores, const CheckpointScores& truths, int k) {
    if (scores.empty()) throw EmptyInput("rel_at_k: no checkpoints");
    if (k < 1) throw std::invalid_argument("rel_at_k: k must be >= 1");
    detail::require_same_keys(scores, truths, "rel_at_k");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [_, acc] : truths) best = std::max(best, acc);
    if (!(best > 0.0)) throw ZeroDenominator("rel_at_k: best truth accuracy is not positive");
    const auto order = detail::ids_by_score(scores);
    const std::size_t top = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    double top_best = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < top; ++i) top_best = std::max(top_best, truths.at(order[i]));
    return top_best / best;
}

// Sample Pearson r; nullopt when either vector is constant (flagged missing,
// never silently zero).
inline std::optional<double> pearson(const CheckpointScores& scores,
                                     const CheckpointScores& truths) {
    if (scores.size() < 2) throw EmptyInput("pearson: need at least 2 checkpoints");
    detail::require_same_keys(scores, truths, "pearson");
    const double n = static_cast<double>(scores.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [id, s] : scores) {
        mx += s;
        my += truths.at(id);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (const auto& [id, s] : scores) {
        const double dx = s - mx;
        const double dy = truths.at(id) - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// Kendall tau-b over all pairs: (C - D) / sqrt((C + D + Ts)(C + D + Tt)),
// where Ts / Tt count pairs tied only in scores / only in truths. Quadratic
// pair loop; checkpoint counts stay in the hundreds.
inline std::optional<double> kendall(const CheckpointScores& scores,
                                     const CheckpointScores& truths) {
    if (scores.size() < 2) throw EmptyInput("kendall: need at least 2 checkpoints");
    detail::require_same_keys(scores, truths, "kendall");
    std::vector<double> s, t;
    s.reserve(scores.size());
    t.reserve(scores.size());
    for (const auto& [id, v] : scores) {
        s.push_back(v);
        t.push_back(truths.at(id));
    }
    long long concordant = 0, discordant = 0, ties_s = 0, ties_t = 0;
    const std::size_t n = s.size();
    for (std::size_t i = 0; i + 1 < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double ds = s[i] - s[j];
            const double dt = t[i] - t[j];
            if (ds == 0.0 && dt == 0.0) continue; // tied in both: counts nowhere
            if (ds == 0.0) {
                ++ties_s;
            } else if (dt == 0.0) {
                ++ties_t;
            } else if ((ds > 0.0) == (dt > 0.0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double den_s = static_cast<double>(concordant + discordant + ties_s);
    const double den_t = static_cast<double>(concordant + discordant + ties_t);
    if (den_s == 0.0 || den_t == 0.0) return std::nullopt; // all tied
    return static_cast<double>(concordant - discordant) / std::sqrt(den_s * den_t);
}

struct TaskEvaluation {
    std::string task_id;
    std::map<int, int> recall_at_k;    // k -> {0, 1}
    std::map<int, double> rel_at_k;    // k -> (0, 1]
    std::optional<double> pearson;     // natural [-1, 1] scale
    std::optional<double> kendall;
};

inline TaskEvaluation evaluate_task(const std::string& task_id, const CheckpointScores& scores,
                                    const CheckpointScores& truths,
                                    const std::vector<int>& k_values) {
    TaskEvaluation eval;
    eval.task_id = task_id;
    for (int k : k_values) {
        eval.recall_at_k[k] = recall_at_k(scores, truths, k);
        eval.rel_at_k[k] = rel_at_k(scores, truths, k);
    }
    // Correlations over a single checkpoint are undefined; report them as
    // flagged missing rather than failing the task row.
    if (scores.size() >= 2) {
        eval.pearson = pearson(scores, truths);
        eval.kendall = kendall(scores, truths);
    }
    return eval;
}

// Cross-task means, reported x100 to match the usual table convention.
// Missing correlations are excluded from their mean and counted.
struct AggregateRow {
    std::map<int, double> recall_at_k;
    std::map<int, double> rel_at_k;
    std::optional<double> pearson;
    std::optional<double> kendall;
    int pearson_missing = 0;
    int kendall_missing = 0;
    int tasks = 0;
};

inline AggregateRow aggregate(const std::vector<TaskEvaluation>& evaluations) {
    AggregateRow row;
    row.tasks = static_cast<int>(evaluations.size());
    if (evaluations.empty()) return row;
    for (const auto& e : evaluations) {
        for (const auto& [k, v] : e.recall_at_k) row.recall_at_k[k] += v;
        for (const auto& [k, v] : e.rel_at_k) row.rel_at_k[k] += v;
    }
    for (auto& [k, v] : row.recall_at_k) v = v / row.tasks * 100.0;
    for (auto& [k, v] : row.rel_at_k) v = v / row.tasks * 100.0;

    double psum = 0.0, ksum = 0.0;
    int pcount = 0, kcount = 0;
    for (const auto& e : evaluations) {
        if (e.pearson) {
            psum += *e.pearson;
            ++pcount;
        } else {
            ++row.pearson_missing;
        }
        if (e.kendall) {
            ksum += *e.kendall;
            ++kcount;
        } else {
            ++row.kendall_missing;
        }
    }
    if (pcount > 0) row.pearson = psum / pcount * 100.0;
    if (kcount > 0) row.kendall = ksum / kcount * 100.0;
    return row;
}

} // namespace ckrank
