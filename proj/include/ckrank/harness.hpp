#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ckrank/errors.hpp"
#include "ckrank/io.hpp"
#include "ckrank/metrics.hpp"
#include "ckrank/rng.hpp"
#include "ckrank/scores.hpp"
#include "ckrank/synthetic.hpp"
#include "ckrank/types.hpp"
#include "ckrank/version.hpp"

namespace ckrank {

enum class MeasureKind { leep, nleep, probe, mi_proxy };

inline const char* to_string(MeasureKind m) {
    switch (m) {
        case MeasureKind::leep: return "leep";
        case MeasureKind::nleep: return "nleep";
        case MeasureKind::probe: return "probe";
        case MeasureKind::mi_proxy: return "mi_proxy";
    }
    return "?";
}

inline std::optional<MeasureKind> parse_measure(std::string_view name) {
    if (name == "leep") return MeasureKind::leep;
    if (name == "nleep") return MeasureKind::nleep;
    if (name == "probe") return MeasureKind::probe;
    if (name == "mi_proxy" || name == "mi-proxy") return MeasureKind::mi_proxy;
    return std::nullopt;
}

struct SplitPaths {
    std::filesystem::path train;
    std::filesystem::path test;
};

struct ManifestTask {
    std::string id;
    int num_classes = 0;
};

struct ManifestCheckpoint {
    std::string id;
    std::map<std::string, SplitPaths> features;     // task_id -> paths
    std::map<std::string, SplitPaths> source_probs; // task_id -> paths, optional
};

struct BenchmarkManifest {
    std::string name = "benchmark";
    MeasureConfig config;
    std::vector<MeasureKind> measures;
    std::vector<int> k_values{1, 3};
    GroundTruthTable ground_truth;
    std::map<std::string, std::filesystem::path> external_scores; // name -> csv
    std::vector<ManifestTask> tasks;
    std::vector<ManifestCheckpoint> checkpoints;
    std::filesystem::path base_dir;
};

// ---------------------------------------------------------------------------
// Manifest loading.
// ---------------------------------------------------------------------------

namespace detail {

inline SplitPaths split_paths_from_json(const nlohmann::json& j, const std::string& context) {
    SplitPaths p;
    bool have_train = false, have_test = false;
    for (const auto& [key, value] : j.items()) {
        if (key == "train") {
            p.train = value.get<std::string>();
            have_train = true;
        } else if (key == "test") {
            p.test = value.get<std::string>();
            have_test = true;
        } else {
            throw ParseError(context, -1, "unknown split key '" + key + "'");
        }
    }
    if (!have_train || !have_test)
        throw ParseError(context, -1, "split paths need both 'train' and 'test'");
    return p;
}

inline void require_resolvable(const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::exists(p))
        throw ManifestError("manifest: " + what + " not resolvable: " + p.string());
}

} // namespace detail

inline BenchmarkManifest load_manifest(const std::filesystem::path& path) {
    const std::string text = io::detail::read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path.string(), -1, e.what());
    }
    const std::string ctx = path.string();
    BenchmarkManifest m;
    m.base_dir = path.parent_path();
    std::filesystem::path ground_truth_path;
    auto resolve = [&](const std::filesystem::path& p) {
        return p.is_absolute() ? p : m.base_dir / p;
    };

    for (const auto& [key, value] : j.items()) {
        if (key == "name") {
            m.name = value.get<std::string>();
        } else if (key == "seed") {
            m.config.seed = value.get<std::uint64_t>();
        } else if (key == "config") {
            io::apply_config_json(m.config, value, ctx);
        } else if (key == "measures") {
            for (const auto& item : value) {
                const auto name = item.get<std::string>();
                const auto kind = parse_measure(name);
                if (!kind) throw ParseError(ctx, -1, "unknown measure '" + name + "'");
                m.measures.push_back(*kind);
            }
        } else if (key == "k_values") {
            m.k_values.clear();
            for (const auto& item : value) m.k_values.push_back(item.get<int>());
        } else if (key == "ground_truth") {
            ground_truth_path = resolve(value.get<std::string>());
        } else if (key == "external_scores") {
            for (const auto& [name, p] : value.items())
                m.external_scores[name] = resolve(p.get<std::string>());
        } else if (key == "tasks") {
            for (const auto& item : value) {
                ManifestTask task;
                for (const auto& [tk, tv] : item.items()) {
                    if (tk == "id") {
                        task.id = tv.get<std::string>();
                    } else if (tk == "num_classes") {
                        task.num_classes = tv.get<int>();
                    } else {
                        throw ParseError(ctx, -1, "unknown task key '" + tk + "'");
                    }
                }
                m.tasks.push_back(std::move(task));
            }
        } else if (key == "checkpoints") {
            for (const auto& item : value) {
                ManifestCheckpoint ck;
                for (const auto& [ck_key, ck_value] : item.items()) {
                    if (ck_key == "id") {
                        ck.id = ck_value.get<std::string>();
                    } else if (ck_key == "features") {
                        for (const auto& [task_id, paths] : ck_value.items()) {
                            auto p = detail::split_paths_from_json(paths, ctx);
                            p.train = resolve(p.train);
                            p.test = resolve(p.test);
                            ck.features[task_id] = p;
                        }
                    } else if (ck_key == "source_probs") {
                        for (const auto& [task_id, paths] : ck_value.items()) {
                            auto p = detail::split_paths_from_json(paths, ctx);
                            p.train = resolve(p.train);
                            p.test = resolve(p.test);
                            ck.source_probs[task_id] = p;
                        }
                    } else {
                        throw ParseError(ctx, -1, "unknown checkpoint key '" + ck_key + "'");
                    }
                }
                m.checkpoints.push_back(std::move(ck));
            }
        } else {
            throw ParseError(ctx, -1, "unknown manifest key '" + key + "'");
        }
    }

    // Structural validation: ids unique, referenced files resolvable.
    if (m.tasks.empty()) throw ManifestError("manifest: no tasks");
    if (m.checkpoints.empty()) throw ManifestError("manifest: no checkpoints");
    if (ground_truth_path.empty()) throw ManifestError("manifest: missing ground_truth");
    for (int k : m.k_values)
        if (k < 1) throw ManifestError("manifest: k_values must be >= 1");
    std::set<std::string> task_ids, ck_ids;
    for (const auto& t : m.tasks) {
        if (t.num_classes < 2)
            throw ManifestError("manifest: task '" + t.id + "' needs num_classes >= 2");
        if (!task_ids.insert(t.id).second)
            throw ManifestError("manifest: duplicate task id '" + t.id + "'");
    }
    for (const auto& ck : m.checkpoints) {
        if (!ck_ids.insert(ck.id).second)
            throw ManifestError("manifest: duplicate checkpoint id '" + ck.id + "'");
        for (const auto& [task_id, p] : ck.features) {
            if (task_ids.find(task_id) == task_ids.end())
                throw ManifestError("manifest: checkpoint '" + ck.id +
                                    "' references unknown task '" + task_id + "'");
            detail::require_resolvable(p.train, "feature file");
            detail::require_resolvable(p.test, "feature file");
        }
        for (const auto& [task_id, p] : ck.source_probs) {
            if (task_ids.find(task_id) == task_ids.end())
                throw ManifestError("manifest: checkpoint '" + ck.id +
                                    "' references unknown task '" + task_id + "'");
            detail::require_resolvable(p.train, "source-prediction file");
            detail::require_resolvable(p.test, "source-prediction file");
        }
    }
    for (const auto& kind : m.measures) {
        if (std::count(m.measures.begin(), m.measures.end(), kind) > 1)
            throw ManifestError(std::string("manifest: duplicate measure '") + to_string(kind) +
                                "'");
    }
    for (const auto& [name, p] : m.external_scores) {
        if (parse_measure(name))
            throw ManifestError("manifest: external score name '" + name +
                                "' collides with an internal measure");
        detail::require_resolvable(p, "external score file");
    }
    detail::require_resolvable(ground_truth_path, "ground-truth file");
    m.ground_truth = io::load_ground_truth_csv(ground_truth_path);
    return m;
}

// ---------------------------------------------------------------------------
// Reports.
// ---------------------------------------------------------------------------

struct MeasureReport {
    std::string name;
    bool external = false;
    ScoreMatrix scores;
    std::map<CellKey, std::string> errors;
    std::map<CellKey, std::map<std::string, double>> diagnostics;
    std::vector<TaskEvaluation> per_task;
    AggregateRow aggregate;
    double total_wall_clock_s = 0.0;
};

struct RankingReport {
    std::string benchmark_name;
    std::uint64_t seed = 0;
    MeasureConfig config;
    std::vector<int> k_values;
    GroundTruthTable ground_truth;
    std::vector<MeasureReport> measures; // sorted by name
    double total_wall_clock_s = 0.0;

    bool has_errors() const {
        for (const auto& m : measures)
            if (!m.errors.empty()) return true;
        return false;
    }
};

// Evaluate a score matrix against ground truth, task by task. Scored keys
// must be a subset of the ground-truth keys.
inline std::pair<std::vector<TaskEvaluation>, AggregateRow> evaluate_scores(
    const ScoreMatrix& matrix, const GroundTruthTable& truth,
    const std::vector<int>& k_values) {
    std::map<std::string, CheckpointScores> by_task_scores;
    std::string missing;
    for (const auto& [key, score] : matrix.scores) {
        if (truth.accuracies.find(key) == truth.accuracies.end())
            missing += (missing.empty() ? "" : ", ") + key.first + "/" + key.second;
        by_task_scores[key.second][key.first] = score;
    }
    if (!missing.empty())
        throw KeyMismatch("scores for cells absent from ground truth: " + missing);
    std::vector<TaskEvaluation> evals;
    for (const auto& [task_id, scores] : by_task_scores) {
        CheckpointScores truths;
        for (const auto& [ck, _] : scores) truths[ck] = truth.accuracies.at({ck, task_id});
        evals.push_back(evaluate_task(task_id, scores, truths, k_values));
    }
    return {evals, aggregate(evals)};
}

inline std::pair<std::vector<TaskEvaluation>, AggregateRow> evaluate_external_scores(
    const std::filesystem::path& scores_csv, const GroundTruthTable& truth,
    const std::vector<int>& k_values) {
    return evaluate_scores(io::load_score_csv(scores_csv, scores_csv.filename().string()),
                           truth, k_values);
}

// ---------------------------------------------------------------------------
// Benchmark runner.
// ---------------------------------------------------------------------------

namespace detail {

struct LoadedCell {
    std::optional<std::pair<FeatureTable, FeatureTable>> features;       // train, test
    std::optional<std::pair<SourcePredictionTable, SourcePredictionTable>> probs;
    std::string feature_error; // set when listed but unusable
    std::string probs_error;
};

struct CellJob {
    std::size_t measure_index;
    CellKey key;
};

struct CellOutcome {
    bool has_score = false;
    double score = 0.0;
    double seconds = 0.0;
    std::string error;
    std::map<std::string, double> diagnostics;
};

inline std::string violations_to_string(const std::vector<Violation>& violations) {
    std::string out;
    for (std::size_t i = 0; i < violations.size() && i < 3; ++i) {
        if (!out.empty()) out += "; ";
        out += violations[i].message;
    }
    if (violations.size() > 3) out += "; (+" + std::to_string(violations.size() - 3) + " more)";
    return out;
}

} // namespace detail

// Runs every requested measure on every (checkpoint, task) cell. Failing
// cells produce error records, never aborts. Scores are deterministic for a
// given manifest seed regardless of the worker count: each cell derives its
// own seed from (config seed, checkpoint id, task id).
inline RankingReport run_benchmark(const BenchmarkManifest& manifest, int workers = 1) {
    manifest.config.validate();
    if (workers < 1) workers = 1;
    const auto t_start = std::chrono::steady_clock::now();

    RankingReport report;
    report.benchmark_name = manifest.name;
    report.seed = manifest.config.seed;
    report.config = manifest.config;
    report.k_values = manifest.k_values;
    report.ground_truth = manifest.ground_truth;

    std::map<std::string, int> task_classes;
    for (const auto& t : manifest.tasks) task_classes[t.id] = t.num_classes;

    // Load and validate every listed table up front, single-threaded.
    std::map<CellKey, detail::LoadedCell> cells;
    for (const auto& ck : manifest.checkpoints) {
        for (const auto& task : manifest.tasks) {
            const CellKey key{ck.id, task.id};
            detail::LoadedCell& cell = cells[key];
            if (auto it = ck.features.find(task.id); it != ck.features.end()) {
                try {
                    auto train = io::load_feature_table(it->second.train, ck.id, task.id,
                                                        Split::train, task.num_classes);
                    auto test = io::load_feature_table(it->second.test, ck.id, task.id,
                                                       Split::test, task.num_classes);
                    auto violations = validate_feature_table(train);
                    const auto test_violations = validate_feature_table(test);
                    violations.insert(violations.end(), test_violations.begin(),
                                      test_violations.end());
                    if (train.dim() != test.dim())
                        violations.push_back({"train/test feature dimensions differ", -1});
                    if (!violations.empty()) {
                        cell.feature_error = detail::violations_to_string(violations);
                    } else {
                        cell.features = {std::move(train), std::move(test)};
                    }
                } catch (const std::exception& e) {
                    cell.feature_error = e.what();
                }
            }
            if (auto it = ck.source_probs.find(task.id); it != ck.source_probs.end()) {
                try {
                    auto train = io::load_source_predictions(it->second.train, ck.id, task.id,
                                                             Split::train, task.num_classes);
                    auto test = io::load_source_predictions(it->second.test, ck.id, task.id,
                                                            Split::test, task.num_classes);
                    auto violations = validate_source_predictions(train);
                    const auto test_violations = validate_source_predictions(test);
                    violations.insert(violations.end(), test_violations.begin(),
                                      test_violations.end());
                    if (!violations.empty()) {
                        cell.probs_error = detail::violations_to_string(violations);
                    } else {
                        cell.probs = {std::move(train), std::move(test)};
                    }
                } catch (const std::exception& e) {
                    cell.probs_error = e.what();
                }
            }
        }
    }

    // One job per (measure, checkpoint, task), executed by a small pool.
    std::vector<detail::CellJob> jobs;
    for (std::size_t mi = 0; mi < manifest.measures.size(); ++mi)
        for (const auto& ck : manifest.checkpoints)
            for (const auto& task : manifest.tasks)
                jobs.push_back({mi, {ck.id, task.id}});
    std::vector<detail::CellOutcome> outcomes(jobs.size());

    const bool single_split = manifest.config.split_mode == SplitMode::single_split;
    auto run_job = [&](const detail::CellJob& job, detail::CellOutcome& out) {
        const MeasureKind kind = manifest.measures[job.measure_index];
        const detail::LoadedCell& cell = cells.at(job.key);
        MeasureConfig config = manifest.config;
        config.seed = mix_seed(config.seed, fnv1a(job.key.first), fnv1a(job.key.second));
        const auto t0 = std::chrono::steady_clock::now();
        try {
            switch (kind) {
                case MeasureKind::leep: {
                    if (!cell.probs)
                        throw std::runtime_error(
                            cell.probs_error.empty()
                                ? "no source predictions listed for this cell"
                                : "source predictions unusable: " + cell.probs_error);
                    const auto& eval = single_split ? cell.probs->first : cell.probs->second;
                    out.score = leep(cell.probs->first, eval, config);
                    break;
                }
                case MeasureKind::nleep: {
                    if (!cell.features)
                        throw std::runtime_error(cell.feature_error.empty()
                                                     ? "no features listed for this cell"
                                                     : "features unusable: " +
                                                           cell.feature_error);
                    const auto& eval = single_split ? cell.features->first
                                                    : cell.features->second;
                    const NleepResult r = nleep(cell.features->first, eval, config);
                    out.score = r.score;
                    out.diagnostics["retained_pca_dim"] = r.diagnostics.retained_pca_dim;
                    out.diagnostics["effective_components"] =
                        r.diagnostics.effective_components;
                    out.diagnostics["gmm_log_likelihood"] = r.diagnostics.gmm_log_likelihood;
                    out.diagnostics["gmm_iterations"] = r.diagnostics.gmm_iterations;
                    out.diagnostics["zero_variance_fallback"] =
                        r.diagnostics.zero_variance_fallback ? 1.0 : 0.0;
                    break;
                }
                case MeasureKind::probe: {
                    if (!cell.features)
                        throw std::runtime_error(cell.feature_error.empty()
                                                     ? "no features listed for this cell"
                                                     : "features unusable: " +
                                                           cell.feature_error);
                    const auto& eval = single_split ? cell.features->first
                                                    : cell.features->second;
                    out.score = linear_probe(cell.features->first, eval, config);
                    break;
                }
                case MeasureKind::mi_proxy: {
                    if (!cell.features)
                        throw std::runtime_error(cell.feature_error.empty()
                                                     ? "no features listed for this cell"
                                                     : "features unusable: " +
                                                           cell.feature_error);
                    out.score = mi_proxy(cell.features->first, config);
                    break;
                }
            }
            out.has_score = true;
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        out.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    if (workers == 1 || jobs.size() <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_job(jobs[i], outcomes[i]);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs.size()) return;
                run_job(jobs[i], outcomes[i]);
            }
        };
        std::vector<std::thread> pool;
        const int count = std::min<int>(workers, static_cast<int>(jobs.size()));
        pool.reserve(static_cast<std::size_t>(count));
        for (int i = 0; i < count; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    // Assemble per-measure reports.
    std::vector<MeasureReport> rows(manifest.measures.size());
    for (std::size_t mi = 0; mi < manifest.measures.size(); ++mi) {
        rows[mi].name = to_string(manifest.measures[mi]);
        rows[mi].scores.measure_name = rows[mi].name;
    }
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        MeasureReport& row = rows[jobs[i].measure_index];
        const detail::CellOutcome& out = outcomes[i];
        if (out.has_score) {
            row.scores.scores[jobs[i].key] = out.score;
        } else {
            row.errors[jobs[i].key] = out.error;
        }
        if (!out.diagnostics.empty()) row.diagnostics[jobs[i].key] = out.diagnostics;
        row.scores.wall_clock_s[jobs[i].key] = out.seconds;
        row.total_wall_clock_s += out.seconds;
    }
    for (auto& row : rows) {
        if (!row.scores.scores.empty()) {
            auto [evals, agg] = evaluate_scores(row.scores, manifest.ground_truth,
                                                manifest.k_values);
            row.per_task = std::move(evals);
            row.aggregate = agg;
        }
        report.measures.push_back(std::move(row));
    }

    // External score columns are graded exactly like internal measures.
    for (const auto& [name, path] : manifest.external_scores) {
        MeasureReport row;
        row.name = name;
        row.external = true;
        row.scores = io::load_score_csv(path, name);
        auto [evals, agg] = evaluate_scores(row.scores, manifest.ground_truth,
                                            manifest.k_values);
        row.per_task = std::move(evals);
        row.aggregate = agg;
        report.measures.push_back(std::move(row));
    }

    std::sort(report.measures.begin(), report.measures.end(),
              [](const MeasureReport& a, const MeasureReport& b) { return a.name < b.name; });
    report.total_wall_clock_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return report;
}

// ---------------------------------------------------------------------------
// Report serialization. Wall-clock fields ("cell_seconds", "total_seconds")
// are the only parts that vary between identical runs.
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json cell_map_to_json(const std::map<CellKey, double>& cells) {
    nlohmann::ordered_json out = nlohmann::ordered_json::object();
    for (const auto& [key, value] : cells) out[key.first][key.second] = value;
    return out;
}

} // namespace detail

inline nlohmann::ordered_json report_to_json(const RankingReport& report) {
    nlohmann::ordered_json j;
    j["tool"] = kToolName;
    j["version"] = kVersion;
    j["benchmark"] = report.benchmark_name;
    j["seed"] = report.seed;
    j["timing_note"] =
        "costs are wall-clock seconds per cell; FLOP accounting is not reported";
    j["config"] = io::config_to_json(report.config);
    j["k_values"] = report.k_values;
    j["ground_truth"] = nlohmann::ordered_json::object();
    for (const auto& [key, acc] : report.ground_truth.accuracies)
        j["ground_truth"][key.first][key.second] = acc;
    j["measures"] = nlohmann::ordered_json::object();
    for (const auto& m : report.measures) {
        nlohmann::ordered_json row;
        row["external"] = m.external;
        row["scores"] = nlohmann::ordered_json::object();
        for (const auto& [key, value] : m.scores.scores) row["scores"][key.first][key.second] = value;
        row["errors"] = nlohmann::ordered_json::object();
        for (const auto& [key, msg] : m.errors) row["errors"][key.first][key.second] = msg;
        if (!m.diagnostics.empty()) {
            row["diagnostics"] = nlohmann::ordered_json::object();
            for (const auto& [key, diag] : m.diagnostics) {
                nlohmann::ordered_json d = nlohmann::ordered_json::object();
                for (const auto& [k, v] : diag) d[k] = v;
                row["diagnostics"][key.first][key.second] = d;
            }
        }
        row["per_task"] = nlohmann::ordered_json::object();
        for (const auto& e : m.per_task) {
            nlohmann::ordered_json t;
            t["recall_at_k"] = nlohmann::ordered_json::object();
            for (const auto& [k, v] : e.recall_at_k) t["recall_at_k"][std::to_string(k)] = v;
            t["rel_at_k"] = nlohmann::ordered_json::object();
            for (const auto& [k, v] : e.rel_at_k) t["rel_at_k"][std::to_string(k)] = v;
            t["pearson"] = e.pearson ? nlohmann::ordered_json(*e.pearson)
                                     : nlohmann::ordered_json(nullptr);
            t["kendall"] = e.kendall ? nlohmann::ordered_json(*e.kendall)
                                     : nlohmann::ordered_json(nullptr);
            row["per_task"][e.task_id] = t;
        }
        nlohmann::ordered_json agg;
        agg["tasks"] = m.aggregate.tasks;
        agg["recall_at_k_pct"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : m.aggregate.recall_at_k)
            agg["recall_at_k_pct"][std::to_string(k)] = v;
        agg["rel_at_k_pct"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : m.aggregate.rel_at_k)
            agg["rel_at_k_pct"][std::to_string(k)] = v;
        agg["pearson_pct"] = m.aggregate.pearson ? nlohmann::ordered_json(*m.aggregate.pearson)
                                                 : nlohmann::ordered_json(nullptr);
        agg["kendall_pct"] = m.aggregate.kendall ? nlohmann::ordered_json(*m.aggregate.kendall)
                                                 : nlohmann::ordered_json(nullptr);
        agg["pearson_missing"] = m.aggregate.pearson_missing;
        agg["kendall_missing"] = m.aggregate.kendall_missing;
        row["aggregate"] = agg;
        row["cell_seconds"] = detail::cell_map_to_json(m.scores.wall_clock_s);
        row["total_seconds"] = m.total_wall_clock_s;
        j["measures"][m.name] = row;
    }
    j["total_seconds"] = report.total_wall_clock_s;
    return j;
}

inline void write_report_json(const RankingReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path.string(), -1, "cannot open file for writing");
    out << report_to_json(report).dump(2) << '\n';
}

inline std::string render_report_text(const RankingReport& report) {
    std::string out;
    char line[256];
    out += std::string(kToolName) + " " + kVersion + " benchmark report: " +
           report.benchmark_name + "\n";
    out += "seed " + std::to_string(report.seed) +
           "; costs are wall-clock seconds per cell (no FLOP accounting)\n";
    out += "aggregates are means over tasks, scaled x100\n\n";

    std::string header = "measure             ";
    for (int k : report.k_values) {
        const std::string label = "Recall@" + std::to_string(k);
        std::snprintf(line, sizeof line, "%9s ", label.c_str());
        header += line;
    }
    for (int k : report.k_values) {
        const std::string label = "Rel@" + std::to_string(k);
        std::snprintf(line, sizeof line, "%9s ", label.c_str());
        header += line;
    }
    header += "  Pearson   Kendall   seconds\n";
    out += header;
    out += std::string(header.size() - 1, '-') + "\n";
    for (const auto& m : report.measures) {
        std::snprintf(line, sizeof line, "%-19s ",
                      (m.name + (m.external ? " (ext)" : "")).c_str());
        out += line;
        auto append_cell = [&](const std::optional<double>& v) {
            if (v) {
                std::snprintf(line, sizeof line, "%9.2f ", *v);
            } else {
                std::snprintf(line, sizeof line, "%9s ", "--");
            }
            out += line;
        };
        for (int k : report.k_values) {
            auto it = m.aggregate.recall_at_k.find(k);
            append_cell(it == m.aggregate.recall_at_k.end()
                            ? std::nullopt
                            : std::optional<double>(it->second));
        }
        for (int k : report.k_values) {
            auto it = m.aggregate.rel_at_k.find(k);
            append_cell(it == m.aggregate.rel_at_k.end() ? std::nullopt
                                                         : std::optional<double>(it->second));
        }
        append_cell(m.aggregate.pearson);
        append_cell(m.aggregate.kendall);
        std::snprintf(line, sizeof line, "%9.2f", m.total_wall_clock_s);
        out += line;
        if (!m.errors.empty())
            out += "   [" + std::to_string(m.errors.size()) + " error cells]";
        out += "\n";
    }
    return out;
}

inline void write_report_text(const RankingReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError(path.string(), -1, "cannot open file for writing");
    out << render_report_text(report);
}

// ---------------------------------------------------------------------------
// Synthetic benchmark materialization: CSVs + ground truth + manifest.
// ---------------------------------------------------------------------------

inline std::filesystem::path write_benchmark_files(const SyntheticBenchmark& bench,
                                                   const std::filesystem::path& out_dir,
                                                   const std::vector<MeasureKind>& measures = {
                                                       MeasureKind::nleep, MeasureKind::probe,
                                                       MeasureKind::mi_proxy}) {
    std::filesystem::create_directories(out_dir);
    nlohmann::ordered_json manifest;
    manifest["name"] = "synthetic";
    manifest["seed"] = bench.spec.seed;
    manifest["measures"] = nlohmann::ordered_json::array();
    for (const auto& m : measures) manifest["measures"].push_back(to_string(m));
    manifest["k_values"] = {1, 3};
    manifest["ground_truth"] = "ground_truth.csv";
    manifest["tasks"] = nlohmann::ordered_json::array();
    for (const auto& task_id : bench.task_ids) {
        nlohmann::ordered_json t;
        t["id"] = task_id;
        t["num_classes"] = bench.spec.classes_per_task;
        manifest["tasks"].push_back(t);
    }
    manifest["checkpoints"] = nlohmann::ordered_json::array();
    for (const auto& ck_id : bench.checkpoint_ids) {
        nlohmann::ordered_json ck;
        ck["id"] = ck_id;
        ck["features"] = nlohmann::ordered_json::object();
        for (const auto& task_id : bench.task_ids) {
            const auto& pair = bench.tables.at({ck_id, task_id});
            const std::string train_name = ck_id + "_" + task_id + "_train.csv";
            const std::string test_name = ck_id + "_" + task_id + "_test.csv";
            io::save_feature_table_text(out_dir / train_name, pair.first);
            io::save_feature_table_text(out_dir / test_name, pair.second);
            ck["features"][task_id] = {{"train", train_name}, {"test", test_name}};
        }
        manifest["checkpoints"].push_back(ck);
    }
    io::save_ground_truth_csv(out_dir / "ground_truth.csv", bench.ground_truth);
    const auto manifest_path = out_dir / "manifest.json";
    std::ofstream out(manifest_path, std::ios::binary);
    if (!out) throw ParseError(manifest_path.string(), -1, "cannot open file for writing");
    out << manifest.dump(2) << '\n';
    return manifest_path;
}

} // namespace ckrank
