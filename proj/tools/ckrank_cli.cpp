// ckrank command-line tool: score single cells, run benchmark manifests,
// and generate synthetic benchmarks.
//
// Exit codes: 0 success; 1 malformed input (bad flags or files, message names
// the file and line); 2 precondition violation; 3 bench --strict with error
// cells.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ckrank/ckrank.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMalformed = 1;
constexpr int kExitPrecondition = 2;
constexpr int kExitStrictErrors = 3;

struct ConfigFlags {
    std::string config_path;
    std::optional<double> pca_energy;
    std::optional<int> components_per_class;
    std::optional<std::string> covariance_kind;
    std::optional<int> em_max_iters;
    std::optional<double> em_rel_tol;
    std::optional<int> em_restarts;
    std::optional<double> ridge;
    std::optional<double> prob_floor;
    std::optional<std::uint64_t> seed;
    std::optional<int> probe_epochs;
    std::optional<double> probe_lr;
    std::optional<double> probe_l2;
    std::optional<std::string> split_mode;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "JSON file with measure configuration");
        cmd->add_option("--pca-energy", pca_energy, "PCA energy threshold in (0, 1]");
        cmd->add_option("--components-per-class", components_per_class,
                        "GMM components per downstream class");
        cmd->add_option("--covariance", covariance_kind, "GMM covariance kind: full|diagonal");
        cmd->add_option("--em-max-iters", em_max_iters, "EM iteration cap");
        cmd->add_option("--em-rel-tol", em_rel_tol, "EM relative log-likelihood tolerance");
        cmd->add_option("--em-restarts", em_restarts, "EM restarts");
        cmd->add_option("--ridge", ridge, "covariance ridge factor");
        cmd->add_option("--prob-floor", prob_floor, "probability floor before logs");
        cmd->add_option("--seed", seed, "random seed");
        cmd->add_option("--probe-epochs", probe_epochs, "linear probe epochs");
        cmd->add_option("--probe-lr", probe_lr, "linear probe learning rate");
        cmd->add_option("--probe-l2", probe_l2, "linear probe L2 penalty");
        cmd->add_option("--split-mode", split_mode, "paper_split|single_split");
    }

    // Precedence: flags over config file over built-in defaults.
    ckrank::MeasureConfig build() const {
        ckrank::MeasureConfig config;
        if (!config_path.empty()) {
            const std::string text = ckrank::io::detail::read_file(config_path);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(text);
            } catch (const nlohmann::json::parse_error& e) {
                throw ckrank::ParseError(config_path, -1, e.what());
            }
            ckrank::io::apply_config_json(config, j, config_path);
        }
        nlohmann::json overrides = nlohmann::json::object();
        if (pca_energy) overrides["pca_energy"] = *pca_energy;
        if (components_per_class) overrides["components_per_class"] = *components_per_class;
        if (covariance_kind) overrides["covariance_kind"] = *covariance_kind;
        if (em_max_iters) overrides["em_max_iters"] = *em_max_iters;
        if (em_rel_tol) overrides["em_rel_tol"] = *em_rel_tol;
        if (em_restarts) overrides["em_restarts"] = *em_restarts;
        if (ridge) overrides["ridge"] = *ridge;
        if (prob_floor) overrides["prob_floor"] = *prob_floor;
        if (seed) overrides["seed"] = *seed;
        if (probe_epochs) overrides["probe_epochs"] = *probe_epochs;
        if (probe_lr) overrides["probe_lr"] = *probe_lr;
        if (probe_l2) overrides["probe_l2"] = *probe_l2;
        if (split_mode) overrides["split_mode"] = *split_mode;
        ckrank::io::apply_config_json(config, overrides, "<flags>");
        return config;
    }
};

int infer_num_classes(const std::vector<int>& labels) {
    int max_label = 0;
    for (int y : labels) max_label = std::max(max_label, y);
    return max_label + 1;
}

void fail_precondition(const std::string& message) {
    throw std::invalid_argument(message);
}

int run_score(const std::string& measure_name, const std::string& train_path,
              const std::string& eval_path, const std::vector<std::string>& source_prob_paths,
              std::optional<int> num_classes_flag, const ConfigFlags& flags) {
    const ckrank::MeasureConfig config = flags.build();
    const auto kind = ckrank::parse_measure(measure_name);
    if (!kind) fail_precondition("unknown measure '" + measure_name + "'");

    const auto t0 = std::chrono::steady_clock::now();
    double score = 0.0;
    nlohmann::ordered_json diagnostics = nlohmann::ordered_json::object();

    if (*kind == ckrank::MeasureKind::leep) {
        if (source_prob_paths.empty())
            fail_precondition("--measure leep requires --source-probs");
        const auto& train_probs_path = source_prob_paths[0];
        const auto& eval_probs_path =
            source_prob_paths.size() > 1 ? source_prob_paths[1] : source_prob_paths[0];
        if (source_prob_paths.size() == 1)
            std::cerr << "warning: single --source-probs path given, scoring in single-split "
                         "mode\n";
        auto train = ckrank::io::load_source_predictions(train_probs_path, "cli", "cli",
                                                         ckrank::Split::train, 2);
        auto eval = ckrank::io::load_source_predictions(eval_probs_path, "cli", "cli",
                                                        ckrank::Split::test, 2);
        const int classes = num_classes_flag
                                ? *num_classes_flag
                                : std::max(infer_num_classes(train.labels),
                                           infer_num_classes(eval.labels));
        if (!num_classes_flag)
            std::cerr << "warning: --num-classes not given, inferred " << classes << "\n";
        train.num_classes = classes;
        eval.num_classes = classes;
        for (const auto& violation : ckrank::validate_source_predictions(train))
            fail_precondition(train_probs_path + ": " + violation.message);
        for (const auto& violation : ckrank::validate_source_predictions(eval))
            fail_precondition(eval_probs_path + ": " + violation.message);
        score = ckrank::leep(train, eval, config);
        diagnostics["source_classes"] = train.source_classes();
        diagnostics["num_classes"] = classes;
    } else {
        if (train_path.empty()) fail_precondition("--train is required for this measure");
        const std::string eval_used = eval_path.empty() ? train_path : eval_path;
        if (eval_path.empty() && *kind != ckrank::MeasureKind::mi_proxy)
            std::cerr << "warning: --eval not given, scoring in single-split mode\n";
        auto train = ckrank::io::load_feature_table(train_path, "cli", "cli",
                                                    ckrank::Split::train, 2);
        auto eval = ckrank::io::load_feature_table(eval_used, "cli", "cli",
                                                   ckrank::Split::test, 2);
        const int classes = num_classes_flag
                                ? *num_classes_flag
                                : std::max(infer_num_classes(train.labels),
                                           infer_num_classes(eval.labels));
        if (!num_classes_flag)
            std::cerr << "warning: --num-classes not given, inferred " << classes << "\n";
        train.num_classes = classes;
        eval.num_classes = classes;
        for (const auto& violation : ckrank::validate_feature_table(train))
            fail_precondition(train_path + ": " + violation.message);
        for (const auto& violation : ckrank::validate_feature_table(eval))
            fail_precondition(eval_used + ": " + violation.message);

        switch (*kind) {
            case ckrank::MeasureKind::nleep: {
                const ckrank::NleepResult r = ckrank::nleep(train, eval, config);
                score = r.score;
                diagnostics["retained_pca_dim"] = r.diagnostics.retained_pca_dim;
                diagnostics["effective_components"] = r.diagnostics.effective_components;
                diagnostics["requested_components"] = r.diagnostics.requested_components;
                diagnostics["gmm_log_likelihood"] = r.diagnostics.gmm_log_likelihood;
                diagnostics["gmm_iterations"] = r.diagnostics.gmm_iterations;
                diagnostics["zero_variance_fallback"] = r.diagnostics.zero_variance_fallback;
                if (r.diagnostics.zero_variance_fallback)
                    std::cerr << "warning: zero-variance features, PCA fell back to a single "
                                 "arbitrary direction\n";
                if (r.diagnostics.component_cap_applied)
                    std::cerr << "warning: component count clamped to "
                              << r.diagnostics.effective_components << "\n";
                break;
            }
            case ckrank::MeasureKind::probe:
                score = ckrank::linear_probe(train, eval, config);
                break;
            case ckrank::MeasureKind::mi_proxy:
                score = ckrank::mi_proxy(train, config);
                break;
            default:
                break;
        }
        diagnostics["num_classes"] = classes;
    }

    nlohmann::ordered_json out;
    out["measure"] = measure_name;
    out["score"] = score;
    out["diagnostics"] = diagnostics;
    out["seed"] = config.seed;
    out["wall_clock_s"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out["config"] = ckrank::io::config_to_json(config);
    std::cout << out.dump(2) << std::endl;
    return kExitOk;
}

int run_bench(const std::string& manifest_path, const std::string& out_dir, int workers,
              bool strict) {
    ckrank::BenchmarkManifest manifest = ckrank::load_manifest(manifest_path);
    const ckrank::RankingReport report = ckrank::run_benchmark(manifest, workers);
    std::filesystem::create_directories(out_dir);
    ckrank::write_report_json(report, std::filesystem::path(out_dir) / "report.json");
    ckrank::write_report_text(report, std::filesystem::path(out_dir) / "report.txt");
    std::cout << ckrank::render_report_text(report);
    if (strict && report.has_errors()) {
        std::cerr << "error: benchmark produced error cells (--strict)\n";
        return kExitStrictErrors;
    }
    return kExitOk;
}

int run_synth(const std::string& spec_path, const std::string& out_dir) {
    ckrank::SyntheticSpec spec;
    if (spec_path.empty()) {
        spec = ckrank::default_synthetic_spec();
    } else {
        const std::string text = ckrank::io::detail::read_file(spec_path);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ckrank::ParseError(spec_path, -1, e.what());
        }
        spec = ckrank::synthetic_spec_from_json(j, spec_path);
    }
    try {
        spec.validate();
    } catch (const std::invalid_argument& e) {
        // Bad spec content is malformed input, not a precondition violation.
        throw ckrank::ParseError(spec_path.empty() ? "<default spec>" : spec_path, -1,
                                 e.what());
    }
    const ckrank::SyntheticBenchmark bench = ckrank::generate(spec);
    const auto manifest_path = ckrank::write_benchmark_files(bench, out_dir);
    std::cout << "wrote " << manifest_path.string() << " ("
              << bench.checkpoint_ids.size() << " checkpoints x " << bench.task_ids.size()
              << " tasks)\n";
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"checkpoint transferability scoring and ranking evaluation"};
    app.require_subcommand(1);

    // score
    auto* score_cmd = app.add_subcommand("score", "score one (checkpoint, task) cell");
    std::string measure, train_path, eval_path;
    std::vector<std::string> source_prob_paths;
    std::optional<int> num_classes;
    ConfigFlags score_flags;
    score_cmd->add_option("--measure", measure, "leep|nleep|probe|mi-proxy")->required();
    score_cmd->add_option("--train", train_path, "train-split feature table");
    score_cmd->add_option("--eval", eval_path, "eval-split feature table (default: train)");
    score_cmd->add_option("--source-probs", source_prob_paths,
                          "source-prediction CSVs: train [eval]")
        ->expected(1, 2);
    score_cmd->add_option("--num-classes", num_classes,
                          "downstream class count (default: inferred from labels)");
    score_flags.attach(score_cmd);

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "run a benchmark manifest");
    std::string manifest_path, bench_out;
    int workers = 1;
    if (const char* env = std::getenv("CKRANK_WORKERS")) workers = std::atoi(env);
    if (workers < 1) workers = 1;
    bool strict = false;
    bench_cmd->add_option("--manifest", manifest_path, "benchmark manifest JSON")->required();
    bench_cmd->add_option("--out", bench_out, "output directory")->required();
    bench_cmd->add_option("--workers", workers, "concurrent scoring workers");
    bench_cmd->add_flag("--strict", strict, "exit 3 if any cell carries an error record");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic benchmark");
    std::string spec_path, synth_out;
    synth_cmd->add_option("--spec", spec_path, "synthetic spec JSON (default: built-in spec)");
    synth_cmd->add_option("--out", synth_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMalformed;
    }

    try {
        if (score_cmd->parsed())
            return run_score(measure, train_path, eval_path, source_prob_paths, num_classes,
                             score_flags);
        if (bench_cmd->parsed()) return run_bench(manifest_path, bench_out, workers, strict);
        if (synth_cmd->parsed()) return run_synth(spec_path, synth_out);
    } catch (const ckrank::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMalformed;
    } catch (const ckrank::ManifestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMalformed;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPrecondition;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPrecondition;
    }
    return kExitOk;
}
