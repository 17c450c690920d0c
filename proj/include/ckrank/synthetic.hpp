#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ckrank/errors.hpp"
#include "ckrank/rng.hpp"
#include "ckrank/scores.hpp"
#include "ckrank/types.hpp"

namespace ckrank {

// Quality knobs for one simulated checkpoint's feature extractor.
//   separation: pairwise class-mean distance in units of within-class sigma.
//   noise_dims: trailing coordinates carrying loud (3 sigma) distractor noise.
//   label_noise: fraction of train labels resampled uniformly.
struct CheckpointProfile {
    double separation = 1.0;
    int noise_dims = 0;
    double label_noise = 0.0;
};

struct SyntheticSpec {
    int num_tasks = 4;
    int classes_per_task = 3;
    int dims_per_checkpoint = 32;
    std::vector<CheckpointProfile> checkpoints;
    int samples_train = 500;
    int samples_test = 500;
    std::uint64_t seed = 42;

    void validate() const {
        auto fail = [](const std::string& m) { throw std::invalid_argument("SyntheticSpec: " + m); };
        if (num_tasks < 1) fail("num_tasks must be positive");
        if (classes_per_task < 2) fail("classes_per_task must be >= 2");
        if (dims_per_checkpoint < 1) fail("dims_per_checkpoint must be positive");
        if (samples_train < 1 || samples_test < 1) fail("sample counts must be positive");
        if (checkpoints.empty()) fail("need at least one checkpoint profile");
        for (std::size_t i = 0; i < checkpoints.size(); ++i) {
            const auto& c = checkpoints[i];
            if (!(c.separation >= 0.0) || !std::isfinite(c.separation))
                fail("checkpoint " + std::to_string(i) + ": separation must be finite and >= 0");
            if (c.noise_dims < 0) fail("checkpoint " + std::to_string(i) + ": negative noise_dims");
            if (c.noise_dims + classes_per_task > dims_per_checkpoint)
                fail("checkpoint " + std::to_string(i) +
                     ": noise_dims + classes_per_task exceeds dims_per_checkpoint");
            if (!(c.label_noise >= 0.0) || c.label_noise >= 0.5)
                fail("checkpoint " + std::to_string(i) + ": label_noise must lie in [0, 0.5)");
        }
    }
};

// 12 checkpoints whose separations span [0.5, 8] over 4 three-class tasks.
inline SyntheticSpec default_synthetic_spec() {
    SyntheticSpec spec;
    spec.checkpoints.resize(12);
    for (int i = 0; i < 12; ++i) {
        spec.checkpoints[static_cast<std::size_t>(i)].separation =
            0.5 + (8.0 - 0.5) * static_cast<double>(i) / 11.0;
    }
    return spec;
}

struct SyntheticBenchmark {
    SyntheticSpec spec;
    std::vector<std::string> checkpoint_ids;
    std::vector<std::string> task_ids;
    std::map<CellKey, std::pair<FeatureTable, FeatureTable>> tables; // (train, test)
    GroundTruthTable ground_truth;
};

// Fixed hyperparameters for the accuracy oracle: a probe run to convergence
// with a smaller step than the measure-grade probe.
inline MeasureConfig oracle_probe_config() {
    MeasureConfig c;
    c.probe_epochs = 2000;
    c.probe_lr = 0.05;
    c.probe_l2 = 1e-4;
    return c;
}

namespace detail {

inline std::string padded_id(const char* prefix, int index) {
    std::string num = std::to_string(index);
    if (num.size() < 2) num.insert(num.begin(), '0');
    return prefix + num;
}

// Class means sit on alpha * e_c, so every pair is exactly `separation`
// apart; within-class noise is unit isotropic, and the trailing noise_dims
// coordinates get 3-sigma distractor noise instead.
inline FeatureTable sample_cell_split(const SyntheticSpec& spec, const CheckpointProfile& prof,
                                      const std::string& ck_id, const std::string& task_id,
                                      Split split, int samples, double label_noise, Rng& rng) {
    const int d = spec.dims_per_checkpoint;
    const int classes = spec.classes_per_task;
    const double alpha = prof.separation / std::sqrt(2.0);
    const int noise_start = d - prof.noise_dims;

    FeatureTable t;
    t.checkpoint_id = ck_id;
    t.task_id = task_id;
    t.split = split;
    t.num_classes = classes;
    t.labels.resize(static_cast<std::size_t>(samples));
    t.features.resize(samples, d);
    for (int i = 0; i < samples; ++i) {
        const int y = static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
        t.labels[static_cast<std::size_t>(i)] = y;
        for (int j = 0; j < d; ++j) {
            double v = rng.normal();
            if (j >= noise_start) {
                v *= 3.0;
            } else if (j == y) {
                v += alpha;
            }
            t.features(i, j) = v;
        }
    }
    if (label_noise > 0.0) {
        for (int i = 0; i < samples; ++i) {
            if (rng.uniform() < label_noise) {
                t.labels[static_cast<std::size_t>(i)] =
                    static_cast<int>(rng.uniform_index(static_cast<std::size_t>(classes)));
            }
        }
    }
    return t;
}

} // namespace detail

// Deterministic benchmark generation: cell (i, j) draws from a stream seeded
// by mix_seed(spec.seed, i, j), and the ground-truth accuracy is the oracle
// probe's test accuracy on the generated splits.
inline SyntheticBenchmark generate(const SyntheticSpec& spec) {
    spec.validate();
    SyntheticBenchmark bench;
    bench.spec = spec;
    for (std::size_t i = 0; i < spec.checkpoints.size(); ++i)
        bench.checkpoint_ids.push_back(detail::padded_id("ckpt", static_cast<int>(i)));
    for (int j = 0; j < spec.num_tasks; ++j)
        bench.task_ids.push_back(detail::padded_id("task", j));

    const MeasureConfig oracle = oracle_probe_config();
    for (std::size_t i = 0; i < spec.checkpoints.size(); ++i) {
        const auto& prof = spec.checkpoints[i];
        for (int j = 0; j < spec.num_tasks; ++j) {
            const auto& ck_id = bench.checkpoint_ids[i];
            const auto& task_id = bench.task_ids[static_cast<std::size_t>(j)];
            Rng rng(mix_seed(spec.seed, static_cast<std::uint64_t>(i),
                             static_cast<std::uint64_t>(j)));
            FeatureTable train = detail::sample_cell_split(
                spec, prof, ck_id, task_id, Split::train, spec.samples_train,
                prof.label_noise, rng);
            FeatureTable test = detail::sample_cell_split(
                spec, prof, ck_id, task_id, Split::test, spec.samples_test, 0.0, rng);
            bench.ground_truth.accuracies[{ck_id, task_id}] =
                linear_probe(train, test, oracle);
            bench.tables.emplace(CellKey{ck_id, task_id},
                                 std::make_pair(std::move(train), std::move(test)));
        }
    }
    return bench;
}

// ---------------------------------------------------------------------------
// SyntheticSpec <-> JSON.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json synthetic_spec_to_json(const SyntheticSpec& spec) {
    nlohmann::ordered_json j;
    j["num_tasks"] = spec.num_tasks;
    j["classes_per_task"] = spec.classes_per_task;
    j["dims_per_checkpoint"] = spec.dims_per_checkpoint;
    j["samples_train"] = spec.samples_train;
    j["samples_test"] = spec.samples_test;
    j["seed"] = spec.seed;
    j["checkpoints"] = nlohmann::ordered_json::array();
    for (const auto& c : spec.checkpoints) {
        nlohmann::ordered_json ck;
        ck["separation"] = c.separation;
        ck["noise_dims"] = c.noise_dims;
        ck["label_noise"] = c.label_noise;
        j["checkpoints"].push_back(ck);
    }
    return j;
}

inline SyntheticSpec synthetic_spec_from_json(const nlohmann::json& j,
                                              const std::string& context) {
    SyntheticSpec spec;
    spec.checkpoints.clear();
    for (const auto& [key, value] : j.items()) {
        if (key == "num_tasks") {
            spec.num_tasks = value.get<int>();
        } else if (key == "classes_per_task") {
            spec.classes_per_task = value.get<int>();
        } else if (key == "dims_per_checkpoint") {
            spec.dims_per_checkpoint = value.get<int>();
        } else if (key == "samples_train") {
            spec.samples_train = value.get<int>();
        } else if (key == "samples_test") {
            spec.samples_test = value.get<int>();
        } else if (key == "seed") {
            spec.seed = value.get<std::uint64_t>();
        } else if (key == "checkpoints") {
            for (const auto& ck : value) {
                CheckpointProfile prof;
                for (const auto& [ck_key, ck_value] : ck.items()) {
                    if (ck_key == "separation") {
                        prof.separation = ck_value.get<double>();
                    } else if (ck_key == "noise_dims") {
                        prof.noise_dims = ck_value.get<int>();
                    } else if (ck_key == "label_noise") {
                        prof.label_noise = ck_value.get<double>();
                    } else {
                        throw ParseError(context, -1, "unknown checkpoint key '" + ck_key + "'");
                    }
                }
                spec.checkpoints.push_back(prof);
            }
        } else {
            throw ParseError(context, -1, "unknown spec key '" + key + "'");
        }
    }
    return spec;
}

} // namespace ckrank
