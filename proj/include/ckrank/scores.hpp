#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ckrank/errors.hpp"
#include "ckrank/gmm.hpp"
#include "ckrank/pca.hpp"
#include "ckrank/types.hpp"

namespace ckrank {

// Empirical joint P(y, z): entry (y, z) = (1/n) * sum over rows j with
// label y of probs(j, z). Entries sum to 1.
inline Eigen::MatrixXd empirical_joint(const Eigen::MatrixXd& probs,
                                       const std::vector<int>& labels, int num_classes) {
    const Eigen::Index n = probs.rows();
    if (n == 0) throw EmptyInput("empirical_joint: no rows");
    if (static_cast<Eigen::Index>(labels.size()) != n)
        throw DimensionMismatch("empirical_joint: label count does not match row count");
    if (num_classes < 2) throw std::invalid_argument("empirical_joint: num_classes must be >= 2");
    Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(num_classes, probs.cols());
    for (Eigen::Index j = 0; j < n; ++j) {
        const int y = labels[static_cast<std::size_t>(j)];
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("empirical_joint: label " + std::to_string(y) +
                                        " out of range at row " + std::to_string(j));
        joint.row(y) += probs.row(j);
    }
    return joint / static_cast<double>(n);
}

// P(y | z) rows plus the marginal P(z). Rows whose marginal falls below
// prob_floor are replaced by the uniform distribution and flagged.
struct DummyClassifier {
    Eigen::MatrixXd conditional; // |Z| x |Y|, rows sum to 1
    Eigen::VectorXd marginal;    // |Z|
    std::vector<int> uniform_rows;
};

inline DummyClassifier make_dummy_classifier(const Eigen::MatrixXd& joint, double prob_floor) {
    const Eigen::Index num_classes = joint.rows();
    const Eigen::Index source_classes = joint.cols();
    DummyClassifier dummy;
    dummy.marginal = joint.colwise().sum();
    dummy.conditional.resize(source_classes, num_classes);
    for (Eigen::Index z = 0; z < source_classes; ++z) {
        if (dummy.marginal(z) < prob_floor) {
            dummy.conditional.row(z).setConstant(1.0 / static_cast<double>(num_classes));
            dummy.uniform_rows.push_back(static_cast<int>(z));
        } else {
            dummy.conditional.row(z) = joint.col(z).transpose() / dummy.marginal(z);
        }
    }
    return dummy;
}

// Log expected empirical prediction on raw probability rows. The dummy
// classifier comes from the train rows; the score is the mean over eval rows
// of log max(prob_floor, sum_z P(y_j | z) * probs(j, z)). This is also the
// tail of the NLEEP pipeline, which feeds posterior rows through unchanged.
inline double leep_from_probs(const Eigen::MatrixXd& train_probs,
                              const std::vector<int>& train_labels,
                              const Eigen::MatrixXd& eval_probs,
                              const std::vector<int>& eval_labels, int num_classes,
                              double prob_floor) {
    if (eval_probs.rows() == 0) throw EmptyInput("leep: no eval rows");
    if (train_probs.cols() != eval_probs.cols())
        throw DimensionMismatch("leep: train and eval source spaces differ");
    if (static_cast<Eigen::Index>(eval_labels.size()) != eval_probs.rows())
        throw DimensionMismatch("leep: eval label count does not match row count");
    const Eigen::MatrixXd joint = empirical_joint(train_probs, train_labels, num_classes);
    const DummyClassifier dummy = make_dummy_classifier(joint, prob_floor);
    double total = 0.0;
    for (Eigen::Index j = 0; j < eval_probs.rows(); ++j) {
        const int y = eval_labels[static_cast<std::size_t>(j)];
        if (y < 0 || y >= num_classes)
            throw std::invalid_argument("leep: eval label out of range at row " +
                                        std::to_string(j));
        // The dummy-classifier probability lives in [0, 1]; round-off in the
        // conditional can overshoot 1 by a few ulp, so clamp both ends.
        const double p = eval_probs.row(j).dot(dummy.conditional.col(y));
        total += std::log(std::clamp(p, prob_floor, 1.0));
    }
    return total / static_cast<double>(eval_probs.rows());
}

inline double leep(const SourcePredictionTable& train, const SourcePredictionTable& eval,
                   const MeasureConfig& config) {
    if (train.source_classes() != eval.source_classes())
        throw DimensionMismatch("leep: train |Z| = " + std::to_string(train.source_classes()) +
                                " but eval |Z| = " + std::to_string(eval.source_classes()));
    if (train.num_classes != eval.num_classes)
        throw DimensionMismatch("leep: train and eval num_classes differ");
    if (train.rows() == 0 || eval.rows() == 0) throw EmptyInput("leep: empty table");
    return leep_from_probs(train.source_probs, train.labels, eval.source_probs, eval.labels,
                           train.num_classes, config.prob_floor);
}

struct NleepDiagnostics {
    int retained_pca_dim = 0;
    int effective_components = 0;
    int requested_components = 0;
    double gmm_log_likelihood = 0.0;
    int gmm_iterations = 0;
    bool zero_variance_fallback = false;
    bool component_cap_applied = false;
};

struct NleepResult {
    double score = 0.0;
    NleepDiagnostics diagnostics;
};

namespace detail {

struct GmmPipeline {
    PcaModel pca;
    GaussianMixture gmm;
    Eigen::MatrixXd train_posteriors;
    NleepDiagnostics diagnostics;
};

// Shared front of NLEEP and the MI proxy: PCA at the configured energy,
// GMM over the projected train points, posteriors for the train rows.
inline GmmPipeline fit_gmm_pipeline(const FeatureTable& train, const MeasureConfig& config) {
    if (train.rows() < 2) throw DegenerateInput("nleep: need at least 2 train rows");
    if (train.num_classes < 2)
        throw std::invalid_argument("nleep: num_classes must be >= 2");
    GmmPipeline pipe;
    try {
        pipe.pca = fit_pca(train.features, config.pca_energy);
    } catch (const ZeroVariance&) {
        // All points identical: keep a single arbitrary unit direction.
        pipe.pca.mean = train.features.colwise().mean();
        pipe.pca.basis = Eigen::MatrixXd::Zero(train.dim(), 1);
        pipe.pca.basis(0, 0) = 1.0;
        pipe.pca.eigenvalues = Eigen::VectorXd::Zero(train.dim());
        pipe.pca.retained_dim = 1;
        pipe.pca.energy_threshold = config.pca_energy;
        pipe.diagnostics.zero_variance_fallback = true;
    }
    pipe.diagnostics.retained_pca_dim = pipe.pca.retained_dim;

    const Eigen::MatrixXd projected = project(pipe.pca, train.features);
    const int requested = config.components_per_class * train.num_classes;
    pipe.diagnostics.requested_components = requested;
    pipe.gmm = fit_gmm(projected, requested, config);
    pipe.diagnostics.effective_components = pipe.gmm.num_components;
    pipe.diagnostics.component_cap_applied = pipe.gmm.component_cap_applied;
    pipe.diagnostics.gmm_log_likelihood = pipe.gmm.final_log_likelihood;
    pipe.diagnostics.gmm_iterations = pipe.gmm.iterations;
    pipe.train_posteriors = posterior(pipe.gmm, projected);
    return pipe;
}

} // namespace detail

// NLEEP: PCA-reduce the train features, fit a GMM, and score LEEP with the
// posterior cluster assignments standing in for source-classifier outputs.
inline NleepResult nleep(const FeatureTable& train, const FeatureTable& eval,
                         const MeasureConfig& config) {
    if (train.dim() != eval.dim())
        throw DimensionMismatch("nleep: train dim " + std::to_string(train.dim()) +
                                " but eval dim " + std::to_string(eval.dim()));
    if (eval.rows() == 0) throw EmptyInput("nleep: empty eval table");
    detail::GmmPipeline pipe = detail::fit_gmm_pipeline(train, config);
    const Eigen::MatrixXd eval_posteriors =
        posterior(pipe.gmm, project(pipe.pca, eval.features));
    NleepResult result;
    result.diagnostics = pipe.diagnostics;
    result.score = leep_from_probs(pipe.train_posteriors, train.labels, eval_posteriors,
                                   eval.labels, train.num_classes, config.prob_floor);
    return result;
}

// Multinomial logistic regression on frozen features: full-batch gradient
// descent, train-statistics standardization, zero-initialized weights.
// Returns eval accuracy; argmax ties resolve to the lowest class index.
inline double linear_probe(const FeatureTable& train, const FeatureTable& eval,
                           const MeasureConfig& config) {
    if (train.dim() != eval.dim())
        throw DimensionMismatch("linear_probe: train and eval dimensions differ");
    if (train.rows() == 0 || eval.rows() == 0) throw EmptyInput("linear_probe: empty table");
    if (train.rows() < train.num_classes)
        throw DegenerateInput("linear_probe: need at least num_classes train rows");
    config.validate();

    const Eigen::Index n = train.rows();
    const Eigen::Index d = train.dim();
    const int classes = train.num_classes;

    const Eigen::RowVectorXd mean = train.features.colwise().mean();
    Eigen::RowVectorXd stddev =
        ((train.features.rowwise() - mean).cwiseAbs2().colwise().sum() /
         static_cast<double>(n))
            .cwiseSqrt();
    for (Eigen::Index j = 0; j < d; ++j)
        if (stddev(j) < 1e-12) stddev(j) = 1.0;

    const Eigen::MatrixXd x = ((train.features.rowwise() - mean).array().rowwise() /
                               stddev.array())
                                  .matrix();

    Eigen::MatrixXd onehot = Eigen::MatrixXd::Zero(n, classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        const int y = train.labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= classes)
            throw std::invalid_argument("linear_probe: train label out of range at row " +
                                        std::to_string(i));
        onehot(i, y) = 1.0;
    }

    Eigen::MatrixXd weights = Eigen::MatrixXd::Zero(d, classes);
    Eigen::RowVectorXd bias = Eigen::RowVectorXd::Zero(classes);

    for (int epoch = 0; epoch < config.probe_epochs; ++epoch) {
        Eigen::MatrixXd logits = (x * weights).rowwise() + bias;
        const Eigen::VectorXd row_max = logits.rowwise().maxCoeff();
        logits.colwise() -= row_max;
        Eigen::MatrixXd probs = logits.array().exp().matrix();
        const Eigen::VectorXd row_sum = probs.rowwise().sum();
        probs.array().colwise() /= row_sum.array();
        const Eigen::MatrixXd delta = (probs - onehot) / static_cast<double>(n);
        // L2 penalty applies to the weights, not the bias.
        weights -= config.probe_lr * (x.transpose() * delta + config.probe_l2 * weights);
        bias -= config.probe_lr * delta.colwise().sum();
    }

    const Eigen::MatrixXd xe = ((eval.features.rowwise() - mean).array().rowwise() /
                                stddev.array())
                                   .matrix();
    const Eigen::MatrixXd logits = (xe * weights).rowwise() + bias;
    Eigen::Index correct = 0;
    for (Eigen::Index i = 0; i < eval.rows(); ++i) {
        int arg = 0;
        for (int c = 1; c < classes; ++c)
            if (logits(i, c) > logits(i, arg)) arg = c;
        if (arg == eval.labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(eval.rows());
}

// Plug-in discrete mutual information, in nats, from a joint count (or
// probability) table. Zero cells contribute zero.
inline double plugin_mutual_information(const Eigen::MatrixXd& counts) {
    const double total = counts.sum();
    if (!(total > 0.0)) throw EmptyInput("plugin_mutual_information: empty count table");
    const Eigen::VectorXd row_marginal = counts.rowwise().sum() / total;
    const Eigen::VectorXd col_marginal = counts.colwise().sum() / total;
    double mi = 0.0;
    for (Eigen::Index i = 0; i < counts.rows(); ++i) {
        for (Eigen::Index j = 0; j < counts.cols(); ++j) {
            const double p = counts(i, j) / total;
            if (p > 0.0) mi += p * std::log(p / (row_marginal(i) * col_marginal(j)));
        }
    }
    return std::max(mi, 0.0);
}

// Discrete stand-in for a neural mutual-information estimate: run the NLEEP
// pipeline, hard-assign each train point to its argmax cluster, and return
// I(cluster; label) from the empirical count table.
inline double mi_proxy(const FeatureTable& train, const MeasureConfig& config) {
    detail::GmmPipeline pipe = detail::fit_gmm_pipeline(train, config);
    const Eigen::Index n = pipe.train_posteriors.rows();
    Eigen::MatrixXd counts =
        Eigen::MatrixXd::Zero(pipe.gmm.num_components, train.num_classes);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::Index cluster = 0;
        pipe.train_posteriors.row(i).maxCoeff(&cluster);
        counts(cluster, train.labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    return plugin_mutual_information(counts);
}

} // namespace ckrank
