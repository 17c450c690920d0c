#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "ckrank/errors.hpp"
#include "ckrank/rng.hpp"
#include "ckrank/types.hpp"

namespace ckrank {

struct GaussianMixture {
    int num_components = 0;
    CovarianceKind covariance_kind = CovarianceKind::full;
    Eigen::VectorXd weights;                  // V, sums to 1
    Eigen::MatrixXd means;                    // V x k
    std::vector<Eigen::MatrixXd> covariances; // V of k x k (diagonal kind: off-diagonals zero)
    double final_log_likelihood = 0.0;        // mean per-sample log-likelihood on the fit data
    int iterations = 0;
    std::uint64_t seed = 0;

    bool component_cap_applied = false; // num_components clamped against sample count
    int rescues = 0;                    // collapsed-component reinitializations
    double ridge_lambda = 0.0;          // diagonal load added each M-step
    std::vector<double> ll_trajectory;  // mean log-likelihood per EM iteration (winning restart)

    Eigen::Index dim() const { return means.cols(); }

    // Cached per-component Cholesky factors and log normalization constants.
    std::vector<Eigen::MatrixXd> chol;
    Eigen::VectorXd log_norm;

    void refresh_cache() {
        const auto k = dim();
        chol.assign(covariances.size(), Eigen::MatrixXd());
        log_norm.resize(static_cast<Eigen::Index>(covariances.size()));
        const double log2pi = std::log(2.0 * std::numbers::pi);
        for (std::size_t v = 0; v < covariances.size(); ++v) {
            Eigen::LLT<Eigen::MatrixXd> llt(covariances[v]);
            if (llt.info() != Eigen::Success)
                throw std::runtime_error("GaussianMixture: covariance not positive-definite");
            chol[v] = llt.matrixL();
            double logdet = 0.0;
            for (Eigen::Index i = 0; i < k; ++i) logdet += std::log(chol[v](i, i));
            log_norm(static_cast<Eigen::Index>(v)) =
                -0.5 * static_cast<double>(k) * log2pi - logdet;
        }
    }
};

namespace detail {

// Per-point, per-component log(pi_v * N(x | mu_v, Sigma_v)).
inline Eigen::MatrixXd weighted_log_densities(const GaussianMixture& model,
                                              const Eigen::MatrixXd& points) {
    if (points.cols() != model.dim())
        throw DimensionMismatch("gmm: points have " + std::to_string(points.cols()) +
                                " columns, model expects " + std::to_string(model.dim()));
    const Eigen::Index m = points.rows();
    const Eigen::Index V = model.weights.size();
    Eigen::MatrixXd out(m, V);
    for (Eigen::Index v = 0; v < V; ++v) {
        const Eigen::MatrixXd centered =
            points.rowwise() - model.means.row(v);
        // Quadratic form via triangular solve: ||L^-1 (x - mu)||^2.
        const Eigen::MatrixXd solved =
            model.chol[static_cast<std::size_t>(v)]
                .triangularView<Eigen::Lower>()
                .solve(centered.transpose());
        out.col(v) = -0.5 * solved.colwise().squaredNorm().transpose();
        out.col(v).array() += model.log_norm(v) + std::log(model.weights(v));
    }
    return out;
}

// Row-wise log-sum-exp with max subtraction.
inline Eigen::VectorXd log_sum_exp_rows(const Eigen::MatrixXd& logp) {
    Eigen::VectorXd maxes = logp.rowwise().maxCoeff();
    Eigen::VectorXd out(logp.rows());
    for (Eigen::Index i = 0; i < logp.rows(); ++i) {
        double s = 0.0;
        for (Eigen::Index j = 0; j < logp.cols(); ++j) s += std::exp(logp(i, j) - maxes(i));
        out(i) = maxes(i) + std::log(s);
    }
    return out;
}

// Lexicographic row order. The fit runs on a canonically sorted copy of the
// points so shuffling the input rows cannot change the fitted parameters.
inline std::vector<Eigen::Index> lexicographic_row_order(const Eigen::MatrixXd& points) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index c = 0; c < points.cols(); ++c) {
            if (points(a, c) < points(b, c)) return true;
            if (points(a, c) > points(b, c)) return false;
        }
        return false;
    });
    return order;
}

// k-means++ seeding: D^2-weighted draws, no Lloyd refinement.
inline Eigen::MatrixXd kmeanspp_centers(const Eigen::MatrixXd& points, int count, Rng& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centers(count, points.cols());
    centers.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_index(
        static_cast<std::size_t>(n))));
    Eigen::VectorXd dist2 =
        (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < count; ++c) {
        const std::size_t pick =
            rng.discrete(std::span<const double>(dist2.data(), static_cast<std::size_t>(n)));
        centers.row(c) = points.row(static_cast<Eigen::Index>(pick));
        dist2 = dist2.cwiseMin(
            (points.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }
    return centers;
}

struct EmRun {
    GaussianMixture model;
    double final_ll = -std::numeric_limits<double>::infinity();
};

inline EmRun run_em(const Eigen::MatrixXd& points, int components,
                    const MeasureConfig& config, std::uint64_t restart_seed,
                    const Eigen::MatrixXd& global_cov, double lambda) {
    const Eigen::Index n = points.rows();
    const bool diagonal = config.covariance_kind == CovarianceKind::diagonal;

    Rng rng(restart_seed);
    EmRun run;
    GaussianMixture& model = run.model;
    model.num_components = components;
    model.covariance_kind = config.covariance_kind;
    model.seed = restart_seed;
    model.ridge_lambda = lambda;
    model.weights = Eigen::VectorXd::Constant(components, 1.0 / components);
    model.means = kmeanspp_centers(points, components, rng);
    model.covariances.assign(static_cast<std::size_t>(components), global_cov);
    model.refresh_cache();

    double prev_ll = -std::numeric_limits<double>::infinity();
    for (int iter = 1; iter <= config.em_max_iters; ++iter) {
        // E-step on current parameters.
        const Eigen::MatrixXd logp = weighted_log_densities(model, points);
        const Eigen::VectorXd lse = log_sum_exp_rows(logp);
        const double ll = lse.mean();
        model.ll_trajectory.push_back(ll);
        model.iterations = iter;
        if (iter > 1 &&
            std::abs(ll - prev_ll) < config.em_rel_tol * (std::abs(prev_ll) + 1e-12)) {
            run.final_ll = ll;
            model.final_log_likelihood = ll;
            return run;
        }
        prev_ll = ll;

        const Eigen::MatrixXd resp = (logp.colwise() - lse).array().exp().matrix();

        // M-step.
        Eigen::VectorXd nk = resp.colwise().sum();
        for (int v = 0; v < components; ++v) {
            if (nk(v) < 1e-8 * static_cast<double>(n)) {
                // Collapsed component: park it on the worst-explained point
                // with the global ridged covariance.
                Eigen::Index worst = 0;
                lse.minCoeff(&worst);
                model.means.row(v) = points.row(worst);
                model.covariances[static_cast<std::size_t>(v)] = global_cov;
                nk(v) = 1.0;
                ++model.rescues;
                continue;
            }
            model.means.row(v) = (resp.col(v).transpose() * points) / nk(v);
            const Eigen::MatrixXd centered = points.rowwise() - model.means.row(v);
            if (diagonal) {
                Eigen::VectorXd var = (centered.cwiseAbs2().transpose() * resp.col(v)) / nk(v);
                var.array() += lambda;
                model.covariances[static_cast<std::size_t>(v)] = var.asDiagonal();
            } else {
                const Eigen::MatrixXd weighted =
                    (centered.array().colwise() * resp.col(v).array()).matrix();
                Eigen::MatrixXd cov = (centered.transpose() * weighted) / nk(v);
                cov.diagonal().array() += lambda;
                model.covariances[static_cast<std::size_t>(v)] = cov;
            }
        }
        model.weights = nk / nk.sum();
        model.refresh_cache();
    }

    // Iteration budget exhausted: report the likelihood of the returned parameters.
    const Eigen::MatrixXd logp = weighted_log_densities(model, points);
    const double ll = log_sum_exp_rows(logp).mean();
    model.ll_trajectory.push_back(ll);
    run.final_ll = ll;
    model.final_log_likelihood = ll;
    return run;
}

} // namespace detail

// EM fit with k-means++ initialization, em_restarts deterministic restarts,
// best final likelihood wins (ties: earliest restart).
inline GaussianMixture fit_gmm(const Eigen::MatrixXd& points, int num_components,
                               const MeasureConfig& config) {
    const Eigen::Index n = points.rows();
    if (n < 2) throw DegenerateInput("fit_gmm: need at least 2 points, got " + std::to_string(n));
    if (num_components < 1)
        throw std::invalid_argument("fit_gmm: num_components must be positive");
    if (!points.allFinite()) throw std::invalid_argument("fit_gmm: points must be finite");
    config.validate();

    const int cap = std::max(2, static_cast<int>(n / 10));
    const int components = std::min(num_components, cap);
    const bool capped = components < num_components;

    // Canonical point order makes the whole fit independent of input row order.
    const auto order = detail::lexicographic_row_order(points);
    Eigen::MatrixXd sorted(points.rows(), points.cols());
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        sorted.row(i) = points.row(order[static_cast<std::size_t>(i)]);

    const Eigen::RowVectorXd mean = sorted.colwise().mean();
    const Eigen::MatrixXd centered = sorted.rowwise() - mean;
    Eigen::MatrixXd global_cov =
        (centered.transpose() * centered) / static_cast<double>(n);
    const double mean_var = global_cov.trace() / static_cast<double>(points.cols());
    const double lambda = config.ridge * (mean_var > 0.0 ? mean_var : 1.0);
    if (config.covariance_kind == CovarianceKind::diagonal) {
        Eigen::VectorXd diag = global_cov.diagonal();
        diag.array() += lambda;
        global_cov = diag.asDiagonal();
    } else {
        global_cov.diagonal().array() += lambda;
    }

    detail::EmRun best;
    for (int r = 0; r < config.em_restarts; ++r) {
        detail::EmRun run = detail::run_em(sorted, components, config,
                                           mix_seed(config.seed, static_cast<std::uint64_t>(r)),
                                           global_cov, lambda);
        if (run.final_ll > best.final_ll) best = std::move(run);
    }
    best.model.component_cap_applied = capped;
    return best.model;
}

// Posterior cluster assignments P(v | x), computed in log space with max
// subtraction; every row sums to 1.
inline Eigen::MatrixXd posterior(const GaussianMixture& model, const Eigen::MatrixXd& points) {
    const Eigen::MatrixXd logp = detail::weighted_log_densities(model, points);
    const Eigen::VectorXd lse = detail::log_sum_exp_rows(logp);
    return (logp.colwise() - lse).array().exp().matrix();
}

// Mean per-point log sum_v pi_v N(x | mu_v, Sigma_v).
inline double log_likelihood(const GaussianMixture& model, const Eigen::MatrixXd& points) {
    if (points.rows() == 0) throw EmptyInput("log_likelihood: no points");
    const Eigen::MatrixXd logp = detail::weighted_log_densities(model, points);
    return detail::log_sum_exp_rows(logp).mean();
}

} // namespace ckrank
