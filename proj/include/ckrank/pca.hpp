#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "ckrank/errors.hpp"

namespace ckrank {

struct PcaModel {
    Eigen::VectorXd mean;        // d
    Eigen::MatrixXd basis;       // d x k, orthonormal columns, descending eigenvalue order
    Eigen::VectorXd eigenvalues; // length d, nonincreasing, >= 0
    int retained_dim = 0;
    double energy_threshold = 0.0;
};

enum class PcaPath { automatic, covariance, gram };

namespace detail {

// Each basis column's largest-magnitude entry is made nonnegative so the
// decomposition is reproducible across eigensolvers.
inline void canonicalize_signs(Eigen::MatrixXd& basis) {
    for (Eigen::Index c = 0; c < basis.cols(); ++c) {
        Eigen::Index imax = 0;
        basis.col(c).cwiseAbs().maxCoeff(&imax);
        if (basis(imax, c) < 0.0) basis.col(c) = -basis.col(c);
    }
}

} // namespace detail

// Sample-covariance PCA (divisor n). When d > n the spectrum is recovered
// from the n x n Gram matrix of the centered data, which shares the nonzero
// eigenvalues of the d x d covariance. Throws ZeroVariance when the total
// eigenvalue mass is below 1e-12 (all points identical).
inline PcaModel fit_pca(const Eigen::MatrixXd& features, double energy_threshold,
                        PcaPath path = PcaPath::automatic) {
    const Eigen::Index n = features.rows();
    const Eigen::Index d = features.cols();
    if (n < 2) throw DegenerateInput("fit_pca: need at least 2 rows, got " + std::to_string(n));
    if (d < 1) throw DimensionMismatch("fit_pca: need at least 1 feature column");
    if (!(energy_threshold > 0.0) || energy_threshold > 1.0)
        throw std::invalid_argument("fit_pca: energy_threshold must be in (0, 1]");
    if (!features.allFinite()) throw std::invalid_argument("fit_pca: features must be finite");

    PcaModel model;
    model.energy_threshold = energy_threshold;
    model.mean = features.colwise().mean();
    const Eigen::MatrixXd centered = features.rowwise() - model.mean.transpose();

    if (path == PcaPath::automatic) path = (d > n) ? PcaPath::gram : PcaPath::covariance;

    Eigen::VectorXd eigenvalues = Eigen::VectorXd::Zero(d); // descending, zero-padded
    Eigen::MatrixXd vectors;                                // d x r, matching leading eigenvalues

    if (path == PcaPath::covariance) {
        const Eigen::MatrixXd cov =
            (centered.transpose() * centered) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("fit_pca: eigendecomposition failed");
        // Eigen returns ascending order; flip to descending.
        eigenvalues = solver.eigenvalues().reverse();
        vectors = solver.eigenvectors().rowwise().reverse();
    } else {
        const Eigen::MatrixXd gram =
            (centered * centered.transpose()) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        if (solver.info() != Eigen::Success)
            throw std::runtime_error("fit_pca: eigendecomposition failed");
        const Eigen::VectorXd gvals = solver.eigenvalues().reverse();
        const Eigen::MatrixXd gvecs = solver.eigenvectors().rowwise().reverse();
        // Gram eigenpair (lambda, u) maps to covariance eigenvector
        // X_c^T u / sqrt(n * lambda) for lambda > 0.
        const Eigen::Index r = std::min(n, d);
        vectors = Eigen::MatrixXd::Zero(d, r);
        for (Eigen::Index i = 0; i < r; ++i) {
            const double lambda = std::max(gvals(i), 0.0);
            eigenvalues(i) = lambda;
            if (lambda * static_cast<double>(n) > 0.0) {
                vectors.col(i) = centered.transpose() * gvecs.col(i) /
                                 std::sqrt(lambda * static_cast<double>(n));
            }
        }
    }

    for (Eigen::Index i = 0; i < d; ++i) {
        if (eigenvalues(i) < -1e-10)
            throw std::runtime_error("fit_pca: covariance produced eigenvalue " +
                                     std::to_string(eigenvalues(i)));
        eigenvalues(i) = std::max(eigenvalues(i), 0.0);
    }

    const double total = eigenvalues.sum();
    if (total < 1e-12) throw ZeroVariance("fit_pca: total eigenvalue mass below 1e-12");

    // Smallest k whose cumulative energy reaches the threshold; threshold 1.0
    // keeps exactly the nonzero spectrum (rank of the covariance).
    int k = 0;
    double cum = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
        cum += eigenvalues(i);
        k = static_cast<int>(i) + 1;
        if (cum / total >= energy_threshold) break;
    }
    while (k > 1 && eigenvalues(k - 1) <= 0.0) --k;

    model.eigenvalues = eigenvalues;
    model.retained_dim = k;
    model.basis = vectors.leftCols(k);
    detail::canonicalize_signs(model.basis);
    return model;
}

inline Eigen::MatrixXd project(const PcaModel& model, const Eigen::MatrixXd& features) {
    if (features.cols() != model.mean.size())
        throw DimensionMismatch("project: features have " + std::to_string(features.cols()) +
                                " columns, model expects " + std::to_string(model.mean.size()));
    return (features.rowwise() - model.mean.transpose()) * model.basis;
}

} // namespace ckrank
