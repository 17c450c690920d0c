#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "ckrank/gmm.hpp"
#include "ckrank/rng.hpp"
#include "ckrank/types.hpp"

using ckrank::fit_gmm;
using ckrank::GaussianMixture;
using ckrank::log_likelihood;
using ckrank::MeasureConfig;
using ckrank::posterior;
using ckrank::Rng;

namespace {

Eigen::MatrixXd gaussian_points(Rng& rng, Eigen::Index n, Eigen::Index k,
                                const Eigen::VectorXd& center, double sigma = 1.0) {
    Eigen::MatrixXd pts(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < k; ++j) pts(i, j) = center(j) + sigma * rng.normal();
    return pts;
}

// Naive per-point mixture log-likelihood: scalar loops, explicit inverse.
double log_likelihood_oracle(const GaussianMixture& model, const Eigen::MatrixXd& points) {
    const Eigen::Index k = model.dim();
    double total = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i) {
        double density = 0.0;
        for (Eigen::Index v = 0; v < model.weights.size(); ++v) {
            const Eigen::MatrixXd& cov = model.covariances[static_cast<std::size_t>(v)];
            const Eigen::VectorXd diff =
                points.row(i).transpose() - model.means.row(v).transpose();
            const double quad = diff.dot(cov.inverse() * diff);
            const double norm = std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(k)) /
                                std::sqrt(cov.determinant());
            density += model.weights(v) * norm * std::exp(-0.5 * quad);
        }
        total += std::log(density);
    }
    return total / static_cast<double>(points.rows());
}

} // namespace

TEST_CASE("single component recovers the closed-form estimate") {
    Rng rng(3);
    const Eigen::MatrixXd pts = gaussian_points(rng, 60, 3, Eigen::VectorXd::Zero(3), 2.0);
    MeasureConfig config;
    config.seed = 99;
    const GaussianMixture model = fit_gmm(pts, 1, config);

    const Eigen::RowVectorXd mean = pts.colwise().mean();
    const Eigen::MatrixXd centered = pts.rowwise() - mean;
    Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(pts.rows());
    cov.diagonal().array() += model.ridge_lambda;

    REQUIRE(model.num_components == 1);
    REQUIRE(model.weights(0) == Catch::Approx(1.0).margin(1e-15));
    REQUIRE((model.means.row(0) - mean).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((model.covariances[0] - cov).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("two well-separated blobs are recovered") {
    Rng rng(17);
    Eigen::VectorXd c0 = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(2);
    c1(0) = 12.0; // separation 12 sigma
    Eigen::MatrixXd pts(90, 2);
    pts.topRows(60) = gaussian_points(rng, 60, 2, c0);
    pts.bottomRows(30) = gaussian_points(rng, 30, 2, c1);

    MeasureConfig config;
    config.seed = 5;
    const GaussianMixture model = fit_gmm(pts, 2, config);
    REQUIRE(model.num_components == 2);

    const Eigen::RowVectorXd m0 = model.means.row(0);
    const Eigen::RowVectorXd m1 = model.means.row(1);
    const bool first_is_c0 = (m0 - c0.transpose()).norm() < (m1 - c0.transpose()).norm();
    const Eigen::RowVectorXd near0 = first_is_c0 ? m0 : m1;
    const Eigen::RowVectorXd near1 = first_is_c0 ? m1 : m0;
    REQUIRE((near0 - c0.transpose()).norm() < 0.5);
    REQUIRE((near1 - c1.transpose()).norm() < 0.5);
    const double w0 = first_is_c0 ? model.weights(0) : model.weights(1);
    REQUIRE(w0 == Catch::Approx(2.0 / 3.0).margin(0.1));
}

TEST_CASE("identical points settle on the ridge floor") {
    Eigen::MatrixXd pts = Eigen::MatrixXd::Constant(20, 2, 3.0);
    MeasureConfig config;
    config.seed = 1;
    const GaussianMixture model = fit_gmm(pts, 2, config);
    for (const auto& cov : model.covariances) {
        REQUIRE(cov.allFinite());
        // Zero sample covariance leaves exactly the ridge load.
        REQUIRE(cov(0, 0) == Catch::Approx(model.ridge_lambda).epsilon(1e-9));
        REQUIRE(cov(1, 1) == Catch::Approx(model.ridge_lambda).epsilon(1e-9));
    }
    const Eigen::MatrixXd post = posterior(model, pts);
    REQUIRE(post.allFinite());
    REQUIRE(std::isfinite(model.final_log_likelihood));
}

TEST_CASE("posterior basics") {
    SECTION("single component posterior is exactly one") {
        Rng rng(7);
        const Eigen::MatrixXd pts = gaussian_points(rng, 30, 2, Eigen::VectorXd::Zero(2));
        MeasureConfig config;
        const GaussianMixture model = fit_gmm(pts, 1, config);
        const Eigen::MatrixXd post = posterior(model, pts);
        REQUIRE(post.cols() == 1);
        REQUIRE((post.array() == 1.0).all());
    }
    SECTION("identical components split evenly") {
        GaussianMixture model;
        model.num_components = 2;
        model.weights = Eigen::VectorXd::Constant(2, 0.5);
        model.means = Eigen::MatrixXd::Zero(2, 2);
        model.covariances = {Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2)};
        model.refresh_cache();
        Eigen::MatrixXd pts(3, 2);
        pts << 0, 0, 1, -1, 4, 2;
        const Eigen::MatrixXd post = posterior(model, pts);
        for (Eigen::Index i = 0; i < post.rows(); ++i) {
            REQUIRE(post(i, 0) == Catch::Approx(0.5).margin(1e-12));
            REQUIRE(post(i, 1) == Catch::Approx(0.5).margin(1e-12));
        }
    }
    SECTION("point at one of two far components is claimed by it") {
        GaussianMixture model;
        model.num_components = 2;
        model.weights = Eigen::VectorXd::Constant(2, 0.5);
        model.means = Eigen::MatrixXd::Zero(2, 1);
        model.means(1, 0) = 10.0; // 10 sigma apart, density ratio exp(-50)
        model.covariances = {Eigen::MatrixXd::Identity(1, 1), Eigen::MatrixXd::Identity(1, 1)};
        model.refresh_cache();
        Eigen::MatrixXd pts(1, 1);
        pts << 0.0;
        const Eigen::MatrixXd post = posterior(model, pts);
        REQUIRE(post(0, 0) >= 1.0 - 1e-6);
    }
    SECTION("dimension mismatch throws") {
        Rng rng(9);
        const Eigen::MatrixXd pts = gaussian_points(rng, 20, 2, Eigen::VectorXd::Zero(2));
        MeasureConfig config;
        const GaussianMixture model = fit_gmm(pts, 1, config);
        Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 3);
        REQUIRE_THROWS_AS(posterior(model, bad), ckrank::DimensionMismatch);
    }
}

TEST_CASE("log likelihood") {
    SECTION("standard normal at its mode") {
        GaussianMixture model;
        model.num_components = 1;
        model.weights = Eigen::VectorXd::Ones(1);
        model.means = Eigen::MatrixXd::Zero(1, 1);
        model.covariances = {Eigen::MatrixXd::Identity(1, 1)};
        model.refresh_cache();
        Eigen::MatrixXd pts(1, 1);
        pts << 0.0;
        REQUIRE(log_likelihood(model, pts) ==
                Catch::Approx(-0.9189385332046727).margin(1e-12));
    }
    SECTION("matches the naive per-point oracle") {
        Rng rng(21);
        const Eigen::MatrixXd pts = gaussian_points(rng, 50, 3, Eigen::VectorXd::Zero(3));
        MeasureConfig config;
        config.seed = 2;
        const GaussianMixture model = fit_gmm(pts, 3, config);
        const Eigen::MatrixXd eval = gaussian_points(rng, 40, 3, Eigen::VectorXd::Ones(3));
        REQUIRE(log_likelihood(model, eval) ==
                Catch::Approx(log_likelihood_oracle(model, eval)).margin(1e-9));
    }
    SECTION("converged model beats its first iterate") {
        Rng rng(33);
        Eigen::MatrixXd pts(80, 2);
        pts.topRows(40) = gaussian_points(rng, 40, 2, Eigen::VectorXd::Zero(2));
        Eigen::VectorXd shift = Eigen::VectorXd::Constant(2, 6.0);
        pts.bottomRows(40) = gaussian_points(rng, 40, 2, shift);
        MeasureConfig config;
        config.seed = 4;
        const GaussianMixture model = fit_gmm(pts, 2, config);
        REQUIRE(model.final_log_likelihood >= model.ll_trajectory.front() - 1e-9);
    }
}

TEST_CASE("em mean log-likelihood is nondecreasing") {
    Rng rng(55);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 30 + static_cast<Eigen::Index>(rng.uniform_index(60));
        const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng.uniform_index(4));
        Eigen::VectorXd center(k);
        for (Eigen::Index j = 0; j < k; ++j) center(j) = rng.uniform(-3.0, 3.0);
        const Eigen::MatrixXd pts = gaussian_points(rng, n, k, center, 1.5);
        MeasureConfig config;
        config.seed = 100 + static_cast<std::uint64_t>(trial);
        const GaussianMixture model =
            fit_gmm(pts, 1 + static_cast<int>(rng.uniform_index(4)), config);
        for (std::size_t i = 1; i < model.ll_trajectory.size(); ++i)
            REQUIRE(model.ll_trajectory[i] >= model.ll_trajectory[i - 1] - 1e-9);
    }
}

TEST_CASE("posterior rows always sum to one") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        const Eigen::Index n = 20 + static_cast<Eigen::Index>(rng.uniform_index(50));
        const Eigen::MatrixXd pts = gaussian_points(rng, n, 3, Eigen::VectorXd::Zero(3), 2.0);
        MeasureConfig config;
        config.seed = static_cast<std::uint64_t>(trial);
        const GaussianMixture model =
            fit_gmm(pts, 1 + static_cast<int>(rng.uniform_index(5)), config);
        const Eigen::MatrixXd post = posterior(model, pts);
        for (Eigen::Index i = 0; i < post.rows(); ++i) {
            REQUIRE(post.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
            REQUIRE(post.row(i).minCoeff() >= 0.0);
        }
    }
}

TEST_CASE("fit is deterministic and order-independent") {
    Rng rng(91);
    Eigen::MatrixXd pts(60, 2);
    pts.topRows(30) = gaussian_points(rng, 30, 2, Eigen::VectorXd::Zero(2));
    Eigen::VectorXd shift = Eigen::VectorXd::Constant(2, 5.0);
    pts.bottomRows(30) = gaussian_points(rng, 30, 2, shift);
    MeasureConfig config;
    config.seed = 1234;

    const GaussianMixture a = fit_gmm(pts, 2, config);
    const GaussianMixture b = fit_gmm(pts, 2, config);
    REQUIRE((a.weights.array() == b.weights.array()).all());
    REQUIRE((a.means.array() == b.means.array()).all());
    for (std::size_t v = 0; v < a.covariances.size(); ++v)
        REQUIRE((a.covariances[v].array() == b.covariances[v].array()).all());

    // Shuffled row order: bit-identical parameters.
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(pts.rows()));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    Rng shuffle_rng(4711);
    for (std::size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[shuffle_rng.uniform_index(i)]);
    Eigen::MatrixXd shuffled(pts.rows(), pts.cols());
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        shuffled.row(i) = pts.row(perm[static_cast<std::size_t>(i)]);
    const GaussianMixture c = fit_gmm(shuffled, 2, config);
    REQUIRE((a.weights.array() == c.weights.array()).all());
    REQUIRE((a.means.array() == c.means.array()).all());
}

TEST_CASE("no NaN even for extreme outliers") {
    Rng rng(13);
    const Eigen::MatrixXd pts = gaussian_points(rng, 40, 2, Eigen::VectorXd::Zero(2));
    MeasureConfig config;
    config.seed = 8;
    const GaussianMixture model = fit_gmm(pts, 3, config);
    Eigen::MatrixXd far(2, 2);
    far << 1e3, 1e3, -1e3, 2e3;
    const Eigen::MatrixXd post = posterior(model, far);
    REQUIRE(post.allFinite());
    for (Eigen::Index i = 0; i < post.rows(); ++i)
        REQUIRE(post.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
    REQUIRE(std::isfinite(log_likelihood(model, far)));
}

TEST_CASE("component count is clamped against tiny samples") {
    Rng rng(29);
    const Eigen::MatrixXd pts = gaussian_points(rng, 20, 2, Eigen::VectorXd::Zero(2));
    MeasureConfig config;
    const GaussianMixture model = fit_gmm(pts, 10, config);
    REQUIRE(model.num_components == 2); // min(10, max(2, 20/10))
    REQUIRE(model.component_cap_applied);

    const GaussianMixture uncapped = fit_gmm(pts, 2, config);
    REQUIRE_FALSE(uncapped.component_cap_applied);
}

TEST_CASE("gmm rejects degenerate input") {
    Eigen::MatrixXd one_point = Eigen::MatrixXd::Zero(1, 2);
    MeasureConfig config;
    REQUIRE_THROWS_AS(fit_gmm(one_point, 1, config), ckrank::DegenerateInput);
    Eigen::MatrixXd ok = Eigen::MatrixXd::Random(10, 2);
    REQUIRE_THROWS_AS(fit_gmm(ok, 0, config), std::invalid_argument);
}

TEST_CASE("diagonal covariance option") {
    Rng rng(43);
    Eigen::MatrixXd pts = gaussian_points(rng, 50, 3, Eigen::VectorXd::Zero(3));
    pts.col(1) *= 3.0;
    MeasureConfig config;
    config.covariance_kind = ckrank::CovarianceKind::diagonal;
    config.seed = 3;
    const GaussianMixture model = fit_gmm(pts, 2, config);
    for (const auto& cov : model.covariances) {
        for (Eigen::Index i = 0; i < cov.rows(); ++i)
            for (Eigen::Index j = 0; j < cov.cols(); ++j)
                if (i != j) REQUIRE(cov(i, j) == 0.0);
        REQUIRE(cov.diagonal().minCoeff() >= model.ridge_lambda * (1.0 - 1e-12));
    }
    const Eigen::MatrixXd post = posterior(model, pts);
    for (Eigen::Index i = 0; i < post.rows(); ++i)
        REQUIRE(post.row(i).sum() == Catch::Approx(1.0).margin(1e-9));
}
