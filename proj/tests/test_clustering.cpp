#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <set>
#include <utility>
#include <vector>

#include "subcluster/clustering.hpp"
#include "subcluster/rng.hpp"

using namespace subcluster;

namespace {

// Independent BIC reference: same spherical-Gaussian model, but written as
// mixing proportions plus an explicit quadratic term instead of the closed
// form used by the library.
double oracle_bic(const Matrix& points, const Matrix& centroids,
                  const std::vector<int>& assignment) {
    const double r = static_cast<double>(points.rows());
    const double d = static_cast<double>(points.cols());
    const double k = static_cast<double>(centroids.rows());
    std::vector<double> sizes(centroids.rows(), 0.0);
    double inertia = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto c = static_cast<std::size_t>(assignment[i]);
        sizes[c] += 1.0;
        inertia += sq_euclidean(points.row(i), centroids.row(c));
    }
    double variance = r > k ? inertia / (r - k) : 0.0;
    variance = std::max(variance, 1e-12);
    double loglik = 0.0;
    for (double rn : sizes)
        if (rn > 0.0) loglik += rn * std::log(rn / r);
    loglik -= r * d / 2.0 * std::log(2.0 * std::numbers::pi * variance);
    loglik -= inertia / (2.0 * variance);
    const double params = (k - 1.0) + k * d + 1.0;
    return loglik - params / 2.0 * std::log(r);
}

Matrix gaussian_blobs(Rng& rng, const std::vector<std::vector<double>>& centers,
                      std::size_t per_center, double sigma, std::vector<int>* truth = nullptr) {
    const std::size_t d = centers.front().size();
    Matrix points(centers.size() * per_center, d);
    std::size_t row = 0;
    for (std::size_t c = 0; c < centers.size(); ++c)
        for (std::size_t i = 0; i < per_center; ++i) {
            for (std::size_t j = 0; j < d; ++j)
                points(row, j) = centers[c][j] + sigma * rng.next_gaussian();
            if (truth) truth->push_back(static_cast<int>(c));
            ++row;
        }
    return points;
}

// Fraction of points whose cluster agrees with ground truth under the best
// greedy cluster-to-truth matching.
double purity(const std::vector<int>& assignment, const std::vector<int>& truth,
              std::size_t k) {
    std::size_t agree = 0;
    for (std::size_t c = 0; c < k; ++c) {
        std::vector<std::size_t> counts;
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            if (static_cast<std::size_t>(assignment[i]) != c) continue;
            const auto t = static_cast<std::size_t>(truth[i]);
            if (t >= counts.size()) counts.resize(t + 1, 0);
            ++counts[t];
        }
        std::size_t best = 0;
        for (std::size_t v : counts) best = std::max(best, v);
        agree += best;
    }
    return static_cast<double>(agree) / static_cast<double>(assignment.size());
}

}  // namespace

TEST_CASE("bic_score matches the independent reference") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Rng rng(seed);
        const std::size_t k = 1 + rng.next_index(4);
        std::vector<std::vector<double>> centers;
        for (std::size_t c = 0; c < k + 1; ++c)
            centers.push_back(rng.gaussian(3, 0.0, 5.0));
        const Matrix points = gaussian_blobs(rng, centers, 12, 1.0);
        const ClusterResult res = kmeans(points, k, rng);
        const double mine = bic_score(points, res.centroids, res.assignment);
        const double ref = oracle_bic(points, res.centroids, res.assignment);
        INFO("seed " << seed << " k " << k);
        CHECK_THAT(mine, Catch::Matchers::WithinRel(ref, 1e-9));
    }
}

TEST_CASE("bic prefers one cluster on a single gaussian") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const Matrix points = gaussian_blobs(rng, {{0.0, 0.0}}, 50, 1.0);
        Matrix mean(1, 2);
        for (std::size_t i = 0; i < points.rows(); ++i)
            for (std::size_t j = 0; j < 2; ++j) mean(0, j) += points(i, j) / 50.0;
        const double bic1 = bic_score(points, mean, std::vector<int>(50, 0));
        const ClusterResult split = kmeans(points, 2, rng);
        const double bic2 = bic_score(points, split.centroids, split.assignment);
        INFO("seed " << seed << " bic1 " << bic1 << " bic2 " << bic2);
        CHECK(bic1 > bic2);
    }
}

TEST_CASE("bic prefers the split on well-separated pairs") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(seed);
        const Matrix points = gaussian_blobs(rng, {{0.0, 0.0}, {20.0, 0.0}}, 25, 1.0);
        Matrix mean(1, 2);
        for (std::size_t i = 0; i < points.rows(); ++i)
            for (std::size_t j = 0; j < 2; ++j) mean(0, j) += points(i, j) / 50.0;
        const double bic1 = bic_score(points, mean, std::vector<int>(50, 0));
        const ClusterResult split = kmeans(points, 2, rng);
        const double bic2 = bic_score(points, split.centroids, split.assignment);
        CHECK(bic2 > bic1);
    }
}

TEST_CASE("kmeanspp seeding picks distinct data points") {
    Rng rng(4);
    std::vector<int> truth;
    const Matrix points =
        gaussian_blobs(rng, {{0, 0}, {10, 0}, {0, 10}}, 20, 0.5, &truth);
    const Matrix centers = kmeanspp_seed(points, 3, rng);
    REQUIRE(centers.rows() == 3);
    std::set<std::pair<double, double>> unique;
    for (std::size_t c = 0; c < 3; ++c) {
        bool found = false;
        for (std::size_t i = 0; i < points.rows(); ++i)
            if (points(i, 0) == centers(c, 0) && points(i, 1) == centers(c, 1)) found = true;
        CHECK(found);
        unique.insert({centers(c, 0), centers(c, 1)});
    }
    CHECK(unique.size() == 3);
    CHECK_THROWS_AS(kmeanspp_seed(points, 100, rng), ParameterError);
    CHECK_THROWS_AS(kmeanspp_seed(Matrix(), 1, rng), EmptyInputError);
}

TEST_CASE("kmeanspp survives duplicate-only input") {
    Rng rng(8);
    const Matrix points = Matrix::from_rows({{1, 1}, {1, 1}, {1, 1}});
    const Matrix centers = kmeanspp_seed(points, 2, rng);
    CHECK(centers(0, 0) == 1.0);
    CHECK(centers(1, 0) == 1.0);
}

TEST_CASE("lloyd converges on a hand fixture") {
    const Matrix points = Matrix::from_rows({{0.0}, {1.0}, {10.0}, {11.0}});
    const Matrix init = Matrix::from_rows({{0.0}, {10.0}});
    const ClusterResult res = lloyd(points, init);
    CHECK(res.k == 2);
    CHECK(res.assignment == std::vector<int>{0, 0, 1, 1});
    CHECK_THAT(res.centroids(0, 0), Catch::Matchers::WithinAbs(0.5, 1e-12));
    CHECK_THAT(res.centroids(1, 0), Catch::Matchers::WithinAbs(10.5, 1e-12));
    CHECK_THAT(res.inertia, Catch::Matchers::WithinAbs(1.0, 1e-12));
}

TEST_CASE("lloyd repairs empty clusters") {
    const Matrix points = Matrix::from_rows({{0.0}, {0.0}, {0.0}, {10.0}});
    const Matrix init = Matrix::from_rows({{0.0}, {100.0}});
    const ClusterResult res = lloyd(points, init);
    CHECK(res.k == 2);
    CHECK(res.assignment == std::vector<int>{0, 0, 0, 1});
    CHECK_THAT(res.inertia, Catch::Matchers::WithinAbs(0.0, 1e-12));
    CHECK_THROWS_AS(lloyd(points, Matrix(5, 1)), ParameterError);
}

TEST_CASE("kmeans separates far blobs cleanly") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        std::vector<int> truth;
        const Matrix points =
            gaussian_blobs(rng, {{0, 0}, {100, 0}, {0, 100}}, 30, 1.0, &truth);
        const ClusterResult res = kmeans(points, 3, rng);
        CHECK(purity(res.assignment, truth, 3) == 1.0);
    }
}

TEST_CASE("xmeans respects the cluster cap") {
    // Collinear blobs so each binary split cuts the variance well past the
    // mixing-entropy cost; a symmetric square would sit exactly at the
    // rejection threshold of the split criterion.
    Rng rng(6);
    const Matrix points = gaussian_blobs(
        rng, {{0, 0}, {20, 0}, {40, 0}, {60, 0}}, 25, 1.0);
    Rng r1(1);
    CHECK(xmeans_capped(points, 1, r1).k == 1);
    Rng r2(1);
    CHECK(xmeans_capped(points, 2, r2).k == 2);
    Rng r3(1);
    const ClusterResult res = xmeans_capped(points, 10, r3);
    CHECK(res.k == 4);
}

TEST_CASE("xmeans keeps a single gaussian whole") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng data_rng(seed);
        const Matrix points = gaussian_blobs(data_rng, {{0.0, 0.0}}, 50, 1.0);
        Rng rng(seed + 100);
        CHECK(xmeans_capped(points, 5, rng).k == 1);
    }
}

TEST_CASE("xmeans recovers three separated blobs") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng data_rng(seed);
        std::vector<int> truth;
        const Matrix points = gaussian_blobs(
            data_rng, {{0, 0}, {20, 0}, {0, 20}}, 50, 1.0, &truth);
        Rng rng(seed + 100);
        const ClusterResult res = xmeans_capped(points, 5, rng);
        REQUIRE(res.k == 3);
        CHECK(purity(res.assignment, truth, 3) == 1.0);
    }
}

TEST_CASE("xmeans handles degenerate duplicate input") {
    const Matrix points = Matrix::from_rows({{2, 2}, {2, 2}, {2, 2}, {2, 2}});
    Rng rng(1);
    const ClusterResult res = xmeans_capped(points, 3, rng);
    CHECK(res.k == 1);
    CHECK_THAT(res.inertia, Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("clustering is deterministic for a fixed seed") {
    Rng data_rng(2);
    const Matrix points = gaussian_blobs(data_rng, {{0, 0}, {15, 0}}, 40, 1.0);
    Rng a(9), b(9);
    const ClusterResult ra = xmeans_capped(points, 4, a);
    const ClusterResult rb = xmeans_capped(points, 4, b);
    CHECK(ra.k == rb.k);
    CHECK(ra.assignment == rb.assignment);
    CHECK(ra.centroids == rb.centroids);
    CHECK(ra.inertia == rb.inertia);
}

TEST_CASE("clustering error paths") {
    Rng rng(1);
    CHECK_THROWS_AS(xmeans_capped(Matrix(), 3, rng), EmptyInputError);
    const Matrix points = Matrix::from_rows({{0.0}, {1.0}});
    CHECK_THROWS_AS(xmeans_capped(points, 0, rng), ParameterError);
    CHECK_THROWS_AS(kmeans(points, 3, rng), ParameterError);
}
