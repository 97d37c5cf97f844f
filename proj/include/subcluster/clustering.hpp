#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "subcluster/errors.hpp"
#include "subcluster/matrix.hpp"
#include "subcluster/rng.hpp"

namespace subcluster {

struct ClusterOptions {
    std::size_t max_iters = 100;     // Lloyd iteration cap
    std::size_t split_restarts = 1;  // 2-means attempts per split test

    friend bool operator==(const ClusterOptions&, const ClusterOptions&) = default;
};

struct ClusterResult {
    std::size_t k = 0;
    Matrix centroids;             // (k, d)
    std::vector<int> assignment;  // per point, in [0, k)
    double inertia = 0.0;
};

namespace detail {

inline std::size_t nearest_centroid(const Matrix& points, std::size_t i,
                                    const Matrix& centroids) {
    std::size_t best = 0;
    double best_d = sq_euclidean(points.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
        const double d = sq_euclidean(points.row(i), centroids.row(c));
        if (d < best_d) {  // ties keep the lowest index
            best_d = d;
            best = c;
        }
    }
    return best;
}

}  // namespace detail

// K-Means++ seeding: first center uniform, later centers sampled with
// probability proportional to squared distance from the nearest chosen
// center. A zero total weight (all candidates coincide with a center)
// falls back to a uniform index draw.
inline Matrix kmeanspp_seed(const Matrix& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.rows();
    if (n == 0) throw EmptyInputError("kmeanspp_seed: no points");
    if (k == 0) throw ParameterError("kmeanspp_seed: k must be positive");
    if (k > n)
        throw ParameterError("kmeanspp_seed: k=" + std::to_string(k) + " exceeds " +
                             std::to_string(n) + " points");

    Matrix centers(k, points.cols());
    centers.set_row(0, points.row(rng.next_index(n)));
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_euclidean(points.row(i), centers.row(0));

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick;
        if (total > 0.0) {
            const double r = rng.next_uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.next_index(n);
        }
        centers.set_row(c, points.row(pick));
        for (std::size_t i = 0; i < n; ++i)
            d2[i] = std::min(d2[i], sq_euclidean(points.row(i), centers.row(c)));
    }
    return centers;
}

// Lloyd iterations from the given centroids until the assignment reaches a
// fixpoint or max_iters. Clusters left empty after an assignment step are
// repaired by donating the point farthest from its own centroid, drawn from
// clusters that would still keep at least one member.
inline ClusterResult lloyd(const Matrix& points, Matrix centroids, std::size_t max_iters = 100) {
    const std::size_t n = points.rows();
    const std::size_t k = centroids.rows();
    if (n == 0) throw EmptyInputError("lloyd: no points");
    if (k == 0 || k > n) throw ParameterError("lloyd: need 1 <= k <= number of points");
    if (centroids.cols() != points.cols())
        throw DimensionError("lloyd: centroid dimension mismatch");

    std::vector<int> assignment(n, -1);
    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        std::vector<int> next(n);
        for (std::size_t i = 0; i < n; ++i)
            next[i] = static_cast<int>(detail::nearest_centroid(points, i, centroids));

        std::vector<std::size_t> counts(k, 0);
        for (int a : next) ++counts[static_cast<std::size_t>(a)];
        for (std::size_t e = 0; e < k; ++e) {
            if (counts[e] != 0) continue;
            long donor = -1;
            double donor_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const auto home = static_cast<std::size_t>(next[i]);
                if (counts[home] < 2) continue;
                const double d = sq_euclidean(points.row(i), centroids.row(home));
                if (d > donor_d) {
                    donor_d = d;
                    donor = static_cast<long>(i);
                }
            }
            if (donor < 0) throw DegenerateInputError("lloyd: cannot repair empty cluster");
            --counts[static_cast<std::size_t>(next[static_cast<std::size_t>(donor)])];
            next[static_cast<std::size_t>(donor)] = static_cast<int>(e);
            counts[e] = 1;
        }

        if (next == assignment) break;
        assignment = std::move(next);

        centroids = Matrix(k, points.cols());
        std::vector<std::size_t> sizes(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(assignment[i]);
            ++sizes[c];
            for (std::size_t j = 0; j < points.cols(); ++j) centroids(c, j) += points(i, j);
        }
        for (std::size_t c = 0; c < k; ++c)
            for (std::size_t j = 0; j < points.cols(); ++j)
                centroids(c, j) /= static_cast<double>(sizes[c]);
    }

    ClusterResult result;
    result.k = k;
    result.assignment = std::move(assignment);
    result.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        result.inertia += sq_euclidean(
            points.row(i), centroids.row(static_cast<std::size_t>(result.assignment[i])));
    result.centroids = std::move(centroids);
    return result;
}

inline ClusterResult kmeans(const Matrix& points, std::size_t k, Rng& rng,
                            const ClusterOptions& opts = {}) {
    return lloyd(points, kmeanspp_seed(points, k, rng), opts.max_iters);
}

// BIC of a spherical-Gaussian mixture fit: log-likelihood of the clustering
// under a shared variance estimate, penalized by (p/2) ln R free parameters
// with p = (k-1) + k*d + 1.
inline double bic_score(const Matrix& points, const Matrix& centroids,
                        const std::vector<int>& assignment) {
    const std::size_t n = points.rows();
    const std::size_t k = centroids.rows();
    const std::size_t d = points.cols();
    if (n == 0) throw EmptyInputError("bic_score: no points");
    if (assignment.size() != n) throw DimensionError("bic_score: assignment size mismatch");

    double inertia = 0.0;
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto c = static_cast<std::size_t>(assignment[i]);
        if (c >= k) throw LabelError("bic_score: assignment out of range");
        ++sizes[c];
        inertia += sq_euclidean(points.row(i), centroids.row(c));
    }

    const double r = static_cast<double>(n);
    double variance = n > k ? inertia / (r - static_cast<double>(k)) : 0.0;
    variance = std::max(variance, 1e-12);

    double loglik = -r * std::log(r);
    for (std::size_t c = 0; c < k; ++c) {
        if (sizes[c] == 0) continue;
        const double rc = static_cast<double>(sizes[c]);
        loglik += rc * std::log(rc);
    }
    loglik -= r * static_cast<double>(d) / 2.0 * std::log(2.0 * std::numbers::pi * variance);
    loglik -= (r - static_cast<double>(k)) / 2.0;

    const double params =
        static_cast<double>(k - 1) + static_cast<double>(k * d) + 1.0;
    return loglik - params / 2.0 * std::log(r);
}

// X-Means constrained to at most max_k clusters. Starts from a single
// cluster; each pass walks the clusters in index order and tests a local
// 2-means split, accepting it when the two-cluster BIC on the cluster's own
// points beats the one-cluster BIC. A pass that accepted any split ends
// with a global Lloyd refinement; the search stops when a pass accepts
// nothing or the cap is reached.
inline ClusterResult xmeans_capped(const Matrix& points, std::size_t max_k, Rng& rng,
                                   const ClusterOptions& opts = {}) {
    const std::size_t n = points.rows();
    if (n == 0) throw EmptyInputError("xmeans_capped: no points");
    if (max_k == 0) throw ParameterError("xmeans_capped: max_k must be positive");

    std::vector<std::vector<double>> centers;
    {
        std::vector<double> mean(points.cols(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < points.cols(); ++j) mean[j] += points(i, j);
        for (double& v : mean) v /= static_cast<double>(n);
        centers.push_back(std::move(mean));
    }
    std::vector<int> assignment(n, 0);

    while (centers.size() < max_k) {
        const std::size_t pass_k = centers.size();
        bool improved = false;
        for (std::size_t c = 0; c < pass_k && centers.size() < max_k; ++c) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < n; ++i)
                if (static_cast<std::size_t>(assignment[i]) == c) members.push_back(i);
            if (members.size() < 3) continue;

            const Matrix local = gather_rows(points, members);
            Matrix parent_center(1, local.cols());
            for (std::size_t i = 0; i < local.rows(); ++i)
                for (std::size_t j = 0; j < local.cols(); ++j)
                    parent_center(0, j) += local(i, j);
            for (std::size_t j = 0; j < local.cols(); ++j)
                parent_center(0, j) /= static_cast<double>(local.rows());
            const double parent_bic =
                bic_score(local, parent_center, std::vector<int>(local.rows(), 0));

            ClusterResult best_split;
            bool have_split = false;
            for (std::size_t attempt = 0; attempt < opts.split_restarts; ++attempt) {
                ClusterResult split = kmeans(local, 2, rng, opts);
                if (!have_split || split.inertia < best_split.inertia) {
                    best_split = std::move(split);
                    have_split = true;
                }
            }
            const double child_bic =
                bic_score(local, best_split.centroids, best_split.assignment);
            if (child_bic <= parent_bic) continue;

            const std::size_t fresh = centers.size();
            centers[c].assign(best_split.centroids.row(0).begin(),
                              best_split.centroids.row(0).end());
            centers.emplace_back(best_split.centroids.row(1).begin(),
                                 best_split.centroids.row(1).end());
            for (std::size_t m = 0; m < members.size(); ++m)
                if (best_split.assignment[m] == 1)
                    assignment[members[m]] = static_cast<int>(fresh);
            improved = true;
        }
        if (!improved) break;
        ClusterResult refined = lloyd(points, Matrix::from_rows(centers), opts.max_iters);
        assignment = refined.assignment;
        centers.clear();
        for (std::size_t c = 0; c < refined.k; ++c)
            centers.emplace_back(refined.centroids.row(c).begin(),
                                 refined.centroids.row(c).end());
    }

    ClusterResult result;
    result.k = centers.size();
    result.centroids = Matrix::from_rows(centers);
    result.assignment = std::move(assignment);
    result.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        result.inertia += sq_euclidean(
            points.row(i), result.centroids.row(static_cast<std::size_t>(result.assignment[i])));
    return result;
}

}  // namespace subcluster
