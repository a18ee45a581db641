#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ciegad/geometry.hpp"

namespace ciegad {

/// One k-means cell of a class: ids of its members plus the converged centroid.
struct ClusterModel {
    std::string class_label;
    int cluster_id = 0;
    std::vector<std::string> member_ids;
    Embedding centroid;

    std::size_t size() const { return member_ids.size(); }
};

/// Per-class cluster count: min(ceil(sqrt(n / kappa)) + 2, high), floored at
/// `low`. The sqrt term is already >= 1 for n >= 1, so the default floor of 3
/// is implied; `low` only matters when raised above 3. Callers that feed the
/// result to k-means clamp it to the sample count separately (see
/// effective_cluster_count).
inline int cluster_count(std::int64_t n_samples, double kappa, int high, int low = 3) {
    if (n_samples < 1) throw InvalidInputError("cluster_count requires n_samples >= 1");
    if (kappa <= 0.0) throw InvalidInputError("cluster_count requires kappa > 0");
    if (high < 1 || low < 1 || high < low) {
        throw InvalidInputError("cluster_count requires 1 <= low <= high");
    }
    const double root = std::sqrt(static_cast<double>(n_samples) / kappa);
    const auto k = static_cast<std::int64_t>(std::ceil(root)) + 2;
    const auto capped = std::min<std::int64_t>(k, high);
    return static_cast<int>(std::max<std::int64_t>(capped, low));
}

/// cluster_count clamped so k-means remains feasible on tiny classes.
inline int effective_cluster_count(std::int64_t n_samples, double kappa, int high,
                                   int low = 3) {
    return static_cast<int>(std::min<std::int64_t>(
        cluster_count(n_samples, kappa, high, low), n_samples));
}

struct KMeansResult {
    std::vector<std::vector<int>> members;  // cluster -> sorted point indices
    std::vector<Embedding> centroids;
    std::vector<double> inertia_history;  // WCSS after each assignment pass
    int iterations = 0;
    bool converged = false;
};

namespace detail {

inline double sq_euclidean(const Embedding& a, const Embedding& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

/// k-means++ seeding driven entirely by the given RNG.
inline std::vector<Embedding> kmeanspp_init(std::span<const Embedding> X, int K,
                                            std::mt19937_64& rng) {
    const auto n = X.size();
    std::vector<Embedding> centers;
    centers.reserve(K);
    std::uniform_int_distribution<std::size_t> first(0, n - 1);
    centers.push_back(X[first(rng)]);

    std::vector<double> d2(n);
    for (int c = 1; c < K; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const Embedding& ctr : centers) {
                best = std::min(best, sq_euclidean(X[i], ctr));
            }
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (std::size_t i = 0; i < n; ++i) {
                r -= d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
                pick = i;  // fall through to the last index on rounding
            }
        } else {
            // All remaining points coincide with a center; take the lowest
            // index so duplicated inputs still seed deterministically.
            for (std::size_t i = 0; i < n; ++i) {
                if (d2[i] == 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(X[pick]);
    }
    return centers;
}

}  // namespace detail

/// Lloyd iterations with k-means++ seeding. Deterministic for a fixed
/// (X, K, seed): ties in assignment go to the lower cluster index, empty
/// clusters are re-seeded with the point farthest from its assigned centroid,
/// and iteration stops when assignments are stable, centroids move less than
/// 1e-7, or 300 iterations elapse.
inline KMeansResult kmeans_partition(std::span<const Embedding> X, int K,
                                     std::uint64_t seed) {
    if (K < 1) throw InvalidInputError("kmeans requires K >= 1");
    if (X.size() < static_cast<std::size_t>(K)) {
        throw InsufficientDataError("kmeans needs at least K samples: K=" +
                                    std::to_string(K) + ", n=" +
                                    std::to_string(X.size()));
    }
    constexpr int kMaxIter = 300;
    constexpr double kMoveTol = 1e-7;
    const auto n = X.size();

    std::mt19937_64 rng(seed);
    std::vector<Embedding> centers = detail::kmeanspp_init(X, K, rng);
    std::vector<int> assign(n, -1);
    KMeansResult result;

    for (int iter = 0; iter < kMaxIter; ++iter) {
        bool changed = false;
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            int best = 0;
            double best_d = detail::sq_euclidean(X[i], centers[0]);
            for (int c = 1; c < K; ++c) {
                const double d = detail::sq_euclidean(X[i], centers[c]);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
            inertia += best_d;
        }

        // Re-seed empty clusters with the globally worst-fitting point.
        std::vector<int> sizes(K, 0);
        for (int a : assign) ++sizes[a];
        for (int c = 0; c < K; ++c) {
            if (sizes[c] > 0) continue;
            std::size_t worst = 0;
            double worst_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (sizes[assign[i]] <= 1) continue;  // do not empty another cluster
                const double d = detail::sq_euclidean(X[i], centers[assign[i]]);
                if (d > worst_d) {
                    worst_d = d;
                    worst = i;
                }
            }
            --sizes[assign[worst]];
            assign[worst] = c;
            ++sizes[c];
            centers[c] = X[worst];  // keeps the WCSS descent intact
            changed = true;
        }

        result.inertia_history.push_back(inertia);
        result.iterations = iter + 1;

        // Update step.
        std::vector<Embedding> next(K, Embedding(X[0].size(), 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < X[i].size(); ++j) next[assign[i]][j] += X[i][j];
        }
        double max_move = 0.0;
        for (int c = 0; c < K; ++c) {
            const double inv = 1.0 / sizes[c];
            for (double& v : next[c]) v *= inv;
            max_move = std::max(max_move, detail::sq_euclidean(next[c], centers[c]));
        }
        centers = std::move(next);

        if (!changed || std::sqrt(max_move) < kMoveTol) {
            result.converged = true;
            break;
        }
    }

    result.members.assign(K, {});
    for (std::size_t i = 0; i < n; ++i) {
        result.members[assign[i]].push_back(static_cast<int>(i));
    }
    // Exact means over the final assignment, so the ClusterModel invariant
    // centroid == mean(member embeddings) holds regardless of when we stopped.
    result.centroids.assign(K, Embedding(X[0].size(), 0.0));
    for (int c = 0; c < K; ++c) {
        for (int i : result.members[c]) {
            for (std::size_t j = 0; j < X[i].size(); ++j) {
                result.centroids[c][j] += X[i][j];
            }
        }
        const double inv = 1.0 / static_cast<double>(result.members[c].size());
        for (double& v : result.centroids[c]) v *= inv;
    }
    return result;
}

/// kmeans_partition plus the mapping back to sample ids.
inline std::vector<ClusterModel> kmeans(std::span<const Embedding> X,
                                        std::span<const std::string> ids,
                                        const std::string& class_label, int K,
                                        std::uint64_t seed) {
    if (X.size() != ids.size()) {
        throw InvalidInputError("kmeans: ids and embeddings differ in length");
    }
    const KMeansResult part = kmeans_partition(X, K, seed);
    std::vector<ClusterModel> clusters;
    clusters.reserve(K);
    for (int c = 0; c < K; ++c) {
        ClusterModel m;
        m.class_label = class_label;
        m.cluster_id = c;
        m.centroid = part.centroids[c];
        m.member_ids.reserve(part.members[c].size());
        for (int i : part.members[c]) m.member_ids.push_back(ids[i]);
        clusters.push_back(std::move(m));
    }
    return clusters;
}

}  // namespace ciegad
