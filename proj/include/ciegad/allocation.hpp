#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "ciegad/clustering.hpp"
#include "ciegad/geometry.hpp"

namespace ciegad {

/// Two-level quota plan. Budget conservation is exact: class quotas sum to
/// target_total and each class's cluster quotas sum to its class quota,
/// except for classes listed in `unallocated` (no cluster was eligible to
/// receive generation there).
struct AllocationPlan {
    long long target_total = 0;
    std::map<std::string, long long> class_quotas;
    std::map<std::string, std::vector<long long>> cluster_quotas;  // label -> by cluster_id
    std::map<std::string, long long> unallocated;
    std::vector<std::string> notes;
};

struct PriorityWeights {
    double alpha = 0.5;
    double beta = 0.25;
    double gamma = 0.25;
};

/// The three geometric terms and their linear combination v_{y,k}.
struct ClusterPriority {
    double size_term = 0.0;
    double separation_term = 0.0;
    double sparsity_term = 0.0;
    double combined = 0.0;
};

/// T = floor(rho * N).
inline long long budget(long long n_total, double rho) {
    if (n_total < 1) throw InvalidInputError("budget requires n_total >= 1");
    if (rho <= 0.0) throw InvalidInputError("budget requires rho > 0");
    return static_cast<long long>(std::floor(rho * static_cast<double>(n_total)));
}

/// Hamilton apportionment: floor the real shares, then hand out the leftover
/// units by descending fractional remainder (ties to the lower index). The
/// result always sums to `total` exactly, which plain rounding does not.
inline std::vector<long long> largest_remainder(long long total,
                                                std::span<const double> weights) {
    if (weights.empty()) throw InvalidInputError("largest_remainder needs weights");
    if (total < 0) throw InvalidInputError("largest_remainder needs total >= 0");
    double sum = 0.0;
    for (double w : weights) {
        if (w < 0.0 || !std::isfinite(w)) {
            throw InvalidInputError("largest_remainder weights must be finite and >= 0");
        }
        sum += w;
    }
    const std::size_t n = weights.size();
    std::vector<double> share(n);
    if (sum > 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
            share[i] = static_cast<double>(total) * weights[i] / sum;
        }
    } else {
        // Documented fallback: no signal, split uniformly.
        for (std::size_t i = 0; i < n; ++i) {
            share[i] = static_cast<double>(total) / static_cast<double>(n);
        }
    }
    std::vector<long long> out(n);
    long long assigned = 0;
    std::vector<std::pair<double, std::size_t>> rem(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<long long>(std::floor(share[i]));
        assigned += out[i];
        rem[i] = {share[i] - std::floor(share[i]), i};
    }
    std::sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    const long long leftover = total - assigned;
    for (long long j = 0; j < leftover; ++j) {
        ++out[rem[static_cast<std::size_t>(j)].second];
    }
    return out;
}

/// Class-level quotas from inverse-frequency weights w_y = 1 / (N_y + eps),
/// integerized by largest remainder so they sum to T exactly.
inline std::map<std::string, long long> class_quotas(
    const std::map<std::string, long long>& class_counts, long long T,
    double epsilon) {
    if (class_counts.empty()) throw InvalidInputError("class_quotas: no classes");
    if (T < 0) throw InvalidInputError("class_quotas: T must be >= 0");
    if (epsilon <= 0.0) throw InvalidInputError("class_quotas: epsilon must be > 0");
    std::vector<double> weights;
    weights.reserve(class_counts.size());
    for (const auto& [label, count] : class_counts) {
        if (count < 1) {
            throw InvalidInputError("class_quotas: class " + label + " has no samples");
        }
        weights.push_back(1.0 / (static_cast<double>(count) + epsilon));
    }
    const std::vector<long long> q = largest_remainder(T, weights);
    std::map<std::string, long long> out;
    std::size_t i = 0;
    for (const auto& [label, count] : class_counts) {
        (void)count;
        out[label] = q[i++];
    }
    return out;
}

/// Priority score v_{y,k}: inverse size, minimum centroid distance to any
/// sibling cluster, and mean chord displacement of members from the centroid.
/// A class with a single cluster has no sibling to be separated from, so its
/// separation term is 0.
inline ClusterPriority cluster_priority(const ClusterModel& cluster,
                                        std::span<const ClusterModel> siblings,
                                        const PriorityWeights& w,
                                        const EmbeddingMap& embeddings) {
    if (cluster.member_ids.empty()) {
        throw InvalidInputError("cluster_priority: empty cluster");
    }
    ClusterPriority p;
    p.size_term = 1.0 / (static_cast<double>(cluster.size()) + 1e-6);

    double min_sep = std::numeric_limits<double>::max();
    bool has_sibling = false;
    for (const ClusterModel& s : siblings) {
        if (s.class_label == cluster.class_label && s.cluster_id == cluster.cluster_id) {
            continue;
        }
        has_sibling = true;
        min_sep = std::min(min_sep, euclidean(cluster.centroid, s.centroid));
    }
    p.separation_term = has_sibling ? min_sep : 0.0;

    double spars = 0.0;
    const double cnorm = norm(cluster.centroid);
    for (const std::string& id : cluster.member_ids) {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) {
            throw InvalidInputError("cluster_priority: unknown member id " + id);
        }
        // Chord displacement needs an orientation on both sides; when either
        // vector is numerically null we fall back to the orthogonal value.
        if (cnorm < 1e-12 || norm(it->second) < 1e-12) {
            spars += std::sqrt(2.0);
        } else {
            spars += sparsity_displacement(it->second, cluster.centroid);
        }
    }
    p.sparsity_term = spars / static_cast<double>(cluster.size());

    p.combined = w.alpha * p.size_term + w.beta * p.separation_term +
                 w.gamma * p.sparsity_term;
    return p;
}

/// Cluster-level quotas proportional to priority scores, largest-remainder
/// integerized to sum exactly to the class quota. All-zero priorities fall
/// back to a uniform split.
inline std::vector<long long> cluster_quotas(long long class_quota,
                                             std::span<const ClusterPriority> priorities) {
    if (priorities.empty()) throw InvalidInputError("cluster_quotas: no priorities");
    if (class_quota < 0) throw InvalidInputError("cluster_quotas: negative quota");
    std::vector<double> weights;
    weights.reserve(priorities.size());
    for (const ClusterPriority& p : priorities) {
        if (p.combined < 0.0) {
            throw InvalidInputError("cluster_quotas: negative priority score");
        }
        weights.push_back(p.combined);
    }
    return largest_remainder(class_quota, weights);
}

struct HfgaOptions {
    double epsilon = 1e-6;
    PriorityWeights weights;
    // Clusters below this size are excluded from cluster-level allocation;
    // their share lands on eligible siblings. 0 keeps every cluster eligible.
    std::size_t min_generatable_size = 0;
};

/// Hierarchical frequency-geometric allocation: budget -> class quotas ->
/// priority-weighted cluster quotas.
inline AllocationPlan hfga(const std::map<std::string, std::vector<ClusterModel>>& clusters_by_class,
                           double rho, const EmbeddingMap& embeddings,
                           const HfgaOptions& opt = {}) {
    if (clusters_by_class.empty()) throw InvalidInputError("hfga: no classes");
    std::map<std::string, long long> counts;
    long long n_total = 0;
    for (const auto& [label, clusters] : clusters_by_class) {
        if (clusters.empty()) throw InvalidInputError("hfga: class " + label + " has no clusters");
        long long n = 0;
        for (const ClusterModel& c : clusters) n += static_cast<long long>(c.size());
        counts[label] = n;
        n_total += n;
    }

    AllocationPlan plan;
    plan.target_total = budget(n_total, rho);
    plan.class_quotas = class_quotas(counts, plan.target_total, opt.epsilon);

    for (const auto& [label, clusters] : clusters_by_class) {
        const long long a_y = plan.class_quotas.at(label);
        std::vector<ClusterPriority> prios;
        prios.reserve(clusters.size());
        std::vector<std::size_t> eligible;
        for (std::size_t k = 0; k < clusters.size(); ++k) {
            prios.push_back(cluster_priority(clusters[k], clusters, opt.weights, embeddings));
            if (clusters[k].size() >= std::max<std::size_t>(opt.min_generatable_size, 1)) {
                eligible.push_back(k);
            }
        }
        std::vector<long long> quotas(clusters.size(), 0);
        if (eligible.size() == clusters.size()) {
            quotas = cluster_quotas(a_y, prios);
        } else if (!eligible.empty()) {
            std::vector<ClusterPriority> sub;
            sub.reserve(eligible.size());
            for (std::size_t k : eligible) sub.push_back(prios[k]);
            const std::vector<long long> subq = cluster_quotas(a_y, sub);
            for (std::size_t j = 0; j < eligible.size(); ++j) quotas[eligible[j]] = subq[j];
            plan.notes.push_back("class " + label + ": " +
                                 std::to_string(clusters.size() - eligible.size()) +
                                 " cluster(s) below generatable size, share redistributed");
        } else {
            plan.unallocated[label] = a_y;
            plan.notes.push_back("class " + label +
                                 ": no cluster eligible for generation, quota unallocated");
        }
        plan.cluster_quotas[label] = std::move(quotas);
    }
    return plan;
}

}  // namespace ciegad
