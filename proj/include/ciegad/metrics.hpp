#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ciegad/clustering.hpp"
#include "ciegad/dataset.hpp"
#include "ciegad/geometry.hpp"

namespace ciegad {

// OER and SNI are operationalizations fixed by this artifact; the metric
// names and their intent come from the evaluation suite they belong to, but
// no published formula exists. Reports carry metric_version so numbers stay
// interpretable if the definitions ever move.
inline constexpr const char* kMetricVersion = "ciegad-metrics-1";

struct ClassMetrics {
    std::optional<double> oer;
    std::optional<double> sni;
    std::optional<double> fed;
    long long real_count = 0;
    long long generated_count = 0;
    long long oer_outward = 0;
    long long oer_evaluated = 0;
};

struct MetricsReport {
    std::optional<double> oer;
    std::optional<double> sni;
    std::optional<double> fed;
    std::map<std::string, ClassMetrics> per_class;
    long long real_count = 0;
    long long generated_count = 0;
    long long skipped_generated = 0;  // class missing from the real data
    std::vector<std::string> warnings;
    std::string metric_version = kMetricVersion;
};

namespace detail {

struct ClusterBoundary {
    const ClusterModel* cluster;
    double max_radius;
};

/// Per-cluster boundary radius: the largest member distance to the centroid,
/// over real members only.
inline std::map<std::string, std::vector<ClusterBoundary>> cluster_boundaries(
    std::span<const ClusterModel> real_clusters, const EmbeddingMap& real_embeddings) {
    std::map<std::string, std::vector<ClusterBoundary>> out;
    for (const ClusterModel& c : real_clusters) {
        double max_r = 0.0;
        for (const std::string& id : c.member_ids) {
            auto it = real_embeddings.find(id);
            if (it == real_embeddings.end()) {
                throw InvalidInputError("oer: unknown real member id " + id);
            }
            max_r = std::max(max_r, euclidean(it->second, c.centroid));
        }
        out[c.class_label].push_back({&c, max_r});
    }
    return out;
}

}  // namespace detail

/// Outward expansion ratio: the fraction of generated samples whose distance
/// to the nearest same-class real cluster centroid exceeds that cluster's
/// maximum real-member radius. Returns nullopt when nothing was evaluable.
inline std::optional<double> oer(std::span<const ClusterModel> real_clusters,
                                 const EmbeddingMap& real_embeddings,
                                 std::span<const EmbeddedSample> generated,
                                 MetricsReport* detail_out = nullptr) {
    const auto boundaries = detail::cluster_boundaries(real_clusters, real_embeddings);
    long long outward = 0;
    long long evaluated = 0;
    std::map<std::string, std::pair<long long, long long>> per_class;  // outward, evaluated
    for (const EmbeddedSample& g : generated) {
        auto it = boundaries.find(g.label);
        if (it == boundaries.end()) {
            if (detail_out) {
                ++detail_out->skipped_generated;
                detail_out->warnings.push_back("oer: generated sample " + g.id +
                                               " has class '" + g.label +
                                               "' absent from the real data; skipped");
            }
            continue;
        }
        double best_dist = std::numeric_limits<double>::max();
        double best_radius = 0.0;
        for (const auto& b : it->second) {
            const double d = euclidean(g.vector, b.cluster->centroid);
            if (d < best_dist) {
                best_dist = d;
                best_radius = b.max_radius;
            }
        }
        const bool is_outward = best_dist > best_radius;
        ++evaluated;
        outward += is_outward ? 1 : 0;
        auto& pc = per_class[g.label];
        ++pc.second;
        pc.first += is_outward ? 1 : 0;
    }
    if (detail_out) {
        for (const auto& [label, counts] : per_class) {
            auto& cm = detail_out->per_class[label];
            cm.oer_outward = counts.first;
            cm.oer_evaluated = counts.second;
            if (counts.second > 0) {
                cm.oer = static_cast<double>(counts.first) / static_cast<double>(counts.second);
            }
        }
    }
    if (evaluated == 0) return std::nullopt;
    return static_cast<double>(outward) / static_cast<double>(evaluated);
}

/// Semantic novelty index: mean over generated samples of one minus the
/// maximum cosine similarity to any same-class real sample.
inline std::optional<double> sni(std::span<const EmbeddedSample> real,
                                 std::span<const EmbeddedSample> generated,
                                 MetricsReport* detail_out = nullptr) {
    std::map<std::string, std::vector<const Embedding*>> real_by_class;
    for (const EmbeddedSample& r : real) real_by_class[r.label].push_back(&r.vector);

    double total = 0.0;
    long long evaluated = 0;
    std::map<std::string, std::pair<double, long long>> per_class;
    for (const EmbeddedSample& g : generated) {
        auto it = real_by_class.find(g.label);
        if (it == real_by_class.end()) {
            if (detail_out) {
                detail_out->warnings.push_back("sni: generated sample " + g.id +
                                               " has class '" + g.label +
                                               "' absent from the real data; skipped");
            }
            continue;
        }
        const double gn = norm(g.vector);
        if (gn == 0.0) continue;
        double max_sim = -2.0;  // below the cosine range marks "no valid pair"
        for (const Embedding* r : it->second) {
            const double rn = norm(*r);
            if (rn == 0.0) continue;
            double d = 0.0;
            for (std::size_t i = 0; i < r->size(); ++i) d += (*r)[i] * g.vector[i];
            max_sim = std::max(max_sim, d / (rn * gn));
        }
        if (max_sim < -1.5) continue;
        const double novelty = 1.0 - max_sim;
        total += novelty;
        ++evaluated;
        auto& pc = per_class[g.label];
        pc.first += novelty;
        ++pc.second;
    }
    if (detail_out) {
        for (const auto& [label, acc] : per_class) {
            if (acc.second > 0) {
                detail_out->per_class[label].sni = acc.first / static_cast<double>(acc.second);
            }
        }
    }
    if (evaluated == 0) return std::nullopt;
    return total / static_cast<double>(evaluated);
}

/// Frechet embedding distance between Gaussian fits of the two vector sets:
/// |mu_r - mu_g|^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2}), clamped at zero.
inline double fed(std::span<const Embedding> real_vectors,
                  std::span<const Embedding> gen_vectors, double reg = 1e-6) {
    if (real_vectors.size() < 2 || gen_vectors.size() < 2) {
        throw InsufficientDataError("fed needs at least 2 vectors on each side");
    }
    const GaussianFit fr = gaussian_fit(real_vectors, reg);
    const GaussianFit fg = gaussian_fit(gen_vectors, reg);
    require_same_dim(fr.mean, fg.mean);
    double mean_sq = 0.0;
    for (std::size_t i = 0; i < fr.mean.size(); ++i) {
        const double d = fr.mean[i] - fg.mean[i];
        mean_sq += d * d;
    }
    const double value = mean_sq + fr.covariance.trace() + fg.covariance.trace() -
                         2.0 * trace_sqrt_product(fr.covariance, fg.covariance);
    return std::max(0.0, value);
}

/// Full report: pooled OER / SNI / FED plus per-class breakdowns. FED is
/// reported only where both sides have at least two vectors.
inline MetricsReport metrics_report(std::span<const ClusterModel> real_clusters,
                                    std::span<const EmbeddedSample> real,
                                    std::span<const EmbeddedSample> generated,
                                    double reg = 1e-6) {
    MetricsReport report;
    report.real_count = static_cast<long long>(real.size());
    report.generated_count = static_cast<long long>(generated.size());

    EmbeddingMap real_embeddings;
    std::map<std::string, std::vector<Embedding>> real_by_class;
    std::vector<Embedding> real_vectors;
    for (const EmbeddedSample& r : real) {
        real_embeddings[r.id] = r.vector;
        real_by_class[r.label].push_back(r.vector);
        real_vectors.push_back(r.vector);
        ++report.per_class[r.label].real_count;
    }
    std::map<std::string, std::vector<Embedding>> gen_by_class;
    std::vector<Embedding> gen_vectors;
    for (const EmbeddedSample& g : generated) {
        gen_by_class[g.label].push_back(g.vector);
        gen_vectors.push_back(g.vector);
        ++report.per_class[g.label].generated_count;
    }

    report.oer = oer(real_clusters, real_embeddings, generated, &report);
    report.sni = sni(real, generated, &report);
    if (real_vectors.size() >= 2 && gen_vectors.size() >= 2) {
        report.fed = fed(real_vectors, gen_vectors, reg);
    }
    for (auto& [label, cm] : report.per_class) {
        auto r = real_by_class.find(label);
        auto g = gen_by_class.find(label);
        if (r != real_by_class.end() && g != gen_by_class.end() && r->second.size() >= 2 &&
            g->second.size() >= 2) {
            cm.fed = fed(r->second, g->second, reg);
        }
    }
    return report;
}

}  // namespace ciegad
