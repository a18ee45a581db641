#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ciegad/clustering.hpp"
#include "ciegad/geometry.hpp"
#include "ciegad/profiling.hpp"
#include "ciegad/prompt.hpp"

namespace ciegad {

using TextMap = std::unordered_map<std::string, std::string>;

enum class GenMode { interpolative, extrapolative };

inline const char* to_string(GenMode m) {
    return m == GenMode::interpolative ? "interpolative" : "extrapolative";
}

/// Inner/outer member sets defining one generation direction. For the
/// interpolative mode the sets are anchored on the representative sample
/// x_c (the member with the largest k-NN radius); for the extrapolative
/// mode they are anchored on the cluster centroid.
struct DirectionSets {
    GenMode mode = GenMode::interpolative;
    std::vector<std::string> inner_ids;
    std::vector<std::string> outer_ids;
    Embedding inner_centroid;
    Embedding outer_centroid;
    std::optional<std::string> representative_id;  // interpolative only
};

namespace detail {

inline const Embedding& lookup(const EmbeddingMap& m, const std::string& id) {
    auto it = m.find(id);
    if (it == m.end()) throw InvalidInputError("unknown sample id: " + id);
    return it->second;
}

/// Sort ids by (distance asc, id asc) or (distance desc, id asc).
inline std::vector<std::pair<double, std::string>> ranked_by_distance(
    std::span<const std::string> ids, const EmbeddingMap& embeddings,
    const Embedding& anchor, bool descending) {
    std::vector<std::pair<double, std::string>> out;
    out.reserve(ids.size());
    for (const std::string& id : ids) {
        out.emplace_back(euclidean(lookup(embeddings, id), anchor), id);
    }
    std::sort(out.begin(), out.end(), [descending](const auto& a, const auto& b) {
        if (a.first != b.first) return descending ? a.first > b.first : a.first < b.first;
        return a.second < b.second;
    });
    return out;
}

inline std::vector<std::string> take_ids(
    const std::vector<std::pair<double, std::string>>& ranked, std::size_t m) {
    std::vector<std::string> out;
    out.reserve(std::min(m, ranked.size()));
    for (std::size_t i = 0; i < ranked.size() && i < m; ++i) out.push_back(ranked[i].second);
    return out;
}

/// Nearest-rank quantile over a sorted ascending sample.
inline double nearest_rank_quantile(std::span<const double> sorted_asc, double q) {
    const auto n = sorted_asc.size();
    if (n == 0) throw EmptySetError("quantile of an empty sample");
    if (q <= 0.0) return sorted_asc[0];
    const auto rank = static_cast<std::size_t>(
        std::ceil(q * static_cast<double>(n)));
    return sorted_asc[std::min(rank, n) - 1];
}

}  // namespace detail

/// Interpolative set selection: the representative x_c is the member with the
/// largest k-NN radius under cosine distance (ties by ascending id); the
/// inner set holds the m members nearest x_c (x_c itself included at distance
/// zero) and the outer set the m farthest.
inline DirectionSets select_interp_sets(const ClusterModel& cluster,
                                        const EmbeddingMap& embeddings,
                                        int k_nn, int m) {
    if (cluster.size() < 2) {
        throw DegenerateClusterError("interpolative selection needs a cluster of size >= 2");
    }
    if (k_nn < 1 || m < 1) throw InvalidInputError("k_nn and m must be >= 1");
    const auto n = cluster.size();
    const int k_eff = static_cast<int>(std::min<std::size_t>(k_nn, n - 1));

    std::string rep_id;
    double rep_radius = -1.0;
    std::vector<Embedding> others;
    others.reserve(n - 1);
    for (const std::string& id : cluster.member_ids) {
        others.clear();
        for (const std::string& other : cluster.member_ids) {
            if (other != id) others.push_back(detail::lookup(embeddings, other));
        }
        const double r = knn_radius(detail::lookup(embeddings, id), others, k_eff);
        if (r > rep_radius || (r == rep_radius && id < rep_id)) {
            rep_radius = r;
            rep_id = id;
        }
    }

    const Embedding& rep = detail::lookup(embeddings, rep_id);
    const auto asc = detail::ranked_by_distance(cluster.member_ids, embeddings, rep, false);
    const auto desc = detail::ranked_by_distance(cluster.member_ids, embeddings, rep, true);
    const auto mm = std::min<std::size_t>(static_cast<std::size_t>(m), n);

    DirectionSets sets;
    sets.mode = GenMode::interpolative;
    sets.representative_id = rep_id;
    sets.inner_ids = detail::take_ids(asc, mm);
    sets.outer_ids = detail::take_ids(desc, mm);
    sets.inner_centroid = centroid_of_ids(sets.inner_ids, embeddings);
    sets.outer_centroid = centroid_of_ids(sets.outer_ids, embeddings);
    return sets;
}

/// Extrapolative set selection: the outer set holds the m members farthest
/// from the cluster centroid; the inner set holds up to m members whose
/// centroid distance falls in the inclusive nearest-rank quantile band
/// [q_lo, q_hi] (closest to the band midpoint when the band is crowded,
/// widened in 0.05 steps in the never-expected case of an empty band).
inline DirectionSets select_extrap_sets(const ClusterModel& cluster,
                                        const EmbeddingMap& embeddings,
                                        int m, double q_lo, double q_hi) {
    if (cluster.size() < 2) {
        throw DegenerateClusterError("extrapolative selection needs a cluster of size >= 2");
    }
    if (m < 1) throw InvalidInputError("m must be >= 1");
    if (!(0.0 <= q_lo && q_lo < q_hi && q_hi <= 1.0)) {
        throw InvalidInputError("quantile band must satisfy 0 <= q_lo < q_hi <= 1");
    }
    const auto n = cluster.size();
    const auto mm = std::min<std::size_t>(static_cast<std::size_t>(m), n);

    const auto asc = detail::ranked_by_distance(cluster.member_ids, embeddings,
                                                cluster.centroid, false);
    std::vector<double> dists;
    dists.reserve(n);
    for (const auto& [d, id] : asc) dists.push_back(d);

    DirectionSets sets;
    sets.mode = GenMode::extrapolative;
    const auto desc = detail::ranked_by_distance(cluster.member_ids, embeddings,
                                                 cluster.centroid, true);
    sets.outer_ids = detail::take_ids(desc, mm);

    double lo = q_lo;
    double hi = q_hi;
    std::vector<std::pair<double, std::string>> band;
    while (true) {
        const double lo_val = detail::nearest_rank_quantile(dists, lo);
        const double hi_val = detail::nearest_rank_quantile(dists, hi);
        band.clear();
        for (const auto& entry : asc) {
            if (entry.first >= lo_val && entry.first <= hi_val) band.push_back(entry);
        }
        if (!band.empty()) break;
        lo = std::max(0.0, lo - 0.05);
        hi = std::min(1.0, hi + 0.05);
        if (lo == 0.0 && hi == 1.0 && band.empty()) {
            // Band now spans everything; with n >= 2 it cannot stay empty.
            for (const auto& entry : asc) band.push_back(entry);
            break;
        }
    }
    if (band.size() > mm) {
        const double lo_val = detail::nearest_rank_quantile(dists, lo);
        const double hi_val = detail::nearest_rank_quantile(dists, hi);
        const double mid = 0.5 * (lo_val + hi_val);
        std::sort(band.begin(), band.end(), [mid](const auto& a, const auto& b) {
            const double da = std::abs(a.first - mid);
            const double db = std::abs(b.first - mid);
            if (da != db) return da < db;
            return a.second < b.second;
        });
        band.resize(mm);
        // Keep a stable presentation order: ascending id.
        std::sort(band.begin(), band.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
    }
    for (const auto& [d, id] : band) sets.inner_ids.push_back(id);
    sets.inner_centroid = centroid_of_ids(sets.inner_ids, embeddings);
    sets.outer_centroid = centroid_of_ids(sets.outer_ids, embeddings);
    return sets;
}

/// (x - z_in)^T (z_out - z_in), the quantity Eq-style interpolation tests.
inline double interp_projection(const Embedding& x_new, const DirectionSets& sets) {
    require_same_dim(x_new, sets.inner_centroid);
    double lhs = 0.0;
    for (std::size_t i = 0; i < x_new.size(); ++i) {
        lhs += (x_new[i] - sets.inner_centroid[i]) *
               (sets.outer_centroid[i] - sets.inner_centroid[i]);
    }
    return lhs;
}

/// (x - z_O)^T (z_O - z_I); pair with extrap_threshold for the margin test.
inline double extrap_projection(const Embedding& x_new, const DirectionSets& sets) {
    require_same_dim(x_new, sets.outer_centroid);
    double lhs = 0.0;
    for (std::size_t i = 0; i < x_new.size(); ++i) {
        lhs += (x_new[i] - sets.outer_centroid[i]) *
               (sets.outer_centroid[i] - sets.inner_centroid[i]);
    }
    return lhs;
}

inline double extrap_threshold(const DirectionSets& sets, double margin) {
    double dd = 0.0;
    for (std::size_t i = 0; i < sets.inner_centroid.size(); ++i) {
        const double d = sets.outer_centroid[i] - sets.inner_centroid[i];
        dd += d * d;
    }
    return margin * std::sqrt(dd);
}

/// Interpolative acceptance, evaluated exactly as written:
/// (x - z_in)^T (z_out - z_in) <= 0.
inline bool interp_accept(const Embedding& x_new, const DirectionSets& sets) {
    if (sets.mode != GenMode::interpolative) {
        throw InvalidInputError("interp_accept needs interpolative sets");
    }
    require_same_dim(x_new, sets.inner_centroid);
    double lhs = 0.0;
    for (std::size_t i = 0; i < x_new.size(); ++i) {
        lhs += (x_new[i] - sets.inner_centroid[i]) *
               (sets.outer_centroid[i] - sets.inner_centroid[i]);
    }
    return lhs <= 0.0;
}

/// Experimental "between" variant: 0 <= projection <= |z_out - z_in|^2.
/// Off by default; the verbatim half-space above is the reference rule.
inline bool interp_accept_between(const Embedding& x_new, const DirectionSets& sets) {
    if (sets.mode != GenMode::interpolative) {
        throw InvalidInputError("interp_accept_between needs interpolative sets");
    }
    require_same_dim(x_new, sets.inner_centroid);
    double lhs = 0.0;
    double dd = 0.0;
    for (std::size_t i = 0; i < x_new.size(); ++i) {
        const double d = sets.outer_centroid[i] - sets.inner_centroid[i];
        lhs += (x_new[i] - sets.inner_centroid[i]) * d;
        dd += d * d;
    }
    return lhs >= 0.0 && lhs <= dd;
}

/// Extrapolative acceptance:
/// (x - z_O)^T (z_O - z_I) >= margin * |z_O - z_I|.
inline bool extrap_accept(const Embedding& x_new, const DirectionSets& sets,
                          double margin) {
    if (sets.mode != GenMode::extrapolative) {
        throw InvalidInputError("extrap_accept needs extrapolative sets");
    }
    if (margin < 0.0) throw InvalidInputError("margin must be >= 0");
    require_same_dim(x_new, sets.outer_centroid);
    double lhs = 0.0;
    double dd = 0.0;
    for (std::size_t i = 0; i < x_new.size(); ++i) {
        const double d = sets.outer_centroid[i] - sets.inner_centroid[i];
        lhs += (x_new[i] - sets.outer_centroid[i]) * d;
        dd += d * d;
    }
    if (dd == 0.0) {
        throw DegenerateDirectionError("extrapolation direction is zero: set centroids coincide");
    }
    return lhs >= margin * std::sqrt(dd);
}

namespace detail {

inline nlohmann::json profile_block(const DomainProfile& p) {
    nlohmann::json j;
    j["summary"] = p.summary;
    j["topics"] = p.topics;
    j["frequent_expressions"] = p.frequent_expressions;
    return j;
}

}  // namespace detail

/// Generation prompt for one cycle of one mode. Inner and outer example
/// texts are presented with their directional roles; the response schema
/// demands exactly `batch` {text, rationale} objects. The rendered prompt is
/// kept under `char_budget` by dropping profile expressions, then topics,
/// then trimming the longest example texts.
inline PromptDoc build_generation_prompt(GenMode mode,
                                         const std::optional<DomainProfile>& profile,
                                         const DirectionSets& sets,
                                         const TextMap& texts,
                                         const std::string& class_label,
                                         int batch,
                                         const PromptTemplates& templates = {},
                                         std::size_t char_budget = 16000,
                                         std::uint64_t salt = 0) {
    if (batch < 1) throw InvalidInputError("batch must be >= 1");
    if (mode != sets.mode) throw InvalidInputError("prompt mode does not match sets mode");

    auto text_of = [&texts](const std::string& id) -> std::string {
        auto it = texts.find(id);
        return it == texts.end() ? std::string("<missing text ") + id + ">" : it->second;
    };

    std::vector<std::string> inner_texts;
    for (const std::string& id : sets.inner_ids) inner_texts.push_back(text_of(id));
    std::vector<std::string> outer_texts;
    for (const std::string& id : sets.outer_ids) outer_texts.push_back(text_of(id));

    DomainProfile prof;  // working copy for truncation
    const bool has_profile = profile.has_value();
    if (has_profile) prof = *profile;

    const std::map<std::string, std::string> vars = {
        {"class_label", class_label}, {"batch", std::to_string(batch)}};

    PromptDoc doc;
    auto assemble = [&]() {
        doc = PromptDoc{};
        doc.schema_id = "generation.v1";
        doc.role_instructions = substitute(
            mode == GenMode::interpolative ? templates.interpolation : templates.extrapolation,
            vars);
        doc.context_blocks.push_back({"CLASS LABEL", class_label});
        if (has_profile) {
            doc.context_blocks.push_back({"DOMAIN PROFILE", detail::profile_block(prof).dump(2)});
        } else {
            doc.context_blocks.push_back(
                {"DOMAIN PROFILE", "none: condition on the class label only"});
        }
        nlohmann::json inner = nlohmann::json::array();
        for (const std::string& t : inner_texts) inner.push_back(t);
        nlohmann::json outer = nlohmann::json::array();
        for (const std::string& t : outer_texts) outer.push_back(t);
        if (mode == GenMode::interpolative) {
            doc.context_blocks.push_back({"INNER EXAMPLES (stay close to these)", inner.dump(2)});
            doc.context_blocks.push_back({"OUTER EXAMPLES (do not exceed these)", outer.dump(2)});
        } else {
            doc.context_blocks.push_back({"INNER EXAMPLES (move away from these)", inner.dump(2)});
            doc.context_blocks.push_back({"OUTER EXAMPLES (go beyond these)", outer.dump(2)});
        }
        doc.response_schema =
            "Reply with a single JSON object and nothing else:\n"
            "{\"items\": array of exactly " + std::to_string(batch) +
            " objects, each {\"text\": string, \"rationale\": string}}\n"
            "All texts must describe distinct contexts.";
        doc.expected_items = batch;
        GeometryHint hint;
        hint.mode = to_string(mode);
        hint.inner_centroid = sets.inner_centroid;
        hint.outer_centroid = sets.outer_centroid;
        hint.salt = salt;
        doc.geometry_hint = hint;
    };

    assemble();
    while (doc.rendered_size() > char_budget && has_profile && !prof.frequent_expressions.empty()) {
        prof.frequent_expressions.pop_back();
        assemble();
    }
    while (doc.rendered_size() > char_budget && has_profile && !prof.topics.empty()) {
        prof.topics.pop_back();
        assemble();
    }
    while (doc.rendered_size() > char_budget) {
        auto longest = inner_texts.begin();
        std::size_t longest_len = 0;
        for (auto* list : {&inner_texts, &outer_texts}) {
            for (auto it = list->begin(); it != list->end(); ++it) {
                if (it->size() > longest_len) {
                    longest_len = it->size();
                    longest = it;
                }
            }
        }
        if (longest_len <= 64) break;  // nothing meaningful left to trim
        longest->resize(longest_len / 2);
        assemble();
    }
    return doc;
}

}  // namespace ciegad
