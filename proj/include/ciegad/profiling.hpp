#pragma once

#include <algorithm>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ciegad/clustering.hpp"
#include "ciegad/geometry.hpp"
#include "ciegad/prompt.hpp"

namespace ciegad {

/// Cluster-level conditioning information extracted from core and periphery
/// exemplars: a stylistic summary plus structured topics and expressions.
struct DomainProfile {
    std::string class_label;
    int cluster_id = 0;
    std::string summary;
    std::vector<std::string> topics;
    std::vector<std::string> frequent_expressions;
    std::vector<std::string> source_core_ids;
    std::vector<std::string> source_periphery_ids;
    bool overlap_flagged = false;  // core/periphery shared members (cluster < 2m)
};

struct CorePeriphery {
    std::vector<std::string> core_ids;
    std::vector<std::string> periphery_ids;
    bool overlap = false;
};

/// The m members nearest the centroid (core) and the m farthest (periphery),
/// by Euclidean distance, ties broken by ascending sample id. Clusters
/// smaller than 2m necessarily overlap; the overlap is flagged, not an error.
inline CorePeriphery select_core_periphery(const ClusterModel& cluster,
                                           const EmbeddingMap& embeddings,
                                           int m) {
    if (cluster.member_ids.empty()) throw EmptySetError("core/periphery of an empty cluster");
    if (m < 1) throw InvalidInputError("select_core_periphery requires m >= 1");

    std::vector<std::pair<double, std::string>> by_dist;
    by_dist.reserve(cluster.size());
    for (const std::string& id : cluster.member_ids) {
        auto it = embeddings.find(id);
        if (it == embeddings.end()) throw InvalidInputError("unknown member id: " + id);
        by_dist.emplace_back(euclidean(it->second, cluster.centroid), id);
    }
    std::sort(by_dist.begin(), by_dist.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second < b.second;
    });

    const std::size_t mm = std::min<std::size_t>(static_cast<std::size_t>(m), by_dist.size());
    CorePeriphery out;
    for (std::size_t i = 0; i < mm; ++i) out.core_ids.push_back(by_dist[i].second);
    // Farthest first; ties within equal distance again by ascending id.
    std::vector<std::pair<double, std::string>> desc(by_dist);
    std::sort(desc.begin(), desc.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    for (std::size_t i = 0; i < mm; ++i) out.periphery_ids.push_back(desc[i].second);

    std::set<std::string> core_set(out.core_ids.begin(), out.core_ids.end());
    out.overlap = std::any_of(out.periphery_ids.begin(), out.periphery_ids.end(),
                              [&core_set](const std::string& id) {
                                  return core_set.count(id) > 0;
                              });
    return out;
}

/// Prompt asking for the two-layer profile: summary plus topics and frequent
/// expressions. JSON reply keeps delimiter escaping out of our hands.
inline PromptDoc build_profile_prompt(std::span<const std::string> core_texts,
                                      std::span<const std::string> periphery_texts,
                                      const std::string& class_label,
                                      const PromptTemplates& templates = {}) {
    if (core_texts.empty() || periphery_texts.empty()) {
        throw InvalidInputError("profile prompt needs core and periphery examples");
    }
    PromptDoc doc;
    doc.schema_id = "profile.v1";
    doc.role_instructions = templates.profile;

    doc.context_blocks.push_back({"CLASS LABEL", class_label});
    nlohmann::json core = nlohmann::json::array();
    for (const std::string& t : core_texts) core.push_back(t);
    nlohmann::json peri = nlohmann::json::array();
    for (const std::string& t : periphery_texts) peri.push_back(t);
    doc.context_blocks.push_back({"CORE EXAMPLES (closest to the cluster center)", core.dump(2)});
    doc.context_blocks.push_back({"PERIPHERY EXAMPLES (farthest from the cluster center)", peri.dump(2)});

    doc.response_schema =
        "Reply with a single JSON object and nothing else:\n"
        "{\"summary\": string (non-empty),\n"
        " \"topics\": array of 1..20 short strings,\n"
        " \"frequent_expressions\": array of 1..20 short strings}";
    doc.expected_items = 1;
    return doc;
}

namespace detail {

inline std::vector<std::string> clean_string_list(const nlohmann::json& arr,
                                                  const char* field,
                                                  const std::string& raw) {
    if (!arr.is_array() || arr.empty()) {
        throw ParseError(std::string("profile reply field '") + field +
                             "' must be a non-empty array",
                         raw);
    }
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& item : arr) {
        if (!item.is_string()) {
            throw ParseError(std::string("profile reply field '") + field +
                                 "' must contain strings",
                             raw);
        }
        std::string s = item.get<std::string>();
        const auto first = s.find_first_not_of(" \t\r\n");
        const auto last = s.find_last_not_of(" \t\r\n");
        s = (first == std::string::npos) ? std::string() : s.substr(first, last - first + 1);
        if (s.empty()) continue;
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    if (out.empty()) {
        throw ParseError(std::string("profile reply field '") + field +
                             "' has no usable entries",
                         raw);
    }
    if (out.size() > 20) out.resize(20);
    return out;
}

}  // namespace detail

/// Strict parse of a profile reply. Schema violations throw ParseError with
/// the raw reply attached so the caller can re-ask once.
inline DomainProfile parse_profile(const std::string& reply, const ClusterModel& cluster) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("profile reply is not valid JSON: ") + e.what(), reply);
    }
    if (!j.is_object()) throw ParseError("profile reply must be a JSON object", reply);
    if (!j.contains("summary") || !j["summary"].is_string()) {
        throw ParseError("profile reply missing string field 'summary'", reply);
    }
    DomainProfile p;
    p.class_label = cluster.class_label;
    p.cluster_id = cluster.cluster_id;
    p.summary = j["summary"].get<std::string>();
    if (p.summary.find_first_not_of(" \t\r\n") == std::string::npos) {
        throw ParseError("profile reply has an empty summary", reply);
    }
    if (!j.contains("topics")) throw ParseError("profile reply missing 'topics'", reply);
    if (!j.contains("frequent_expressions")) {
        throw ParseError("profile reply missing 'frequent_expressions'", reply);
    }
    p.topics = detail::clean_string_list(j["topics"], "topics", reply);
    p.frequent_expressions =
        detail::clean_string_list(j["frequent_expressions"], "frequent_expressions", reply);
    return p;
}

/// Serializes a profile in the exact reply format parse_profile accepts.
inline std::string profile_to_reply(const DomainProfile& p) {
    nlohmann::json j;
    j["summary"] = p.summary;
    j["topics"] = p.topics;
    j["frequent_expressions"] = p.frequent_expressions;
    return j.dump();
}

}  // namespace ciegad
