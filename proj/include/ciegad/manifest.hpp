#pragma once

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ciegad/dataset.hpp"
#include "ciegad/metrics.hpp"
#include "ciegad/pipeline.hpp"

namespace ciegad {

// nlohmann::json objects keep keys sorted, so every document below serializes
// deterministically; created_at / finished_at are the only wall-clock fields.

inline nlohmann::json to_json(const HyperParams& p) {
    return nlohmann::json{{"kappa", p.kappa},
                          {"high", p.high},
                          {"low", p.low},
                          {"rho", p.rho},
                          {"epsilon", p.epsilon},
                          {"weight_alpha", p.weight_alpha},
                          {"weight_beta", p.weight_beta},
                          {"weight_gamma", p.weight_gamma},
                          {"k_nn", p.k_nn},
                          {"set_size_m", p.set_size_m},
                          {"profile_m", p.profile_m},
                          {"quantile_lo", p.quantile_lo},
                          {"quantile_hi", p.quantile_hi},
                          {"margin_gamma", p.margin_gamma},
                          {"theta_intra", p.theta_intra},
                          {"theta_prompt", p.theta_prompt},
                          {"judge_threshold", p.judge_threshold},
                          {"batch_per_mode", p.batch_per_mode},
                          {"max_cycles_per_cluster", p.max_cycles_per_cluster},
                          {"reg_cov", p.reg_cov},
                          {"seed", p.seed},
                          {"prompt_char_budget", p.prompt_char_budget},
                          {"interp_between", p.interp_between},
                          {"select_from_real_only", p.select_from_real_only}};
}

inline void from_json_params(const nlohmann::json& j, HyperParams& p) {
    p.kappa = j.value("kappa", p.kappa);
    p.high = j.value("high", p.high);
    p.low = j.value("low", p.low);
    p.rho = j.value("rho", p.rho);
    p.epsilon = j.value("epsilon", p.epsilon);
    p.weight_alpha = j.value("weight_alpha", p.weight_alpha);
    p.weight_beta = j.value("weight_beta", p.weight_beta);
    p.weight_gamma = j.value("weight_gamma", p.weight_gamma);
    p.k_nn = j.value("k_nn", p.k_nn);
    p.set_size_m = j.value("set_size_m", p.set_size_m);
    p.profile_m = j.value("profile_m", p.profile_m);
    p.quantile_lo = j.value("quantile_lo", p.quantile_lo);
    p.quantile_hi = j.value("quantile_hi", p.quantile_hi);
    p.margin_gamma = j.value("margin_gamma", p.margin_gamma);
    p.theta_intra = j.value("theta_intra", p.theta_intra);
    p.theta_prompt = j.value("theta_prompt", p.theta_prompt);
    p.judge_threshold = j.value("judge_threshold", p.judge_threshold);
    p.batch_per_mode = j.value("batch_per_mode", p.batch_per_mode);
    p.max_cycles_per_cluster = j.value("max_cycles_per_cluster", p.max_cycles_per_cluster);
    p.reg_cov = j.value("reg_cov", p.reg_cov);
    p.seed = j.value("seed", p.seed);
    p.prompt_char_budget = j.value("prompt_char_budget", p.prompt_char_budget);
    p.interp_between = j.value("interp_between", p.interp_between);
    p.select_from_real_only = j.value("select_from_real_only", p.select_from_real_only);
}

inline nlohmann::json to_json(const AblationToggles& t) {
    return nlohmann::json{{"enable_profile", t.enable_profile},
                          {"enable_interpolation", t.enable_interpolation},
                          {"enable_extrapolation", t.enable_extrapolation},
                          {"enable_geometry_filter", t.enable_geometry_filter}};
}

inline void from_json_toggles(const nlohmann::json& j, AblationToggles& t) {
    t.enable_profile = j.value("enable_profile", t.enable_profile);
    t.enable_interpolation = j.value("enable_interpolation", t.enable_interpolation);
    t.enable_extrapolation = j.value("enable_extrapolation", t.enable_extrapolation);
    t.enable_geometry_filter = j.value("enable_geometry_filter", t.enable_geometry_filter);
}

inline nlohmann::json to_json(const AllocationPlan& plan) {
    nlohmann::json j;
    j["target_total"] = plan.target_total;
    j["class_quotas"] = plan.class_quotas;
    j["cluster_quotas"] = plan.cluster_quotas;
    j["unallocated"] = plan.unallocated;
    j["notes"] = plan.notes;
    return j;
}

inline nlohmann::json to_json(const DomainProfile& p) {
    return nlohmann::json{{"class_label", p.class_label},
                          {"cluster_id", p.cluster_id},
                          {"summary", p.summary},
                          {"topics", p.topics},
                          {"frequent_expressions", p.frequent_expressions},
                          {"source_core_ids", p.source_core_ids},
                          {"source_periphery_ids", p.source_periphery_ids},
                          {"overlap_flagged", p.overlap_flagged}};
}

inline nlohmann::json to_json(const FilterTrace& t) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageVerdict& v : t.stages) {
        nlohmann::json s;
        s["stage"] = v.stage;
        s["passed"] = v.passed;
        s["diagnostic"] = round_sig(v.diagnostic, 9);
        if (!v.detail.empty()) s["detail"] = v.detail;
        stages.push_back(std::move(s));
    }
    return nlohmann::json{
        {"stages", std::move(stages)}, {"accepted", t.accepted}, {"truncated", t.truncated}};
}

inline nlohmann::json to_json(const JudgeScores& s) {
    return nlohmann::json{{"emotion_consistency", s.emotion_consistency},
                          {"style_alignment", s.style_alignment},
                          {"lexical_topic_coherence", s.lexical_topic_coherence},
                          {"diversity", s.diversity},
                          {"reason_validity", s.reason_validity},
                          {"mean", s.mean()}};
}

inline nlohmann::json to_json(const GenerationCandidate& c) {
    nlohmann::json j;
    j["id"] = c.id;
    j["text"] = c.text;
    j["rationale"] = c.rationale;
    j["mode"] = to_string(c.mode);
    j["class_label"] = c.class_label;
    j["cluster_id"] = c.cluster_id;
    j["cycle"] = c.cycle;
    j["trace"] = to_json(c.trace);
    if (c.scores) j["judge_scores"] = to_json(*c.scores);
    return j;
}

inline nlohmann::json to_json(const ClassMetrics& m) {
    nlohmann::json j;
    j["oer"] = m.oer ? nlohmann::json(round_sig(*m.oer, 9)) : nlohmann::json(nullptr);
    j["sni"] = m.sni ? nlohmann::json(round_sig(*m.sni, 9)) : nlohmann::json(nullptr);
    j["fed"] = m.fed ? nlohmann::json(round_sig(*m.fed, 9)) : nlohmann::json(nullptr);
    j["real_count"] = m.real_count;
    j["generated_count"] = m.generated_count;
    j["oer_outward"] = m.oer_outward;
    j["oer_evaluated"] = m.oer_evaluated;
    return j;
}

inline nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j;
    j["metric_version"] = r.metric_version;
    j["oer"] = r.oer ? nlohmann::json(round_sig(*r.oer, 9)) : nlohmann::json(nullptr);
    j["sni"] = r.sni ? nlohmann::json(round_sig(*r.sni, 9)) : nlohmann::json(nullptr);
    j["fed"] = r.fed ? nlohmann::json(round_sig(*r.fed, 9)) : nlohmann::json(nullptr);
    nlohmann::json per_class;
    for (const auto& [label, cm] : r.per_class) per_class[label] = to_json(cm);
    j["per_class"] = std::move(per_class);
    j["real_count"] = r.real_count;
    j["generated_count"] = r.generated_count;
    j["skipped_generated"] = r.skipped_generated;
    j["warnings"] = r.warnings;
    return j;
}

/// Aligned-column text rendering of a metrics report.
inline std::string metrics_table(const MetricsReport& r) {
    auto cell = [](const std::optional<double>& v) {
        if (!v) return std::string("null");
        std::ostringstream out;
        out << std::fixed << std::setprecision(6) << *v;
        return out.str();
    };
    std::ostringstream out;
    out << std::left << std::setw(16) << "class" << std::right << std::setw(12) << "real"
        << std::setw(12) << "generated" << std::setw(14) << "OER" << std::setw(14) << "SNI"
        << std::setw(14) << "FED" << "\n";
    for (const auto& [label, cm] : r.per_class) {
        out << std::left << std::setw(16) << label << std::right << std::setw(12)
            << cm.real_count << std::setw(12) << cm.generated_count << std::setw(14)
            << cell(cm.oer) << std::setw(14) << cell(cm.sni) << std::setw(14) << cell(cm.fed)
            << "\n";
    }
    out << std::left << std::setw(16) << "(pooled)" << std::right << std::setw(12)
        << r.real_count << std::setw(12) << r.generated_count << std::setw(14) << cell(r.oer)
        << std::setw(14) << cell(r.sni) << std::setw(14) << cell(r.fed) << "\n";
    return out.str();
}

inline nlohmann::json to_json(const ClusterModel& c) {
    nlohmann::json j;
    j["class_label"] = c.class_label;
    j["cluster_id"] = c.cluster_id;
    j["size"] = c.member_ids.size();
    nlohmann::json centroid = nlohmann::json::array();
    for (double v : c.centroid) centroid.push_back(round_sig(v, 9));
    j["centroid"] = std::move(centroid);
    j["member_ids"] = c.member_ids;
    return j;
}

inline nlohmann::json to_json(const ShortfallReport& s) {
    return nlohmann::json{{"class_label", s.class_label}, {"cluster_id", s.cluster_id},
                          {"quota", s.quota},             {"accepted", s.accepted},
                          {"cycles_run", s.cycles_run},   {"causes", s.causes}};
}

inline nlohmann::json manifest_json(const AugmentationResult& r,
                                    const std::string& dataset_path,
                                    const std::string& embed_cache_path) {
    nlohmann::json j;
    j["schema"] = "ciegad-manifest-1";
    j["created_at"] = r.meta.created_at;
    j["finished_at"] = r.meta.finished_at;
    j["seed"] = r.meta.seed;
    j["params"] = to_json(r.meta.params);
    j["toggles"] = to_json(r.meta.toggles);
    j["backends"] = nlohmann::json{{"generator", r.meta.generator_id},
                                   {"judge", r.meta.judge_id},
                                   {"embedder", r.meta.embedder_id}};
    j["dataset"] = nlohmann::json{{"path", dataset_path},
                                  {"size", r.meta.dataset_size},
                                  {"dim", r.meta.dim}};
    j["embed_cache_path"] = embed_cache_path;
    j["plan"] = to_json(r.plan);
    nlohmann::json clusters = nlohmann::json::array();
    for (const auto& [label, cs] : r.real_clusters) {
        for (const ClusterModel& c : cs) clusters.push_back(to_json(c));
    }
    j["real_clusters"] = std::move(clusters);
    nlohmann::json profiles = nlohmann::json::array();
    for (const DomainProfile& p : r.profiles) profiles.push_back(to_json(p));
    j["profiles"] = std::move(profiles);
    nlohmann::json accepted = nlohmann::json::array();
    for (const EmbeddedSample& s : r.accepted) accepted.push_back(sample_to_json(s));
    j["accepted"] = std::move(accepted);
    nlohmann::json candidates = nlohmann::json::array();
    for (const GenerationCandidate& c : r.candidates) candidates.push_back(to_json(c));
    j["candidates"] = std::move(candidates);
    nlohmann::json shortfalls = nlohmann::json::array();
    for (const ShortfallReport& s : r.shortfalls) shortfalls.push_back(to_json(s));
    j["shortfalls"] = std::move(shortfalls);
    j["truncated_count"] = r.truncated_count;
    j["metrics"] = to_json(r.metrics);
    j["notes"] = r.meta.notes;
    return j;
}

inline void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path.string());
    f << content;
}

/// Strips the wall-clock fields; everything left must be byte-identical
/// across reruns with the same config and seed.
inline nlohmann::json strip_timestamps(nlohmann::json manifest) {
    manifest.erase("created_at");
    manifest.erase("finished_at");
    return manifest;
}

}  // namespace ciegad
