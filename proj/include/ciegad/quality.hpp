#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ciegad/geometry.hpp"
#include "ciegad/profiling.hpp"
#include "ciegad/prompt.hpp"
#include "ciegad/synthesis.hpp"

namespace ciegad {

/// Five-point Likert scores for the judge's five dimensions.
struct JudgeScores {
    int emotion_consistency = 0;
    int style_alignment = 0;
    int lexical_topic_coherence = 0;
    int diversity = 0;
    int reason_validity = 0;

    double mean() const {
        return (emotion_consistency + style_alignment + lexical_topic_coherence +
                diversity + reason_validity) /
               5.0;
    }

    void validate() const {
        for (int s : {emotion_consistency, style_alignment, lexical_topic_coherence,
                      diversity, reason_validity}) {
            if (s < 1 || s > 5) {
                throw InvalidScoresError("judge score outside [1, 5]: " + std::to_string(s));
            }
        }
    }
};

struct StageVerdict {
    std::string stage;  // geometric | intra_batch | prompt_overlap | judge
    bool passed = false;
    double diagnostic = 0.0;  // predicate LHS, offending similarity, or judge mean
    std::string detail;
};

/// Pipeline-ordered per-candidate audit: geometric, intra-batch,
/// prompt-overlap, judge. A candidate is accepted iff every recorded stage
/// passed; stages a candidate never reached are simply absent.
struct FilterTrace {
    std::vector<StageVerdict> stages;
    bool accepted = false;
    bool truncated = false;  // passed everything but arrived past the quota

    void add(std::string stage, bool passed, double diagnostic, std::string detail = {}) {
        stages.push_back({std::move(stage), passed, diagnostic, std::move(detail)});
    }
    bool all_passed() const {
        for (const StageVerdict& v : stages) {
            if (!v.passed) return false;
        }
        return !stages.empty();
    }
};

/// One generated text on its way through the filters.
struct GenerationCandidate {
    std::string id;
    std::string text;
    std::string rationale;
    GenMode mode = GenMode::interpolative;
    std::string class_label;
    int cluster_id = 0;
    int cycle = 0;
    Embedding embedding;
    FilterTrace trace;
    std::optional<JudgeScores> scores;
};

namespace detail {

/// Cosine similarity with zero-norm vectors treated as dissimilar, so a
/// degenerate candidate cannot poison a whole batch.
inline double safe_cosine_similarity(const Embedding& a, const Embedding& b) {
    const double na = norm(a);
    const double nb = norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] * b[i];
    return d / (na * nb);
}

}  // namespace detail

/// Greedy in-order dedup: candidate i is dropped when its cosine similarity
/// to any earlier survivor exceeds theta (strictly). Appends an intra_batch
/// verdict to every active candidate and returns the surviving indices.
inline std::vector<int> intra_batch_filter(std::vector<GenerationCandidate>& batch,
                                           const std::vector<int>& active,
                                           double theta) {
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw InvalidInputError("intra-batch threshold must be in (0, 1]");
    }
    std::vector<int> survivors;
    for (int idx : active) {
        GenerationCandidate& cand = batch[static_cast<std::size_t>(idx)];
        double worst = -2.0;
        int offender = -1;
        for (int keep : survivors) {
            const double sim = detail::safe_cosine_similarity(
                cand.embedding, batch[static_cast<std::size_t>(keep)].embedding);
            if (sim > worst) {
                worst = sim;
                offender = keep;
            }
        }
        const bool pass = worst <= theta;  // "exceeding" is strict
        cand.trace.add("intra_batch", pass, survivors.empty() ? 0.0 : worst,
                       pass ? "" : "too similar to candidate " +
                                       batch[static_cast<std::size_t>(offender)].id);
        if (pass) survivors.push_back(idx);
    }
    return survivors;
}

/// Drops candidates whose maximum cosine similarity to any prompt reference
/// embedding exceeds theta (strictly).
inline std::vector<int> prompt_overlap_filter(std::vector<GenerationCandidate>& batch,
                                              const std::vector<int>& active,
                                              std::span<const Embedding> references,
                                              double theta) {
    if (!(theta > 0.0 && theta <= 1.0)) {
        throw InvalidInputError("prompt-overlap threshold must be in (0, 1]");
    }
    std::vector<int> survivors;
    for (int idx : active) {
        GenerationCandidate& cand = batch[static_cast<std::size_t>(idx)];
        double worst = -2.0;
        for (const Embedding& ref : references) {
            worst = std::max(worst, detail::safe_cosine_similarity(cand.embedding, ref));
        }
        const bool pass = references.empty() || worst <= theta;
        cand.trace.add("prompt_overlap", pass, references.empty() ? 0.0 : worst,
                       pass ? "" : "overlaps a prompt reference");
        if (pass) survivors.push_back(idx);
    }
    return survivors;
}

/// Judge prompt: domain profile (when present), candidate text, rationale and
/// the generation mode, so reason validity is judgeable. Over budget, the
/// profile's frequent_expressions are truncated first, then its topics.
inline PromptDoc build_judge_prompt(const std::optional<DomainProfile>& profile,
                                    const GenerationCandidate& candidate,
                                    const PromptTemplates& templates = {},
                                    std::size_t char_budget = 16000) {
    DomainProfile prof;
    const bool has_profile = profile.has_value();
    if (has_profile) prof = *profile;

    PromptDoc doc;
    auto assemble = [&]() {
        doc = PromptDoc{};
        doc.schema_id = "judge.v1";
        doc.role_instructions =
            substitute(templates.judge, {{"mode", to_string(candidate.mode)}});
        doc.context_blocks.push_back({"CLASS LABEL", candidate.class_label});
        if (has_profile) {
            nlohmann::json j;
            j["summary"] = prof.summary;
            j["topics"] = prof.topics;
            j["frequent_expressions"] = prof.frequent_expressions;
            doc.context_blocks.push_back({"DOMAIN PROFILE", j.dump(2)});
        } else {
            doc.context_blocks.push_back({"DOMAIN PROFILE", "none"});
        }
        doc.context_blocks.push_back(
            {"GENERATION MODE", std::string(to_string(candidate.mode))});
        doc.context_blocks.push_back({"CANDIDATE TEXT", candidate.text});
        doc.context_blocks.push_back(
            {"CANDIDATE RATIONALE",
             candidate.rationale.empty() ? "(absent)" : candidate.rationale});
        doc.response_schema =
            "Reply with a single JSON object and nothing else:\n"
            "{\"emotion_consistency\": integer 1..5,\n"
            " \"style_alignment\": integer 1..5,\n"
            " \"lexical_topic_coherence\": integer 1..5,\n"
            " \"diversity\": integer 1..5,\n"
            " \"reason_validity\": integer 1..5}";
        doc.expected_items = 1;
    };

    assemble();
    while (doc.rendered_size() > char_budget && has_profile &&
           !prof.frequent_expressions.empty()) {
        prof.frequent_expressions.pop_back();
        assemble();
    }
    while (doc.rendered_size() > char_budget && has_profile && !prof.topics.empty()) {
        prof.topics.pop_back();
        assemble();
    }
    return doc;
}

/// Strict parse of a judge reply into the five integer scores.
inline JudgeScores parse_judge_scores(const std::string& reply) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("judge reply is not valid JSON: ") + e.what(), reply);
    }
    JudgeScores s;
    auto read = [&j, &reply](const char* field) {
        if (!j.contains(field) || !j[field].is_number_integer()) {
            throw ParseError(std::string("judge reply missing integer field '") + field + "'",
                             reply);
        }
        return j[field].get<int>();
    };
    s.emotion_consistency = read("emotion_consistency");
    s.style_alignment = read("style_alignment");
    s.lexical_topic_coherence = read("lexical_topic_coherence");
    s.diversity = read("diversity");
    s.reason_validity = read("reason_validity");
    s.validate();
    return s;
}

/// Inclusive cutoff: a mean of exactly `threshold` is accepted.
inline bool judge_accept(const JudgeScores& scores, double threshold = 3.0) {
    scores.validate();
    return scores.mean() >= threshold;
}

}  // namespace ciegad
