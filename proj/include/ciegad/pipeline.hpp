#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <exception>
#include <iomanip>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ciegad/allocation.hpp"
#include "ciegad/clustering.hpp"
#include "ciegad/dataset.hpp"
#include "ciegad/gateway.hpp"
#include "ciegad/metrics.hpp"
#include "ciegad/params.hpp"
#include "ciegad/profiling.hpp"
#include "ciegad/quality.hpp"
#include "ciegad/synthesis.hpp"

namespace ciegad {

struct ShortfallReport {
    std::string class_label;
    int cluster_id = 0;
    long long quota = 0;
    long long accepted = 0;
    int cycles_run = 0;
    std::vector<std::string> causes;
};

struct RunMeta {
    std::uint64_t seed = 0;
    HyperParams params;
    AblationToggles toggles;
    std::string generator_id;
    std::string judge_id;
    std::string embedder_id;
    std::string created_at;   // wall clock; excluded from determinism checks
    std::string finished_at;  // wall clock; excluded from determinism checks
    long long dataset_size = 0;
    std::size_t dim = 0;
    std::vector<std::string> notes;
};

struct AugmentationResult {
    std::vector<EmbeddedSample> accepted;
    std::vector<GenerationCandidate> candidates;  // every candidate, with trace
    AllocationPlan plan;
    std::vector<ShortfallReport> shortfalls;
    std::vector<DomainProfile> profiles;
    std::map<std::string, std::vector<ClusterModel>> real_clusters;
    MetricsReport metrics;
    RunMeta meta;
    long long truncated_count = 0;  // passed every stage but arrived past quota
};

struct PipelineBackends {
    ChatBackend* generator = nullptr;
    ChatBackend* judge = nullptr;
    EmbedderBackend* embedder = nullptr;  // optional when every sample carries a vector
};

/// Members extended with the accepted samples, centroid recomputed over the
/// union. Provenance stays with each sample; the cluster only tracks ids.
inline ClusterModel update_cluster(const ClusterModel& cluster,
                                   std::span<const EmbeddedSample> accepted,
                                   const EmbeddingMap& embeddings) {
    ClusterModel next = cluster;
    for (const EmbeddedSample& s : accepted) {
        if (s.label != cluster.class_label) {
            throw InvalidInputError("update_cluster: sample " + s.id +
                                    " belongs to class " + s.label + ", cluster is " +
                                    cluster.class_label);
        }
        next.member_ids.push_back(s.id);
    }
    next.centroid = centroid_of_ids(next.member_ids, embeddings);
    return next;
}

namespace detail {

inline std::string iso_utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

struct ClusterTask {
    std::string label;
    std::size_t cluster_index = 0;  // into real_clusters[label]
    long long quota = 0;
};

struct ClusterOutcome {
    std::vector<EmbeddedSample> accepted;
    std::vector<GenerationCandidate> candidates;
    std::optional<ShortfallReport> shortfall;
    long long truncated = 0;
    std::vector<std::string> notes;
};

}  // namespace detail

/// Clustering and allocation without any backend traffic; `run` builds on
/// this and the CLI dry-run stops here.
struct Preparation {
    std::map<std::string, std::vector<ClusterModel>> clusters;
    AllocationPlan plan;
    EmbeddingMap embeddings;
    TextMap texts;
    std::size_t dim = 0;
};

inline Preparation prepare(std::vector<EmbeddedSample>& dataset, const HyperParams& params,
                           EmbedderBackend* embedder) {
    params.validate();
    if (dataset.empty()) throw ConfigError("dataset is empty");

    // Embed whatever arrived without a vector, in one batch.
    std::vector<std::size_t> missing;
    std::vector<std::string> missing_texts;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        if (dataset[i].vector.empty()) {
            missing.push_back(i);
            missing_texts.push_back(dataset[i].text);
        }
    }
    if (!missing.empty()) {
        if (!embedder) {
            throw ConfigError("dataset has samples without vectors and no embedder is configured");
        }
        const std::vector<Embedding> fresh = embedder->embed(missing_texts);
        for (std::size_t i = 0; i < missing.size(); ++i) {
            dataset[missing[i]].vector = fresh[i];
        }
    }

    Preparation prep;
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const EmbeddedSample& s = dataset[i];
        if (s.label.empty()) throw ConfigError("sample " + s.id + " has no label");
        if (prep.dim == 0) prep.dim = s.vector.size();
        if (s.vector.size() != prep.dim) {
            throw ConfigError("sample " + s.id + " has dimension " +
                              std::to_string(s.vector.size()) + ", expected " +
                              std::to_string(prep.dim));
        }
        if (!prep.embeddings.emplace(s.id, s.vector).second) {
            throw ConfigError("duplicate sample id: " + s.id);
        }
        prep.texts[s.id] = s.text;
        by_class[s.label].push_back(i);
    }

    for (const auto& [label, indices] : by_class) {
        const int k = effective_cluster_count(static_cast<std::int64_t>(indices.size()),
                                              params.kappa, params.high, params.low);
        std::vector<Embedding> xs;
        std::vector<std::string> ids;
        xs.reserve(indices.size());
        ids.reserve(indices.size());
        for (std::size_t i : indices) {
            xs.push_back(dataset[i].vector);
            ids.push_back(dataset[i].id);
        }
        prep.clusters[label] =
            kmeans(xs, ids, label, k, mix_seed(params.seed, fnv1a64("kmeans:" + label)));
    }

    HfgaOptions opt;
    opt.epsilon = params.epsilon;
    opt.weights = {params.weight_alpha, params.weight_beta, params.weight_gamma};
    opt.min_generatable_size = 2;  // selection needs two members
    prep.plan = hfga(prep.clusters, params.rho, prep.embeddings, opt);
    return prep;
}

namespace detail {

struct ClusterContext {
    const HyperParams* params;
    const AblationToggles* toggles;
    const PipelineBackends* backends;
    const PromptTemplates* templates;
    const ClusterModel* real_cluster;
    const std::optional<DomainProfile>* profile;
    const EmbeddingMap* base_embeddings;
    const TextMap* base_texts;
    std::size_t dim;
};

inline ClusterOutcome run_cluster(const ClusterContext& ctx, const ClusterTask& task) {
    const HyperParams& p = *ctx.params;
    const AblationToggles& tg = *ctx.toggles;
    ClusterOutcome out;

    // Working copies this cluster owns; grow as acceptances land.
    ClusterModel working = *ctx.real_cluster;
    EmbeddingMap embeddings;
    TextMap texts;
    for (const std::string& id : working.member_ids) {
        embeddings[id] = ctx.base_embeddings->at(id);
        texts[id] = ctx.base_texts->at(id);
    }

    const long long quota = task.quota;
    const int max_cycles = p.effective_max_cycles(quota);
    std::set<std::string> causes;

    std::vector<GenMode> modes;
    if (tg.enable_interpolation) modes.push_back(GenMode::interpolative);
    if (tg.enable_extrapolation) modes.push_back(GenMode::extrapolative);

    int cycle = 0;
    for (; cycle < max_cycles && static_cast<long long>(out.accepted.size()) < quota; ++cycle) {
        std::vector<EmbeddedSample> cycle_accepted;
        for (const GenMode mode : modes) {
            if (static_cast<long long>(out.accepted.size()) >= quota) break;

            const ClusterModel& sel_cluster =
                p.select_from_real_only ? *ctx.real_cluster : working;
            DirectionSets sets;
            try {
                sets = (mode == GenMode::interpolative)
                           ? select_interp_sets(sel_cluster, embeddings, p.k_nn, p.set_size_m)
                           : select_extrap_sets(sel_cluster, embeddings, p.set_size_m,
                                                p.quantile_lo, p.quantile_hi);
            } catch (const DegenerateClusterError& e) {
                causes.insert(std::string("set selection failed: ") + e.what());
                continue;
            }

            const std::uint64_t salt =
                fnv1a64(task.label + ":" + std::to_string(working.cluster_id) + ":" +
                        std::to_string(cycle) + ":" + to_string(mode));
            const PromptDoc prompt = build_generation_prompt(
                mode, *ctx.profile, sets, texts, task.label, p.batch_per_mode,
                *ctx.templates, static_cast<std::size_t>(p.prompt_char_budget), salt);

            GenerationBatch batch;
            try {
                batch = generate(*ctx.backends->generator, prompt);
            } catch (const BackendUnavailableError& e) {
                causes.insert(std::string("generator unavailable: ") + e.what());
                continue;
            } catch (const MalformedGenerationError& e) {
                causes.insert(std::string("malformed generation: ") + e.what());
                continue;
            }

            // Wrap into candidates; embed whatever lacks an explicit vector.
            std::vector<GenerationCandidate> cands;
            cands.reserve(batch.items.size());
            std::vector<std::size_t> need_embedding;
            std::vector<std::string> need_texts;
            const char mode_tag = mode == GenMode::interpolative ? 'i' : 'e';
            for (std::size_t i = 0; i < batch.items.size(); ++i) {
                GenerationCandidate c;
                c.id = "gen:" + task.label + ":" + std::to_string(working.cluster_id) + ":" +
                       std::to_string(cycle) + ":" + mode_tag + ":" + std::to_string(i);
                c.text = batch.items[i].text;
                c.rationale = batch.items[i].rationale;
                c.mode = mode;
                c.class_label = task.label;
                c.cluster_id = working.cluster_id;
                c.cycle = cycle;
                if (batch.items[i].explicit_embedding) {
                    c.embedding = *batch.items[i].explicit_embedding;
                } else {
                    need_embedding.push_back(i);
                    need_texts.push_back(c.text);
                }
                cands.push_back(std::move(c));
            }
            if (!need_embedding.empty()) {
                if (!ctx.backends->embedder) {
                    causes.insert("no embedder configured for candidate embeddings");
                    continue;
                }
                std::vector<Embedding> vecs;
                try {
                    vecs = ctx.backends->embedder->embed(need_texts);
                } catch (const Error& e) {
                    causes.insert(std::string("embedder failed: ") + e.what());
                    continue;
                }
                for (std::size_t i = 0; i < need_embedding.size(); ++i) {
                    cands[need_embedding[i]].embedding = vecs[i];
                }
            }
            for (const GenerationCandidate& c : cands) {
                if (c.embedding.size() != ctx.dim) {
                    throw ConfigError("candidate embedding dimension " +
                                      std::to_string(c.embedding.size()) +
                                      " drifted from dataset dimension " +
                                      std::to_string(ctx.dim));
                }
            }

            // Stage 1: geometric predicate (skipped entirely when disabled).
            std::vector<int> active;
            if (tg.enable_geometry_filter) {
                bool degenerate_direction = false;
                for (std::size_t i = 0; i < cands.size(); ++i) {
                    GenerationCandidate& c = cands[i];
                    bool pass = false;
                    double diag = 0.0;
                    std::string det;
                    try {
                        if (mode == GenMode::interpolative) {
                            diag = interp_projection(c.embedding, sets);
                            pass = p.interp_between ? interp_accept_between(c.embedding, sets)
                                                    : interp_accept(c.embedding, sets);
                        } else {
                            diag = extrap_projection(c.embedding, sets);
                            pass = extrap_accept(c.embedding, sets, p.margin_gamma);
                        }
                    } catch (const DegenerateDirectionError& e) {
                        degenerate_direction = true;
                        causes.insert(std::string("degenerate direction: ") + e.what());
                        det = "degenerate direction, cycle skipped";
                    }
                    c.trace.add("geometric", pass, diag, det);
                    if (pass) active.push_back(static_cast<int>(i));
                }
                if (degenerate_direction) active.clear();
            } else {
                active.resize(cands.size());
                for (std::size_t i = 0; i < cands.size(); ++i) active[i] = static_cast<int>(i);
            }

            // Stages 2 and 3: similarity filters.
            active = intra_batch_filter(cands, active, p.theta_intra);
            std::vector<Embedding> refs;
            for (const std::string& id : sets.inner_ids) refs.push_back(embeddings.at(id));
            for (const std::string& id : sets.outer_ids) refs.push_back(embeddings.at(id));
            active = prompt_overlap_filter(cands, active, refs, p.theta_prompt);

            // Stage 4: the judge, in generation order; quota enforced here.
            for (int idx : active) {
                GenerationCandidate& c = cands[static_cast<std::size_t>(idx)];
                const PromptDoc jprompt =
                    build_judge_prompt(*ctx.profile, c, *ctx.templates,
                                       static_cast<std::size_t>(p.prompt_char_budget));
                JudgeScores scores;
                try {
                    scores = judge(*ctx.backends->judge, jprompt);
                } catch (const InvalidScoresError& e) {
                    c.trace.add("judge", false, 0.0, std::string("judge failure: ") + e.what());
                    causes.insert("judge failures");
                    continue;
                } catch (const BackendUnavailableError& e) {
                    c.trace.add("judge", false, 0.0, std::string("judge unavailable: ") + e.what());
                    causes.insert(std::string("judge unavailable: ") + e.what());
                    continue;
                }
                c.scores = scores;
                const bool pass = judge_accept(scores, p.judge_threshold);
                c.trace.add("judge", pass, scores.mean());
                if (!pass) continue;
                if (static_cast<long long>(out.accepted.size()) >= quota) {
                    c.trace.truncated = true;
                    ++out.truncated;
                    continue;
                }
                c.trace.accepted = true;
                EmbeddedSample s;
                s.id = c.id;
                s.text = c.text;
                s.label = c.class_label;
                s.vector = c.embedding;
                s.provenance = Provenance::generated;
                s.mode = to_string(c.mode);
                s.cluster_id = c.cluster_id;
                s.cycle = c.cycle;
                s.judge_mean = scores.mean();
                out.accepted.push_back(s);
                cycle_accepted.push_back(std::move(s));
            }
            for (GenerationCandidate& c : cands) out.candidates.push_back(std::move(c));
        }

        // Alg step: fold this cycle's acceptances into the working set so the
        // next selection sees them.
        if (!cycle_accepted.empty()) {
            for (const EmbeddedSample& s : cycle_accepted) {
                embeddings[s.id] = s.vector;
                texts[s.id] = s.text;
            }
            working = update_cluster(working, cycle_accepted, embeddings);
        }
    }

    if (static_cast<long long>(out.accepted.size()) < quota) {
        ShortfallReport sr;
        sr.class_label = task.label;
        sr.cluster_id = working.cluster_id;
        sr.quota = quota;
        sr.accepted = static_cast<long long>(out.accepted.size());
        sr.cycles_run = cycle;
        if (cycle >= max_cycles) causes.insert("max cycles reached");
        sr.causes.assign(causes.begin(), causes.end());
        out.shortfall = sr;
    }
    return out;
}

}  // namespace detail

/// The full loop: embed, cluster, profile, allocate, then per cluster
/// generate / filter / judge / update until quotas are met, and finally the
/// metric suite over real versus accepted. Backend failures surface as
/// per-cluster shortfall causes; configuration defects abort.
inline AugmentationResult run(std::vector<EmbeddedSample> dataset, const HyperParams& params,
                              const AblationToggles& toggles, const PipelineBackends& backends,
                              const PromptTemplates& templates = {}, int worker_count = 1) {
    params.validate();
    toggles.validate();
    if (!backends.generator || !backends.judge) {
        throw ConfigError("pipeline needs generator and judge backends");
    }
    if (worker_count < 1) throw ConfigError("worker_count must be >= 1");

    AugmentationResult result;
    result.meta.created_at = detail::iso_utc_now();
    result.meta.seed = params.seed;
    result.meta.params = params;
    result.meta.toggles = toggles;
    result.meta.generator_id = backends.generator->id();
    result.meta.judge_id = backends.judge->id();
    result.meta.embedder_id = backends.embedder ? backends.embedder->id() : "none";
    result.meta.dataset_size = static_cast<long long>(dataset.size());

    Preparation prep = prepare(dataset, params, backends.embedder);
    result.meta.dim = prep.dim;
    result.real_clusters = prep.clusters;
    result.plan = prep.plan;
    for (const std::string& note : prep.plan.notes) result.meta.notes.push_back(note);

    // Profiles are built once, from real members only, before any generation.
    std::map<std::pair<std::string, int>, std::optional<DomainProfile>> profiles;
    for (const auto& [label, clusters] : prep.clusters) {
        for (const ClusterModel& cluster : clusters) {
            std::optional<DomainProfile> profile;
            if (toggles.enable_profile) {
                const CorePeriphery cp =
                    select_core_periphery(cluster, prep.embeddings, params.profile_m);
                std::vector<std::string> core_texts;
                for (const std::string& id : cp.core_ids) core_texts.push_back(prep.texts.at(id));
                std::vector<std::string> peri_texts;
                for (const std::string& id : cp.periphery_ids) {
                    peri_texts.push_back(prep.texts.at(id));
                }
                const PromptDoc doc =
                    build_profile_prompt(core_texts, peri_texts, label, templates);
                for (int attempt = 0; attempt < 2 && !profile.has_value(); ++attempt) {
                    try {
                        DomainProfile p = parse_profile(backends.generator->chat(doc), cluster);
                        p.source_core_ids = cp.core_ids;
                        p.source_periphery_ids = cp.periphery_ids;
                        p.overlap_flagged = cp.overlap;
                        profile = std::move(p);
                    } catch (const ParseError& e) {
                        if (attempt == 1) {
                            result.meta.notes.push_back("profile for " + label + "/" +
                                                        std::to_string(cluster.cluster_id) +
                                                        " failed to parse twice: " + e.what());
                        }
                    } catch (const BackendUnavailableError& e) {
                        result.meta.notes.push_back("profile for " + label + "/" +
                                                    std::to_string(cluster.cluster_id) +
                                                    " unavailable: " + e.what());
                        break;
                    }
                }
            }
            if (profile) result.profiles.push_back(*profile);
            profiles[{label, cluster.cluster_id}] = std::move(profile);
        }
    }

    // One task per cluster with a positive quota, in deterministic order.
    std::vector<detail::ClusterTask> tasks;
    for (const auto& [label, clusters] : prep.clusters) {
        const std::vector<long long>& quotas = prep.plan.cluster_quotas.at(label);
        for (std::size_t k = 0; k < clusters.size(); ++k) {
            if (quotas[k] > 0) tasks.push_back({label, k, quotas[k]});
        }
    }

    std::vector<detail::ClusterOutcome> outcomes(tasks.size());
    std::vector<detail::ClusterContext> contexts(tasks.size());
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        const detail::ClusterTask& t = tasks[i];
        detail::ClusterContext ctx;
        ctx.params = &params;
        ctx.toggles = &toggles;
        ctx.backends = &backends;
        ctx.templates = &templates;
        ctx.real_cluster = &prep.clusters.at(t.label)[t.cluster_index];
        ctx.profile = &profiles.at({t.label, ctx.real_cluster->cluster_id});
        ctx.base_embeddings = &prep.embeddings;
        ctx.base_texts = &prep.texts;
        ctx.dim = prep.dim;
        contexts[i] = ctx;
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tasks.size()) return;
            try {
                outcomes[i] = detail::run_cluster(contexts[i], tasks[i]);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    if (worker_count == 1 || tasks.size() <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int n = std::min<int>(worker_count, static_cast<int>(tasks.size()));
        pool.reserve(static_cast<std::size_t>(n));
        for (int w = 0; w < n; ++w) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (first_error) std::rethrow_exception(first_error);

    // Deterministic merge in task order.
    for (detail::ClusterOutcome& o : outcomes) {
        for (EmbeddedSample& s : o.accepted) result.accepted.push_back(std::move(s));
        for (GenerationCandidate& c : o.candidates) result.candidates.push_back(std::move(c));
        if (o.shortfall) result.shortfalls.push_back(*o.shortfall);
        result.truncated_count += o.truncated;
        for (std::string& n : o.notes) result.meta.notes.push_back(std::move(n));
    }

    std::vector<ClusterModel> all_clusters;
    for (const auto& [label, clusters] : prep.clusters) {
        for (const ClusterModel& c : clusters) all_clusters.push_back(c);
    }
    result.metrics = metrics_report(all_clusters, dataset, result.accepted, params.reg_cov);
    result.meta.finished_at = detail::iso_utc_now();
    return result;
}

}  // namespace ciegad
