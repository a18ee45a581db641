#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ciegad/dataset.hpp"
#include "ciegad/gateway.hpp"
#include "ciegad/http_gateway.hpp"
#include "ciegad/manifest.hpp"
#include "ciegad/metrics.hpp"
#include "ciegad/pipeline.hpp"

namespace ciegad {

struct MockSettings {
    int embed_dim = 8;
    std::string judge_mode = "accept_all";
    double hashed_accept_rate = 0.8;
    double interp_noise = 0.05;
};

/// Run configuration, loaded from a JSON file. Auth tokens never live here;
/// backends name the environment variable that holds them.
struct RunConfig {
    std::string dataset_path;
    std::string output_dir;
    HyperParams params;
    AblationToggles toggles;
    BackendConfig generator;
    BackendConfig judge;
    BackendConfig embedder;
    int worker_count = 1;
    bool mock_mode = false;
    MockSettings mock;
    std::string template_dir;
    std::string embed_cache_path;

    static RunConfig from_json(const nlohmann::json& j) {
        RunConfig c;
        c.dataset_path = j.value("dataset_path", "");
        c.output_dir = j.value("output_dir", "");
        if (j.contains("params")) from_json_params(j["params"], c.params);
        if (j.contains("toggles")) from_json_toggles(j["toggles"], c.toggles);
        auto read_backend = [&j](const char* name, BackendConfig& b) {
            if (!j.contains("backends") || !j["backends"].contains(name)) return;
            const nlohmann::json& bj = j["backends"][name];
            b.endpoint = bj.value("endpoint", b.endpoint);
            b.model_name = bj.value("model_name", b.model_name);
            b.auth_token_env = bj.value("auth_token_env", b.auth_token_env);
            b.timeout_s = bj.value("timeout_s", b.timeout_s);
            b.max_retries = bj.value("max_retries", b.max_retries);
            b.requests_per_minute = bj.value("requests_per_minute", b.requests_per_minute);
            b.retry_backoff_s = bj.value("retry_backoff_s", b.retry_backoff_s);
        };
        read_backend("generator", c.generator);
        read_backend("judge", c.judge);
        read_backend("embedder", c.embedder);
        c.worker_count = j.value("worker_count", 1);
        c.mock_mode = j.value("mock_mode", false);
        if (j.contains("mock")) {
            const nlohmann::json& m = j["mock"];
            c.mock.embed_dim = m.value("embed_dim", c.mock.embed_dim);
            c.mock.judge_mode = m.value("judge_mode", c.mock.judge_mode);
            c.mock.hashed_accept_rate = m.value("hashed_accept_rate", c.mock.hashed_accept_rate);
            c.mock.interp_noise = m.value("interp_noise", c.mock.interp_noise);
        }
        c.template_dir = j.value("template_dir", "");
        c.embed_cache_path = j.value("embed_cache_path", "");
        return c;
    }

    static RunConfig load(const std::filesystem::path& path) {
        std::ifstream f(path);
        if (!f) throw ConfigError("cannot open config: " + path.string());
        nlohmann::json j;
        try {
            f >> j;
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("config is not valid JSON: " + std::string(e.what()));
        }
        return from_json(j);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["dataset_path"] = dataset_path;
        j["output_dir"] = output_dir;
        j["params"] = ciegad::to_json(params);
        j["toggles"] = ciegad::to_json(toggles);
        auto backend_json = [](const BackendConfig& b) {
            return nlohmann::json{{"endpoint", b.endpoint},
                                  {"model_name", b.model_name},
                                  {"auth_token_env", b.auth_token_env},
                                  {"timeout_s", b.timeout_s},
                                  {"max_retries", b.max_retries},
                                  {"requests_per_minute", b.requests_per_minute},
                                  {"retry_backoff_s", b.retry_backoff_s}};
        };
        j["backends"] = nlohmann::json{{"generator", backend_json(generator)},
                                       {"judge", backend_json(judge)},
                                       {"embedder", backend_json(embedder)}};
        j["worker_count"] = worker_count;
        j["mock_mode"] = mock_mode;
        j["mock"] = nlohmann::json{{"embed_dim", mock.embed_dim},
                                   {"judge_mode", mock.judge_mode},
                                   {"hashed_accept_rate", mock.hashed_accept_rate},
                                   {"interp_noise", mock.interp_noise}};
        j["template_dir"] = template_dir;
        j["embed_cache_path"] = embed_cache_path;
        return j;
    }

    void validate() const {
        if (dataset_path.empty()) throw ConfigError("dataset_path is required");
        if (!std::filesystem::exists(dataset_path)) {
            throw ConfigError("dataset_path does not exist: " + dataset_path);
        }
        if (output_dir.empty()) throw ConfigError("output_dir is required");
        params.validate();
        toggles.validate();
        if (worker_count < 1) throw ConfigError("worker_count must be >= 1");
        if (mock_mode) {
            // Guards accidental spend: a mock run must not know any endpoint.
            if (!generator.endpoint.empty() || !judge.endpoint.empty() ||
                !embedder.endpoint.empty()) {
                throw ConfigError("mock_mode forbids real backend endpoints");
            }
            if (mock.embed_dim < 1) throw ConfigError("mock embed_dim must be >= 1");
        } else {
            if (generator.endpoint.empty()) throw ConfigError("generator endpoint is required");
            if (judge.endpoint.empty()) throw ConfigError("judge endpoint is required");
            generator.validate();
            judge.validate();
            if (!embedder.endpoint.empty()) embedder.validate();
        }
        if (!template_dir.empty() && !std::filesystem::exists(template_dir)) {
            throw ConfigError("template_dir does not exist: " + template_dir);
        }
    }
};

/// Reads a JSONL dataset, embedding any record that lacks an inline vector.
/// Records with vectors never touch the embedder.
inline std::vector<EmbeddedSample> ingest(const std::filesystem::path& path,
                                          EmbedderBackend* embedder) {
    std::vector<EmbeddedSample> samples = read_jsonl(path);
    std::vector<std::size_t> missing;
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (samples[i].vector.empty()) {
            missing.push_back(i);
            texts.push_back(samples[i].text);
        }
    }
    if (!missing.empty()) {
        if (!embedder) {
            throw IngestError("dataset " + path.string() +
                              " has records without vectors and no embedder is configured");
        }
        const std::vector<Embedding> fresh = embedder->embed(texts);
        std::size_t dim = samples.front().vector.empty() ? fresh.front().size()
                                                         : samples.front().vector.size();
        for (std::size_t i = 0; i < missing.size(); ++i) {
            if (fresh[i].size() != dim) {
                throw IngestError("embedder returned mixed dimensions");
            }
            samples[missing[i]].vector = fresh[i];
        }
    }
    return samples;
}

namespace detail {

struct BackendBundle {
    std::unique_ptr<ChatBackend> generator;
    std::unique_ptr<ChatBackend> judge;
    std::unique_ptr<EmbedderBackend> raw_embedder;
    std::unique_ptr<CachingEmbedder> embedder;

    PipelineBackends as_pipeline() const {
        return PipelineBackends{generator.get(), judge.get(),
                                embedder ? static_cast<EmbedderBackend*>(embedder.get())
                                         : raw_embedder.get()};
    }
};

inline BackendBundle make_backends(const RunConfig& cfg);

inline void print_error_summary(const std::string& type, const std::string& message) {
    nlohmann::json j;
    j["error"] = nlohmann::json{{"type", type}, {"message", message}};
    std::cerr << j.dump() << std::endl;
}

}  // namespace detail

inline detail::BackendBundle detail::make_backends(const RunConfig& cfg) {
    BackendBundle b;
    if (cfg.mock_mode) {
        MockChatOptions gen_opt;
        gen_opt.seed = cfg.params.seed;
        gen_opt.interp_noise = cfg.mock.interp_noise;
        b.generator = std::make_unique<MockChatBackend>(gen_opt);
        MockChatOptions judge_opt;
        judge_opt.seed = cfg.params.seed;
        judge_opt.judge_mode = cfg.mock.judge_mode;
        judge_opt.hashed_accept_rate = cfg.mock.hashed_accept_rate;
        b.judge = std::make_unique<MockChatBackend>(judge_opt);
        b.raw_embedder = std::make_unique<MockEmbedder>(cfg.mock.embed_dim, cfg.params.seed);
    } else {
        b.generator = std::make_unique<HttpChatBackend>(cfg.generator);
        b.judge = std::make_unique<HttpChatBackend>(cfg.judge);
        if (!cfg.embedder.endpoint.empty()) {
            b.raw_embedder = std::make_unique<HttpEmbedder>(cfg.embedder);
        }
    }
    if (b.raw_embedder) {
        b.embedder = std::make_unique<CachingEmbedder>(
            *b.raw_embedder,
            cfg.embed_cache_path.empty() ? std::filesystem::path{}
                                         : std::filesystem::path(cfg.embed_cache_path));
    }
    return b;
}

/// Exit codes: 0 success, 1 fatal error, 2 completed with shortfalls.
inline int command_augment(const RunConfig& cfg, bool dry_run = false) {
    try {
        cfg.validate();
        std::filesystem::create_directories(cfg.output_dir);
        PromptTemplates templates;
        if (!cfg.template_dir.empty()) templates.load_dir(cfg.template_dir);
        detail::BackendBundle backends = detail::make_backends(cfg);

        std::vector<EmbeddedSample> dataset =
            ingest(cfg.dataset_path, backends.as_pipeline().embedder);

        const std::filesystem::path out(cfg.output_dir);
        if (dry_run) {
            Preparation prep = prepare(dataset, cfg.params, nullptr);
            write_text(out / "plan.json", to_json(prep.plan).dump(2) + "\n");
            std::filesystem::create_directories(out / "dry_run_prompts");
            for (const auto& [label, clusters] : prep.clusters) {
                for (const ClusterModel& cluster : clusters) {
                    const std::string stem = label + "_c" + std::to_string(cluster.cluster_id);
                    const CorePeriphery cp =
                        select_core_periphery(cluster, prep.embeddings, cfg.params.profile_m);
                    std::vector<std::string> core_texts;
                    for (const std::string& id : cp.core_ids) {
                        core_texts.push_back(prep.texts.at(id));
                    }
                    std::vector<std::string> peri_texts;
                    for (const std::string& id : cp.periphery_ids) {
                        peri_texts.push_back(prep.texts.at(id));
                    }
                    write_text(out / "dry_run_prompts" / (stem + "_profile.txt"),
                               build_profile_prompt(core_texts, peri_texts, label, templates)
                                   .render());
                    if (cluster.size() < 2) continue;
                    DomainProfile placeholder;
                    placeholder.class_label = label;
                    placeholder.cluster_id = cluster.cluster_id;
                    placeholder.summary = "(dry-run placeholder profile)";
                    placeholder.topics = {"(dry-run)"};
                    placeholder.frequent_expressions = {"(dry-run)"};
                    const std::optional<DomainProfile> prof =
                        cfg.toggles.enable_profile ? std::optional<DomainProfile>(placeholder)
                                                   : std::nullopt;
                    if (cfg.toggles.enable_interpolation) {
                        const DirectionSets sets = select_interp_sets(
                            cluster, prep.embeddings, cfg.params.k_nn, cfg.params.set_size_m);
                        write_text(out / "dry_run_prompts" / (stem + "_interpolation.txt"),
                                   build_generation_prompt(
                                       GenMode::interpolative, prof, sets, prep.texts, label,
                                       cfg.params.batch_per_mode, templates,
                                       static_cast<std::size_t>(cfg.params.prompt_char_budget))
                                       .render());
                    }
                    if (cfg.toggles.enable_extrapolation) {
                        const DirectionSets sets = select_extrap_sets(
                            cluster, prep.embeddings, cfg.params.set_size_m,
                            cfg.params.quantile_lo, cfg.params.quantile_hi);
                        write_text(out / "dry_run_prompts" / (stem + "_extrapolation.txt"),
                                   build_generation_prompt(
                                       GenMode::extrapolative, prof, sets, prep.texts, label,
                                       cfg.params.batch_per_mode, templates,
                                       static_cast<std::size_t>(cfg.params.prompt_char_budget))
                                       .render());
                    }
                }
            }
            std::cout << "dry run complete: plan and prompts written to " << out.string()
                      << std::endl;
            return 0;
        }

        AugmentationResult result =
            run(dataset, cfg.params, cfg.toggles, backends.as_pipeline(), templates,
                cfg.worker_count);

        write_text(out / "manifest.json",
                   manifest_json(result, cfg.dataset_path, cfg.embed_cache_path).dump(2) + "\n");
        write_jsonl(out / "augmented.jsonl", result.accepted);
        write_jsonl(out / "real_embedded.jsonl", dataset);
        write_text(out / "metrics.json", to_json(result.metrics).dump(2) + "\n");
        write_text(out / "metrics.txt", metrics_table(result.metrics));
        std::cout << metrics_table(result.metrics);
        std::cout << "accepted " << result.accepted.size() << " of "
                  << result.plan.target_total << " target samples; " << result.shortfalls.size()
                  << " cluster shortfall(s)" << std::endl;
        return result.shortfalls.empty() && result.plan.unallocated.empty() ? 0 : 2;
    } catch (const Error& e) {
        detail::print_error_summary("ciegad_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        detail::print_error_summary("unexpected", e.what());
        return 1;
    }
}

/// Standalone metric audit over two embedded JSONL files. Real data is
/// re-clustered with the configured params so OER has its boundaries.
inline int command_metrics(const std::string& real_path, const std::string& generated_path,
                           const HyperParams& params,
                           const std::string& output_path = {}) {
    try {
        params.validate();
        std::vector<EmbeddedSample> real = ingest(real_path, nullptr);
        std::vector<EmbeddedSample> generated = ingest(generated_path, nullptr);
        if (real.empty()) throw IngestError("real dataset is empty");
        for (EmbeddedSample& g : generated) g.provenance = Provenance::generated;
        if (!generated.empty() && real.front().vector.size() != generated.front().vector.size()) {
            throw IngestError("real and generated vector dimensions differ");
        }

        std::map<std::string, std::vector<std::size_t>> by_class;
        for (std::size_t i = 0; i < real.size(); ++i) by_class[real[i].label].push_back(i);
        std::vector<ClusterModel> clusters;
        for (const auto& [label, indices] : by_class) {
            std::vector<Embedding> xs;
            std::vector<std::string> ids;
            for (std::size_t i : indices) {
                xs.push_back(real[i].vector);
                ids.push_back(real[i].id);
            }
            const int k = effective_cluster_count(static_cast<std::int64_t>(indices.size()),
                                                  params.kappa, params.high, params.low);
            for (ClusterModel& c :
                 kmeans(xs, ids, label, k, mix_seed(params.seed, fnv1a64("kmeans:" + label)))) {
                clusters.push_back(std::move(c));
            }
        }
        const MetricsReport report = metrics_report(clusters, real, generated, params.reg_cov);
        for (const std::string& w : report.warnings) std::cerr << "warning: " << w << "\n";
        if (!output_path.empty()) {
            write_text(output_path, to_json(report).dump(2) + "\n");
        }
        std::cout << metrics_table(report);
        return 0;
    } catch (const Error& e) {
        detail::print_error_summary("ciegad_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        detail::print_error_summary("unexpected", e.what());
        return 1;
    }
}

/// Flat table of every vector of a completed run (real + accepted) for
/// external projection tools.
inline int command_export_embeddings(const std::string& run_dir,
                                     const std::string& output_path = {}) {
    try {
        const std::filesystem::path dir(run_dir);
        const std::filesystem::path manifest_path = dir / "manifest.json";
        if (!std::filesystem::exists(manifest_path)) {
            throw ConfigError("missing manifest: " + manifest_path.string());
        }
        std::ifstream mf(manifest_path);
        nlohmann::json manifest;
        mf >> manifest;

        std::vector<EmbeddedSample> real = read_jsonl(dir / "real_embedded.jsonl");
        std::vector<EmbeddedSample> generated = read_jsonl(dir / "augmented.jsonl");

        // Real samples get their cluster from the manifest's cluster table.
        std::map<std::string, int> cluster_of;
        for (const auto& cj : manifest.at("real_clusters")) {
            for (const auto& id : cj.at("member_ids")) {
                cluster_of[id.get<std::string>()] = cj.at("cluster_id").get<int>();
            }
        }

        const std::filesystem::path out_path =
            output_path.empty() ? dir / "embeddings.tsv" : std::filesystem::path(output_path);
        std::ofstream out(out_path);
        if (!out) throw ConfigError("cannot write " + out_path.string());
        const std::size_t dim =
            real.empty() ? (generated.empty() ? 0 : generated.front().vector.size())
                         : real.front().vector.size();
        out << "id\tclass\tcluster\tprovenance";
        for (std::size_t i = 0; i < dim; ++i) out << "\tv" << i;
        out << "\n";
        auto emit = [&out](const EmbeddedSample& s, int cluster) {
            out << s.id << "\t" << s.label << "\t" << cluster << "\t"
                << to_string(s.provenance);
            for (double v : s.vector) out << "\t" << round_sig(v, 9);
            out << "\n";
        };
        for (const EmbeddedSample& s : real) {
            auto it = cluster_of.find(s.id);
            emit(s, it == cluster_of.end() ? -1 : it->second);
        }
        for (const EmbeddedSample& s : generated) emit(s, s.cluster_id.value_or(-1));
        std::cout << "wrote " << (real.size() + generated.size()) << " rows to "
                  << out_path.string() << std::endl;
        return 0;
    } catch (const Error& e) {
        detail::print_error_summary("ciegad_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        detail::print_error_summary("unexpected", e.what());
        return 1;
    }
}

inline int command_validate_config(const std::string& config_path) {
    try {
        const RunConfig cfg = RunConfig::load(config_path);
        cfg.validate();
        std::cout << cfg.to_json().dump(2) << std::endl;
        return 0;
    } catch (const Error& e) {
        detail::print_error_summary("config_error", e.what());
        return 1;
    } catch (const std::exception& e) {
        detail::print_error_summary("unexpected", e.what());
        return 1;
    }
}

}  // namespace ciegad
