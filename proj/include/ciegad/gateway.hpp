#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ciegad/errors.hpp"
#include "ciegad/geometry.hpp"
#include "ciegad/prompt.hpp"
#include "ciegad/quality.hpp"

namespace ciegad {

struct BackendConfig {
    std::string endpoint;        // e.g. https://api.openai.com/v1/chat/completions
    std::string model_name;
    std::string auth_token_env;  // environment variable holding the bearer token
    double timeout_s = 30.0;
    int max_retries = 3;
    int requests_per_minute = 0;  // 0 disables rate limiting
    double retry_backoff_s = 0.5;

    void validate() const {
        if (timeout_s <= 0.0) throw ConfigError("backend timeout must be > 0");
        if (max_retries < 0 || max_retries > 5) {
            throw ConfigError("backend max_retries must be in [0, 5]");
        }
        if (requests_per_minute < 0) throw ConfigError("requests_per_minute must be >= 0");
        if (retry_backoff_s < 0.0) throw ConfigError("retry_backoff_s must be >= 0");
    }
};

/// Sliding-window limiter: at most `per_minute` acquisitions within any 60 s
/// window. Clock and sleep are injectable so tests can run on virtual time.
class RateLimiter {
public:
    using NowFn = std::function<double()>;      // seconds, monotonic
    using SleepFn = std::function<void(double)>;  // seconds

    explicit RateLimiter(int per_minute, NowFn now = default_now,
                         SleepFn sleep = default_sleep)
        : per_minute_(per_minute), now_(std::move(now)), sleep_(std::move(sleep)) {}

    void acquire() {
        if (per_minute_ <= 0) return;
        for (;;) {
            double wait = 0.0;
            {
                std::lock_guard<std::mutex> lock(mutex_);
                const double t = now_();
                while (!stamps_.empty() && stamps_.front() <= t - 60.0) {
                    stamps_.pop_front();
                }
                if (static_cast<int>(stamps_.size()) < per_minute_) {
                    stamps_.push_back(t);
                    return;
                }
                wait = stamps_.front() + 60.0 - t;
            }
            sleep_(std::max(wait, 1e-3));
        }
    }

    static double default_now() {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now().time_since_epoch())
            .count();
    }
    static void default_sleep(double s) {
        std::this_thread::sleep_for(std::chrono::duration<double>(s));
    }

private:
    int per_minute_;
    NowFn now_;
    SleepFn sleep_;
    std::mutex mutex_;
    std::deque<double> stamps_;
};

/// A text-in, text-out LLM capability. Implementations must be safe to call
/// from concurrent cluster workers.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(const PromptDoc& prompt) = 0;
    virtual std::string id() const = 0;
    virtual bool is_mock() const { return false; }
};

struct GenerationItem {
    std::string text;
    std::string rationale;
    std::optional<Embedding> explicit_embedding;  // mock backends only
};

struct GenerationBatch {
    std::vector<GenerationItem> items;
    std::string raw_reply;
    std::string backend_id;
};

/// Parses a generation reply against the prompt's schema: exactly
/// expected_items objects with string text and rationale.
inline GenerationBatch parse_generation_reply(const std::string& reply,
                                              int expected_items,
                                              bool allow_explicit_embedding) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(reply);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("generation reply is not valid JSON: ") + e.what(),
                         reply);
    }
    if (!j.contains("items") || !j["items"].is_array()) {
        throw ParseError("generation reply missing 'items' array", reply);
    }
    const auto& items = j["items"];
    if (static_cast<int>(items.size()) != expected_items) {
        throw ParseError("generation reply has " + std::to_string(items.size()) +
                             " items, expected " + std::to_string(expected_items),
                         reply);
    }
    GenerationBatch batch;
    batch.raw_reply = reply;
    for (const auto& item : items) {
        if (!item.is_object() || !item.contains("text") || !item["text"].is_string() ||
            !item.contains("rationale") || !item["rationale"].is_string()) {
            throw ParseError("generation item must carry string 'text' and 'rationale'",
                             reply);
        }
        GenerationItem out;
        out.text = item["text"].get<std::string>();
        out.rationale = item["rationale"].get<std::string>();
        if (allow_explicit_embedding && item.contains("embedding") &&
            item["embedding"].is_array()) {
            Embedding e;
            for (const auto& v : item["embedding"]) {
                if (!v.is_number()) {
                    throw ParseError("generation item embedding must be numeric", reply);
                }
                e.push_back(v.get<double>());
            }
            out.explicit_embedding = std::move(e);
        }
        batch.items.push_back(std::move(out));
    }
    return batch;
}

/// One generation call with a single re-ask on schema violation. Transport
/// retries live inside the backend.
inline GenerationBatch generate(ChatBackend& backend, const PromptDoc& prompt) {
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string reply = backend.chat(prompt);
        try {
            GenerationBatch batch = parse_generation_reply(reply, prompt.expected_items,
                                                           backend.is_mock());
            batch.backend_id = backend.id();
            return batch;
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw MalformedGenerationError("generation reply malformed after re-ask: " + last_error);
}

/// One judge call with a single re-ask on schema violation or out-of-range
/// scores.
inline JudgeScores judge(ChatBackend& backend, const PromptDoc& prompt) {
    std::string last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string reply = backend.chat(prompt);
        try {
            return parse_judge_scores(reply);
        } catch (const ParseError& e) {
            last_error = e.what();
        } catch (const InvalidScoresError& e) {
            last_error = e.what();
        }
    }
    throw InvalidScoresError("judge reply invalid after re-ask: " + last_error);
}

// ---------------------------------------------------------------------------
// Mock backends
// ---------------------------------------------------------------------------

/// Tuning knobs for the deterministic offline backends.
struct MockChatOptions {
    std::uint64_t seed = 0;

    // Judge behavior: accept_all, reject_all, hashed (deterministic mix with
    // roughly hashed_accept_rate acceptances) or scripted (cycles `script`).
    std::string judge_mode = "accept_all";
    double hashed_accept_rate = 0.8;
    std::vector<JudgeScores> script;

    // Interpolative candidates get isotropic noise of this scale, relative to
    // the inner->outer direction length.
    double interp_noise = 0.05;

    // Fault injection for tests: the first N generation (judge) calls return
    // schema-violating replies.
    int malformed_generation_calls = 0;
    int malformed_judge_calls = 0;
};

/// Deterministic stand-in for both the generator and the judge. Generation
/// replies carry explicit embeddings placed relative to the prompt's geometry
/// hint: interpolative candidates at z_in + u * (z_out - z_in) + noise with
/// u ~ U[-0.5, 0.5], extrapolative candidates at z_O + u * (z_O - z_I) with
/// u ~ U[-0.1, 0.5]. Every reply is a pure function of (prompt, seed).
class MockChatBackend : public ChatBackend {
public:
    explicit MockChatBackend(MockChatOptions opt = {}) : opt_(std::move(opt)) {
        malformed_generation_left_ = opt_.malformed_generation_calls;
        malformed_judge_left_ = opt_.malformed_judge_calls;
    }

    std::string chat(const PromptDoc& prompt) override {
        ++calls_;
        if (prompt.schema_id == "profile.v1") return profile_reply(prompt);
        if (prompt.schema_id == "generation.v1") return generation_reply(prompt);
        if (prompt.schema_id == "judge.v1") return judge_reply(prompt);
        throw InvalidInputError("mock backend cannot serve schema " + prompt.schema_id);
    }

    std::string id() const override {
        return "mock:chat:seed=" + std::to_string(opt_.seed);
    }
    bool is_mock() const override { return true; }

    long long call_count() const { return calls_.load(); }

private:
    std::string profile_reply(const PromptDoc& prompt) const {
        const std::uint64_t h = fnv1a64(prompt.render(), mix_seed(opt_.seed, 0x9f));
        nlohmann::json j;
        std::ostringstream summary;
        summary << "Deterministic mock profile " << std::hex << h
                << ": concise register, shared vocabulary, stable tone.";
        j["summary"] = summary.str();
        j["topics"] = {"topic-" + hex_tag(h, 0), "topic-" + hex_tag(h, 1),
                       "topic-" + hex_tag(h, 2)};
        j["frequent_expressions"] = {"expr-" + hex_tag(h, 3), "expr-" + hex_tag(h, 4)};
        return j.dump();
    }

    std::string generation_reply(const PromptDoc& prompt) const {
        if (take_fault(malformed_generation_left_)) {
            return R"({"items": [{"text": "stub", "rationale": "missing siblings"}]})";
        }
        if (!prompt.geometry_hint.has_value()) {
            throw InvalidInputError("mock generation needs a geometry hint");
        }
        const GeometryHint& hint = *prompt.geometry_hint;
        const bool interp = hint.mode == "interpolative";
        // Interpolative walks z_in + u * (z_out - z_in); extrapolative walks
        // z_O + u * (z_O - z_I), where the hint's outer centroid is z_O.
        const Embedding& base = interp ? hint.inner_centroid : hint.outer_centroid;
        Embedding dir(base.size(), 0.0);
        for (std::size_t i = 0; i < base.size(); ++i) {
            dir[i] = hint.outer_centroid[i] - hint.inner_centroid[i];
        }
        const double dir_norm = norm(dir);

        std::mt19937_64 rng(mix_seed(opt_.seed, hint.salt));
        std::uniform_real_distribution<double> u_interp(-0.5, 0.5);
        std::uniform_real_distribution<double> u_extrap(-0.1, 0.5);
        std::normal_distribution<double> gauss(0.0, 1.0);

        nlohmann::json items = nlohmann::json::array();
        for (int i = 0; i < prompt.expected_items; ++i) {
            const double u = interp ? u_interp(rng) : u_extrap(rng);
            Embedding x(base.size());
            for (std::size_t k = 0; k < base.size(); ++k) x[k] = base[k] + u * dir[k];
            if (interp && !base.empty()) {
                const double scale =
                    opt_.interp_noise * dir_norm / std::sqrt(static_cast<double>(base.size()));
                for (double& v : x) v += scale * gauss(rng);
            }
            nlohmann::json item;
            std::ostringstream text;
            text << "synthetic " << hint.mode << " sample " << std::hex
                 << mix_seed(hint.salt, static_cast<std::uint64_t>(i)) << std::dec << " #"
                 << i;
            item["text"] = text.str();
            std::ostringstream why;
            why << "placed at u=" << u << " along the " << hint.mode << " direction";
            item["rationale"] = why.str();
            item["embedding"] = x;
            items.push_back(std::move(item));
        }
        nlohmann::json j;
        j["items"] = std::move(items);
        return j.dump();
    }

    std::string judge_reply(const PromptDoc& prompt) const {
        if (take_fault(malformed_judge_left_)) return R"({"verdict": "fine"})";
        JudgeScores s;
        if (opt_.judge_mode == "accept_all") {
            s = {5, 5, 5, 5, 5};
        } else if (opt_.judge_mode == "reject_all") {
            s = {1, 1, 1, 1, 1};
        } else if (opt_.judge_mode == "scripted") {
            if (opt_.script.empty()) throw ConfigError("scripted judge without a script");
            const auto n = script_cursor_.fetch_add(1);
            s = opt_.script[static_cast<std::size_t>(n) % opt_.script.size()];
        } else if (opt_.judge_mode == "hashed") {
            const std::uint64_t h = fnv1a64(prompt.render(), mix_seed(opt_.seed, 0x1d));
            const bool accept =
                (h % 10000) < static_cast<std::uint64_t>(opt_.hashed_accept_rate * 10000.0);
            const int base = accept ? 4 : 2;
            s = {base, base, base, base, base};
        } else {
            throw ConfigError("unknown mock judge mode: " + opt_.judge_mode);
        }
        nlohmann::json j;
        j["emotion_consistency"] = s.emotion_consistency;
        j["style_alignment"] = s.style_alignment;
        j["lexical_topic_coherence"] = s.lexical_topic_coherence;
        j["diversity"] = s.diversity;
        j["reason_validity"] = s.reason_validity;
        return j.dump();
    }

    static std::string hex_tag(std::uint64_t h, int slot) {
        std::ostringstream out;
        out << std::hex << mix_seed(h, static_cast<std::uint64_t>(slot)) % 0xffff;
        return out.str();
    }

    static bool take_fault(std::atomic<int>& counter) {
        int current = counter.load();
        while (current > 0) {
            if (counter.compare_exchange_weak(current, current - 1)) return true;
        }
        return false;
    }

    MockChatOptions opt_;
    mutable std::atomic<long long> calls_{0};
    mutable std::atomic<long long> script_cursor_{0};
    mutable std::atomic<int> malformed_generation_left_{0};
    mutable std::atomic<int> malformed_judge_left_{0};
};

class EmbedderBackend {
public:
    virtual ~EmbedderBackend() = default;
    virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string id() const = 0;
};

/// Deterministic embedder: each text maps to a unit vector derived from a
/// seeded content hash. Empty strings are valid inputs.
class MockEmbedder : public EmbedderBackend {
public:
    MockEmbedder(int dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim < 1) throw ConfigError("mock embedder dimension must be >= 1");
    }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw InvalidInputError("embed of an empty text list");
        ++calls_;
        std::vector<Embedding> out;
        out.reserve(texts.size());
        for (const std::string& t : texts) {
            std::mt19937_64 rng(mix_seed(seed_, fnv1a64(t)));
            std::normal_distribution<double> gauss(0.0, 1.0);
            Embedding e(dim_);
            for (double& v : e) v = gauss(rng);
            const double n = norm(e);
            // A zero draw is practically impossible; guard anyway.
            if (n == 0.0) {
                e[0] = 1.0;
            } else {
                for (double& v : e) v /= n;
            }
            out.push_back(std::move(e));
        }
        return out;
    }

    std::string id() const override {
        return "mock:embed:d=" + std::to_string(dim_) + ":seed=" + std::to_string(seed_);
    }

    long long call_count() const { return calls_.load(); }

private:
    int dim_;
    std::uint64_t seed_;
    std::atomic<long long> calls_{0};
};

/// Content-addressed embedding cache wrapping another embedder. Hits are
/// served from memory; misses go to the inner backend and are appended to the
/// cache file (when configured) as one JSON record per line under a header
/// that pins the dimension and embedder identity.
class CachingEmbedder : public EmbedderBackend {
public:
    CachingEmbedder(EmbedderBackend& inner, std::filesystem::path cache_file = {})
        : inner_(inner), path_(std::move(cache_file)) {
        if (!path_.empty() && std::filesystem::exists(path_)) load();
    }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw InvalidInputError("embed of an empty text list");
        std::vector<std::string> miss_texts;
        std::vector<std::string> miss_keys;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            for (const std::string& t : texts) {
                const std::string key = hash_key(t);
                if (!cache_.count(key) && !std::count(miss_keys.begin(), miss_keys.end(), key)) {
                    miss_texts.push_back(t);
                    miss_keys.push_back(key);
                }
            }
        }
        if (!miss_texts.empty()) {
            const std::vector<Embedding> fresh = inner_.embed(miss_texts);
            std::lock_guard<std::mutex> lock(mutex_);
            for (std::size_t i = 0; i < miss_texts.size(); ++i) {
                check_dim(fresh[i]);
                cache_[miss_keys[i]] = fresh[i];
                append_record(miss_keys[i], fresh[i]);
            }
        }
        std::vector<Embedding> out;
        out.reserve(texts.size());
        std::lock_guard<std::mutex> lock(mutex_);
        for (const std::string& t : texts) out.push_back(cache_.at(hash_key(t)));
        return out;
    }

    std::string id() const override { return inner_.id(); }

    static std::string hash_key(const std::string& text) {
        std::ostringstream out;
        out << std::hex << fnv1a64(text);
        return out.str();
    }

    std::size_t cached_count() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return cache_.size();
    }

private:
    void check_dim(const Embedding& e) {
        if (dim_ == 0) {
            dim_ = e.size();
        } else if (dim_ != e.size()) {
            throw ConfigError("embedding dimension drift: cache holds d=" +
                              std::to_string(dim_) + ", backend returned d=" +
                              std::to_string(e.size()));
        }
    }

    void load() {
        std::ifstream f(path_);
        if (!f) throw ConfigError("cannot read embedding cache: " + path_.string());
        std::string line;
        bool saw_header = false;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const nlohmann::json j = nlohmann::json::parse(line);
            if (!saw_header) {
                if (j.value("type", "") != "ciegad-embed-cache") {
                    throw ConfigError("embedding cache header missing: " + path_.string());
                }
                if (j.value("embedder", "") != inner_.id()) {
                    throw ConfigError("embedding cache was built by a different embedder: " +
                                      j.value("embedder", ""));
                }
                dim_ = j.at("dim").get<std::size_t>();
                saw_header = true;
                continue;
            }
            Embedding e = j.at("vector").get<Embedding>();
            check_dim(e);
            cache_[j.at("hash").get<std::string>()] = std::move(e);
        }
    }

    void append_record(const std::string& key, const Embedding& e) {
        if (path_.empty()) return;
        std::ofstream f(path_, std::ios::app);
        if (!f) throw ConfigError("cannot append to embedding cache: " + path_.string());
        if (!header_written_ && std::filesystem::file_size(path_) == 0) {
            nlohmann::json h;
            h["type"] = "ciegad-embed-cache";
            h["version"] = 1;
            h["dim"] = dim_;
            h["embedder"] = inner_.id();
            f << h.dump() << "\n";
        }
        header_written_ = true;
        nlohmann::json r;
        r["hash"] = key;
        r["dim"] = e.size();
        r["vector"] = e;
        f << r.dump() << "\n";
    }

    EmbedderBackend& inner_;
    std::filesystem::path path_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, Embedding> cache_;
    std::size_t dim_ = 0;
    bool header_written_ = false;
};

}  // namespace ciegad
