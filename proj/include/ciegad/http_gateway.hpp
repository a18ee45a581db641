#pragma once

#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "ciegad/gateway.hpp"

namespace ciegad {

namespace detail {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // /path, defaults to /
};

inline SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must include a scheme: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string bearer_token(const std::string& env_name) {
    if (env_name.empty()) return {};
    const char* v = std::getenv(env_name.c_str());
    return v ? std::string(v) : std::string();
}

}  // namespace detail

/// Chat-completion style HTTP backend. POSTs
///   {"model": ..., "messages": [{"role", "content"}...]}
/// (temperature omitted so the provider default applies) and reads the reply
/// from choices[0].message.content. Transport failures and 5xx/429 responses
/// are retried with exponential backoff up to max_retries; other 4xx statuses
/// fail immediately since a retry cannot fix them.
class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig cfg)
        : cfg_(std::move(cfg)),
          url_(detail::split_url(cfg_.endpoint)),
          limiter_(cfg_.requests_per_minute) {
        cfg_.validate();
        if (cfg_.endpoint.empty()) throw ConfigError("http backend needs an endpoint");
    }

    std::string chat(const PromptDoc& prompt) override {
        nlohmann::json body;
        body["model"] = cfg_.model_name;
        nlohmann::json messages = nlohmann::json::array();
        messages.push_back({{"role", "system"}, {"content", prompt.role_instructions}});
        std::string user;
        for (const PromptBlock& b : prompt.context_blocks) {
            user += "### " + b.label + "\n" + b.body + "\n\n";
        }
        user += "### RESPONSE FORMAT\n" + prompt.response_schema;
        messages.push_back({{"role", "user"}, {"content", user}});
        body["messages"] = std::move(messages);

        const std::string reply = post_with_retries(body.dump());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(reply);
        } catch (const nlohmann::json::parse_error& e) {
            throw BackendUnavailableError(std::string("chat response is not JSON: ") +
                                          e.what());
        }
        try {
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw BackendUnavailableError("chat response missing choices[0].message.content");
        }
    }

    std::string id() const override { return "http:" + cfg_.model_name + "@" + cfg_.endpoint; }

private:
    std::string post_with_retries(const std::string& body) {
        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                RateLimiter::default_sleep(cfg_.retry_backoff_s * (1 << (attempt - 1)));
            }
            limiter_.acquire();
            // One client per request: httplib clients are not safe to share
            // across the concurrent cluster workers.
            httplib::Client client(url_.base);
            client.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_s));
            client.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_s));
            httplib::Headers headers;
            const std::string token = detail::bearer_token(cfg_.auth_token_env);
            if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
            auto res = client.Post(url_.path, headers, body, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 200 && res->status < 300) return res->body;
            last_error = "http status " + std::to_string(res->status);
            if (res->status >= 400 && res->status < 500 && res->status != 429) {
                throw BackendUnavailableError(id() + ": " + last_error + ": " + res->body);
            }
        }
        throw BackendUnavailableError(id() + ": retries exhausted: " + last_error);
    }

    BackendConfig cfg_;
    detail::SplitUrl url_;
    RateLimiter limiter_;
};

/// Embedding HTTP backend: POSTs {"model": ..., "input": [texts...]} and
/// reads data[i].embedding, order-aligned with the input.
class HttpEmbedder : public EmbedderBackend {
public:
    explicit HttpEmbedder(BackendConfig cfg)
        : cfg_(std::move(cfg)),
          url_(detail::split_url(cfg_.endpoint)),
          limiter_(cfg_.requests_per_minute) {
        cfg_.validate();
    }

    std::vector<Embedding> embed(const std::vector<std::string>& texts) override {
        if (texts.empty()) throw InvalidInputError("embed of an empty text list");
        nlohmann::json body;
        body["model"] = cfg_.model_name;
        body["input"] = texts;

        std::string last_error;
        for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
            if (attempt > 0) {
                RateLimiter::default_sleep(cfg_.retry_backoff_s * (1 << (attempt - 1)));
            }
            limiter_.acquire();
            httplib::Client client(url_.base);
            client.set_connection_timeout(std::chrono::duration<double>(cfg_.timeout_s));
            client.set_read_timeout(std::chrono::duration<double>(cfg_.timeout_s));
            httplib::Headers headers;
            const std::string token = detail::bearer_token(cfg_.auth_token_env);
            if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
            auto res = client.Post(url_.path, headers, body.dump(), "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                last_error = "http status " + std::to_string(res->status);
                if (res->status >= 400 && res->status < 500 && res->status != 429) {
                    throw BackendUnavailableError(id() + ": " + last_error);
                }
                continue;
            }
            try {
                const nlohmann::json j = nlohmann::json::parse(res->body);
                const auto& data = j.at("data");
                if (data.size() != texts.size()) {
                    throw BackendUnavailableError(id() + ": embedding count mismatch");
                }
                std::vector<Embedding> out;
                out.reserve(texts.size());
                for (const auto& item : data) {
                    out.push_back(item.at("embedding").get<Embedding>());
                }
                return out;
            } catch (const nlohmann::json::exception& e) {
                throw BackendUnavailableError(std::string("embedding response malformed: ") +
                                              e.what());
            }
        }
        throw BackendUnavailableError(id() + ": retries exhausted: " + last_error);
    }

    std::string id() const override {
        return "http:" + cfg_.model_name + "@" + cfg_.endpoint;
    }

private:
    BackendConfig cfg_;
    detail::SplitUrl url_;
    RateLimiter limiter_;
};

}  // namespace ciegad
