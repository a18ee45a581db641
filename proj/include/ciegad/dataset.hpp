#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ciegad/errors.hpp"
#include "ciegad/geometry.hpp"

namespace ciegad {

enum class Provenance { real, generated };

inline const char* to_string(Provenance p) {
    return p == Provenance::real ? "real" : "generated";
}

/// One corpus item. Generated samples additionally carry where and how they
/// were produced.
struct EmbeddedSample {
    std::string id;
    std::string text;
    std::string label;
    Embedding vector;  // empty until embedded
    Provenance provenance = Provenance::real;

    std::optional<std::string> mode;
    std::optional<int> cluster_id;
    std::optional<int> cycle;
    std::optional<double> judge_mean;
};

/// Rounds to `digits` significant decimal digits, the precision used for
/// vectors in text outputs (the embedding cache keeps full precision).
inline double round_sig(double v, int digits = 9) {
    if (v == 0.0 || !std::isfinite(v)) return v == 0.0 ? 0.0 : v;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
    return std::strtod(buf, nullptr);
}

/// Parses a JSONL dataset: one object per line with required string fields
/// id, text, label and an optional numeric array `vector`. Errors carry the
/// offending line number; mixed vector dimensions are fatal.
inline std::vector<EmbeddedSample> read_jsonl(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IngestError("cannot open dataset: " + path.string());
    std::vector<EmbeddedSample> out;
    std::string line;
    std::size_t line_no = 0;
    std::size_t dim = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw IngestError("line " + std::to_string(line_no) + ": invalid JSON: " + e.what());
        }
        EmbeddedSample s;
        for (const char* field : {"id", "text", "label"}) {
            if (!j.contains(field) || !j[field].is_string()) {
                throw IngestError("line " + std::to_string(line_no) +
                                  ": missing string field '" + field + "'");
            }
        }
        s.id = j["id"].get<std::string>();
        s.text = j["text"].get<std::string>();
        s.label = j["label"].get<std::string>();
        if (j.contains("vector")) {
            if (!j["vector"].is_array() || j["vector"].empty()) {
                throw IngestError("line " + std::to_string(line_no) +
                                  ": 'vector' must be a non-empty array");
            }
            for (const auto& v : j["vector"]) {
                if (!v.is_number()) {
                    throw IngestError("line " + std::to_string(line_no) +
                                      ": 'vector' must contain numbers");
                }
                s.vector.push_back(v.get<double>());
            }
            if (dim == 0) {
                dim = s.vector.size();
            } else if (dim != s.vector.size()) {
                throw IngestError("line " + std::to_string(line_no) +
                                  ": vector dimension " + std::to_string(s.vector.size()) +
                                  " differs from earlier dimension " + std::to_string(dim));
            }
        }
        if (j.value("provenance", "real") == "generated") s.provenance = Provenance::generated;
        if (j.contains("mode") && j["mode"].is_string()) s.mode = j["mode"].get<std::string>();
        if (j.contains("cluster_id") && j["cluster_id"].is_number_integer()) {
            s.cluster_id = j["cluster_id"].get<int>();
        }
        if (j.contains("cycle") && j["cycle"].is_number_integer()) {
            s.cycle = j["cycle"].get<int>();
        }
        if (j.contains("judge_mean") && j["judge_mean"].is_number()) {
            s.judge_mean = j["judge_mean"].get<double>();
        }
        out.push_back(std::move(s));
    }
    return out;
}

inline nlohmann::json sample_to_json(const EmbeddedSample& s, int sig_digits = 9) {
    nlohmann::json j;
    j["id"] = s.id;
    j["text"] = s.text;
    j["label"] = s.label;
    if (!s.vector.empty()) {
        nlohmann::json v = nlohmann::json::array();
        for (double x : s.vector) v.push_back(round_sig(x, sig_digits));
        j["vector"] = std::move(v);
    }
    if (s.provenance == Provenance::generated) {
        j["provenance"] = "generated";
        if (s.mode) j["mode"] = *s.mode;
        if (s.cluster_id) j["cluster_id"] = *s.cluster_id;
        if (s.cycle) j["cycle"] = *s.cycle;
        if (s.judge_mean) j["judge_mean"] = round_sig(*s.judge_mean, sig_digits);
    }
    return j;
}

inline void write_jsonl(const std::filesystem::path& path,
                        std::span<const EmbeddedSample> samples, int sig_digits = 9) {
    std::ofstream f(path);
    if (!f) throw IngestError("cannot write dataset: " + path.string());
    for (const EmbeddedSample& s : samples) {
        f << sample_to_json(s, sig_digits).dump() << "\n";
    }
}

}  // namespace ciegad
