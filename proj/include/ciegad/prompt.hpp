#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ciegad/errors.hpp"
#include "ciegad/geometry.hpp"

namespace ciegad {

/// 64-bit FNV-1a. Used for cache keys, mock seeding and deterministic ids;
/// intentionally not std::hash, whose value is implementation defined.
inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ull) {
    std::uint64_t h = seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the xor; good enough to decorrelate streams.
    std::uint64_t z = (a ^ (b + 0x9e3779b97f4a7c15ull)) + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Machine-readable placement context attached to generation prompts. The
/// deterministic mock generator reads it to position candidate embeddings;
/// HTTP backends ignore it. Never rendered into the prompt text.
struct GeometryHint {
    std::string mode;  // "interpolative" | "extrapolative"
    Embedding inner_centroid;
    Embedding outer_centroid;
    std::uint64_t salt = 0;  // varies per (class, cluster, cycle, mode)
};

/// One labeled block of prompt context.
struct PromptBlock {
    std::string label;
    std::string body;
};

/// A fully assembled request to an LLM backend. Rendering is deterministic:
/// identical inputs produce byte-identical text.
struct PromptDoc {
    std::string schema_id;  // "profile.v1" | "generation.v1" | "judge.v1"
    std::string role_instructions;
    std::vector<PromptBlock> context_blocks;
    std::string response_schema;
    int expected_items = 1;  // batch size the schema demands, 1 for scalar replies
    std::optional<GeometryHint> geometry_hint;

    std::string render() const {
        std::ostringstream out;
        out << role_instructions << "\n";
        for (const PromptBlock& b : context_blocks) {
            out << "\n### " << b.label << "\n" << b.body << "\n";
        }
        out << "\n### RESPONSE FORMAT\n" << response_schema << "\n";
        return out.str();
    }

    std::size_t rendered_size() const { return render().size(); }
};

/// {{key}} substitution for template text.
inline std::string substitute(std::string text,
                              const std::map<std::string, std::string>& vars) {
    for (const auto& [key, value] : vars) {
        const std::string needle = "{{" + key + "}}";
        std::size_t pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            text.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return text;
}

/// Instruction texts for the four prompt kinds. Defaults are compiled in;
/// load_dir overrides any of them from <dir>/<name>.tmpl so experiments can
/// reword prompts without a rebuild.
struct PromptTemplates {
    std::string profile =
        "You are a careful corpus analyst. You are shown text samples from one "
        "cluster of a labeled dataset: core examples sit near the cluster "
        "center, periphery examples sit at its edge. Two layers of information "
        "must be extracted. First, write a cluster-level summary of the "
        "stylistic and rhetorical characteristics shared by these samples. "
        "Second, list the salient topics and the frequently used expressions "
        "as short phrases. Ground every statement in the samples shown.";

    std::string interpolation =
        "You are a data augmentation writer for the class \"{{class_label}}\". "
        "Generate exactly {{batch}} new samples that fill the sparse region "
        "around the INNER examples. Stay close to the inner examples; treat "
        "the OUTER examples as a boundary you must not exceed. All {{batch}} "
        "outputs must represent distinct contexts. For each output, also write "
        "a brief rationale explaining how it stays within the region.";

    std::string extrapolation =
        "You are a data augmentation writer for the class \"{{class_label}}\". "
        "Generate exactly {{batch}} new samples that go beyond the OUTER "
        "examples, extending the distribution outward. Move away from the "
        "INNER examples; they mark the direction you must leave behind. All "
        "{{batch}} outputs must represent distinct contexts. For each output, "
        "also write a brief rationale explaining how it extends the boundary.";

    std::string judge =
        "You are a strict quality judge for augmented text. Score the "
        "candidate on a five-point Likert scale (1 = poor, 5 = excellent) for "
        "each of the five dimensions: emotion consistency, style alignment, "
        "lexical/topic coherence, diversity, and reason validity with respect "
        "to the stated {{mode}} intent. Judge against the domain profile when "
        "one is provided.";

    void load_dir(const std::filesystem::path& dir) {
        auto read = [&dir](const char* name, std::string& into) {
            const std::filesystem::path p = dir / (std::string(name) + ".tmpl");
            if (!std::filesystem::exists(p)) return;
            std::ifstream f(p);
            if (!f) throw ConfigError("cannot read template file: " + p.string());
            std::ostringstream buf;
            buf << f.rdbuf();
            into = buf.str();
            // Trailing newline from editors would leak into rendered prompts.
            while (!into.empty() && (into.back() == '\n' || into.back() == '\r')) {
                into.pop_back();
            }
        };
        read("profile", profile);
        read("interpolation", interpolation);
        read("extrapolation", extrapolation);
        read("judge", judge);
    }
};

}  // namespace ciegad
