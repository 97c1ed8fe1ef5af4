#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "zelda/vector_core.hpp"

namespace zelda {

enum class PromptGroup { kQuery, kLabel, kQuality };

struct PromptInfo {
    std::string term;  // before template expansion
    std::string text;  // after template expansion; what the text encoder sees
    PromptGroup group = PromptGroup::kLabel;
};

inline constexpr const char* kDefaultTemplate = "a photo of {}";

struct PromptOptions {
    std::string prompt_template = kDefaultTemplate;
    // Which prompt groups get the template. All on by default.
    bool template_query = true;
    bool template_labels = true;
    bool template_quality = true;
};

/// Batch text encoder: returns one unit vector per input text, same order.
using BatchEmbedFn = std::function<std::vector<EmbeddingVector>(const std::vector<std::string>&)>;

/// Query prompt at index 0, then labels, then quality terms. Prompt texts are
/// unique after template expansion.
class PromptSet {
public:
    PromptSet(std::vector<PromptInfo> info, std::vector<EmbeddingVector> embeddings);

    std::size_t size() const noexcept { return info_.size(); }
    std::size_t dim() const noexcept { return embeddings_.front().dim(); }
    std::size_t label_count() const noexcept { return label_count_; }
    std::size_t quality_count() const noexcept { return quality_count_; }

    const PromptInfo& query() const noexcept { return info_.front(); }
    const EmbeddingVector& query_embedding() const noexcept { return embeddings_.front(); }

    std::span<const PromptInfo> info() const noexcept { return info_; }
    std::span<const EmbeddingVector> embeddings() const noexcept { return embeddings_; }

    std::size_t first_label() const noexcept { return 1; }
    std::size_t first_quality() const noexcept { return 1 + label_count_; }
    std::span<const PromptInfo> quality_info() const noexcept {
        return std::span<const PromptInfo>(info_).subspan(first_quality(), quality_count_);
    }

private:
    std::vector<PromptInfo> info_;
    std::vector<EmbeddingVector> embeddings_;
    std::size_t label_count_ = 0;
    std::size_t quality_count_ = 0;
};

/// Replaces the single "{}" placeholder. Throws InvalidArgument if the
/// template has no placeholder or more than one.
std::string apply_template(const std::string& prompt_template, const std::string& term);

/// Embeds the query and every label and quality term after template
/// expansion. Later prompts whose expanded text duplicates an earlier one
/// are dropped. Throws EmptyQuery, EmbedderUnavailable, DimensionMismatch.
PromptSet assemble_prompt_set(const std::string& query_text, std::span<const std::string> label_set,
                              std::span<const std::string> quality_terms, const PromptOptions& options,
                              const BatchEmbedFn& embed);

/// Same, but the query slot is a precomputed embedding (no text, never
/// deduplicated against labels).
PromptSet assemble_prompt_set(const EmbeddingVector& query_embedding, std::span<const std::string> label_set,
                              std::span<const std::string> quality_terms, const PromptOptions& options,
                              const BatchEmbedFn& embed);

const std::vector<std::string>& default_quality_terms();

/// One label per line, UTF-8; blank lines and lines starting with '#' are
/// skipped, surrounding whitespace trimmed.
std::vector<std::string> load_label_set(const std::filesystem::path& path);

/// Bundled LVIS v1 category list.
std::filesystem::path default_label_set_path();

/// Precomputed text embeddings keyed by the exact prompt text. Stored as a
/// ZEA1 archive plus a JSON-lines sidecar of {"text": ...} rows.
class PromptCache {
public:
    PromptCache() = default;

    static PromptCache load(const std::filesystem::path& archive_path, const std::filesystem::path& texts_path);
    void save(const std::filesystem::path& archive_path, const std::filesystem::path& texts_path,
              const std::string& model) const;

    void insert(const std::string& text, EmbeddingVector embedding);
    const EmbeddingVector* find(const std::string& text) const;
    std::size_t size() const noexcept { return texts_.size(); }
    std::span<const std::string> texts() const noexcept { return texts_; }

private:
    std::vector<std::string> texts_;
    std::vector<EmbeddingVector> embeddings_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Looks texts up in `cache` first and sends the misses to `fallback` in one
/// batch. Without a fallback, misses raise EmbedderUnavailable.
BatchEmbedFn make_cached_embedder(const PromptCache* cache, BatchEmbedFn fallback);

}  // namespace zelda
