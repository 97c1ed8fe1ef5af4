#include "zelda/prompts.hpp"

#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "zelda/error.hpp"
#include "zelda/frame_store.hpp"

#ifndef ZELDA_RESOURCE_DIR
#define ZELDA_RESOURCE_DIR "resources"
#endif

namespace zelda {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return {};
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

struct Pending {
    std::vector<PromptInfo> info;
    std::unordered_set<std::string> seen;

    void add(const std::string& term, std::string text, PromptGroup group) {
        if (!seen.insert(text).second) return;
        info.push_back({term, std::move(text), group});
    }
};

PromptSet finish(Pending pending, std::optional<EmbeddingVector> query_embedding, const BatchEmbedFn& embed) {
    std::vector<std::string> to_embed;
    const std::size_t skip = query_embedding ? 1 : 0;
    for (std::size_t i = skip; i < pending.info.size(); ++i) to_embed.push_back(pending.info[i].text);

    std::vector<EmbeddingVector> embeddings;
    if (query_embedding) embeddings.push_back(std::move(*query_embedding));
    if (!to_embed.empty()) {
        if (!embed) throw Error(ErrorCode::kEmbedderUnavailable, "no text embedder configured");
        auto batch = embed(to_embed);
        if (batch.size() != to_embed.size()) {
            throw Error(ErrorCode::kEmbedderUnavailable, "embedder returned " + std::to_string(batch.size()) +
                                                             " vectors for " + std::to_string(to_embed.size()) +
                                                             " texts");
        }
        for (auto& e : batch) embeddings.push_back(std::move(e));
    }
    return PromptSet(std::move(pending.info), std::move(embeddings));
}

void add_groups(Pending& pending, std::span<const std::string> labels, std::span<const std::string> quality,
                const PromptOptions& options) {
    for (const auto& label : labels) {
        pending.add(label, options.template_labels ? apply_template(options.prompt_template, label) : label,
                    PromptGroup::kLabel);
    }
    for (const auto& term : quality) {
        pending.add(term, options.template_quality ? apply_template(options.prompt_template, term) : term,
                    PromptGroup::kQuality);
    }
}

}  // namespace

PromptSet::PromptSet(std::vector<PromptInfo> info, std::vector<EmbeddingVector> embeddings)
    : info_(std::move(info)), embeddings_(std::move(embeddings)) {
    if (info_.empty() || info_.front().group != PromptGroup::kQuery) {
        throw Error(ErrorCode::kInvalidArgument, "prompt set must start with the query prompt");
    }
    if (info_.size() != embeddings_.size()) {
        throw Error(ErrorCode::kInvalidArgument, "prompt info and embeddings differ in length");
    }
    const std::size_t d = embeddings_.front().dim();
    PromptGroup previous = PromptGroup::kQuery;
    for (std::size_t i = 0; i < info_.size(); ++i) {
        if (embeddings_[i].dim() != d) {
            throw Error(ErrorCode::kDimensionMismatch, "prompt '" + info_[i].text + "' has dim " +
                                                           std::to_string(embeddings_[i].dim()) + ", expected " +
                                                           std::to_string(d));
        }
        const PromptGroup g = info_[i].group;
        if (i > 0 && (g == PromptGroup::kQuery || static_cast<int>(g) < static_cast<int>(previous))) {
            throw Error(ErrorCode::kInvalidArgument, "prompts must be ordered query, labels, quality");
        }
        previous = g;
        if (g == PromptGroup::kLabel) ++label_count_;
        if (g == PromptGroup::kQuality) ++quality_count_;
    }
}

std::string apply_template(const std::string& prompt_template, const std::string& term) {
    const auto pos = prompt_template.find("{}");
    if (pos == std::string::npos || prompt_template.find("{}", pos + 2) != std::string::npos) {
        throw Error(ErrorCode::kInvalidArgument, "template must contain exactly one {} placeholder");
    }
    std::string out = prompt_template;
    out.replace(pos, 2, term);
    return out;
}

PromptSet assemble_prompt_set(const std::string& query_text, std::span<const std::string> label_set,
                              std::span<const std::string> quality_terms, const PromptOptions& options,
                              const BatchEmbedFn& embed) {
    const std::string query = trim(query_text);
    if (query.empty()) throw Error(ErrorCode::kEmptyQuery, "query text is empty");
    Pending pending;
    pending.add(query, options.template_query ? apply_template(options.prompt_template, query) : query,
                PromptGroup::kQuery);
    add_groups(pending, label_set, quality_terms, options);
    return finish(std::move(pending), std::nullopt, embed);
}

PromptSet assemble_prompt_set(const EmbeddingVector& query_embedding, std::span<const std::string> label_set,
                              std::span<const std::string> quality_terms, const PromptOptions& options,
                              const BatchEmbedFn& embed) {
    Pending pending;
    pending.info.push_back({"", "", PromptGroup::kQuery});
    add_groups(pending, label_set, quality_terms, options);
    return finish(std::move(pending), query_embedding, embed);
}

const std::vector<std::string>& default_quality_terms() {
    static const std::vector<std::string> terms = {"blurry", "grainy", "low resolution", "foggy", "sepia"};
    return terms;
}

std::vector<std::string> load_label_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open label set " + path.string());
    std::vector<std::string> labels;
    std::string line;
    while (std::getline(in, line)) {
        const std::string label = trim(line);
        if (label.empty() || label.front() == '#') continue;
        labels.push_back(label);
    }
    return labels;
}

std::filesystem::path default_label_set_path() {
    return std::filesystem::path(ZELDA_RESOURCE_DIR) / "lvis_v1_labels.txt";
}

PromptCache PromptCache::load(const std::filesystem::path& archive_path, const std::filesystem::path& texts_path) {
    const auto archive = read_archive(archive_path);
    auto embeddings = archive_embeddings(archive);
    std::ifstream in(texts_path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + texts_path.string());
    std::vector<std::string> texts;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            texts.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::kMetadataMismatch, texts_path.string() + " line " + std::to_string(line_no) +
                                                          ": " + e.what());
        }
    }
    if (texts.size() != embeddings.size()) {
        throw Error(ErrorCode::kMetadataMismatch, texts_path.string() + " has " + std::to_string(texts.size()) +
                                                      " lines but archive has " + std::to_string(embeddings.size()) +
                                                      " rows");
    }
    PromptCache cache;
    for (std::size_t i = 0; i < texts.size(); ++i) cache.insert(texts[i], std::move(embeddings[i]));
    return cache;
}

void PromptCache::save(const std::filesystem::path& archive_path, const std::filesystem::path& texts_path,
                       const std::string& model) const {
    VectorTable table;
    for (const auto& e : embeddings_) table.push_row(e.values());
    write_archive(archive_path, table, true, model);
    std::ofstream out(texts_path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + texts_path.string() + " for writing");
    for (const auto& t : texts_) out << nlohmann::json{{"text", t}}.dump() << '\n';
}

void PromptCache::insert(const std::string& text, EmbeddingVector embedding) {
    if (!embeddings_.empty() && embedding.dim() != embeddings_.front().dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "prompt cache entries must share one dim");
    }
    if (auto it = index_.find(text); it != index_.end()) {
        embeddings_[it->second] = std::move(embedding);
        return;
    }
    index_.emplace(text, texts_.size());
    texts_.push_back(text);
    embeddings_.push_back(std::move(embedding));
}

const EmbeddingVector* PromptCache::find(const std::string& text) const {
    auto it = index_.find(text);
    return it == index_.end() ? nullptr : &embeddings_[it->second];
}

BatchEmbedFn make_cached_embedder(const PromptCache* cache, BatchEmbedFn fallback) {
    return [cache, fallback = std::move(fallback)](const std::vector<std::string>& texts) {
        std::vector<EmbeddingVector> out(texts.size());
        std::vector<std::string> misses;
        std::vector<std::size_t> miss_slots;
        for (std::size_t i = 0; i < texts.size(); ++i) {
            const EmbeddingVector* hit = cache ? cache->find(texts[i]) : nullptr;
            if (hit) {
                out[i] = *hit;
            } else {
                misses.push_back(texts[i]);
                miss_slots.push_back(i);
            }
        }
        if (misses.empty()) return out;
        if (!fallback) {
            throw Error(ErrorCode::kEmbedderUnavailable, std::to_string(misses.size()) +
                                                             " prompt(s) not in the prompt cache and no embedder "
                                                             "configured, first: '" + misses.front() + "'");
        }
        auto fetched = fallback(misses);
        if (fetched.size() != misses.size()) {
            throw Error(ErrorCode::kEmbedderUnavailable, "embedder returned the wrong number of vectors");
        }
        for (std::size_t i = 0; i < misses.size(); ++i) out[miss_slots[i]] = std::move(fetched[i]);
        return out;
    };
}

}  // namespace zelda
