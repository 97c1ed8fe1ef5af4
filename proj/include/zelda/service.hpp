#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "zelda/error.hpp"
#include "zelda/eval.hpp"
#include "zelda/frame_store.hpp"
#include "zelda/pipeline.hpp"
#include "zelda/prompts.hpp"

namespace httplib {
class Server;
}

namespace zelda {

// ---- configuration ---------------------------------------------------------

struct EngineConfig {
    std::filesystem::path data_dir = ".";
    std::optional<std::string> embedder_url;
    std::size_t default_k = 20;
    double default_prune_threshold = 0.80;
    double default_temperature = 100.0;
    std::filesystem::path label_set_path = default_label_set_path();
    std::vector<std::string> quality_terms = default_quality_terms();
    std::string prompt_template = kDefaultTemplate;
    std::string listen_addr = "127.0.0.1:8080";

    /// key=value lines ('#' comments) or a JSON object, chosen by the first
    /// non-space character. Unknown keys throw InvalidArgument.
    static EngineConfig parse(const std::string& text);
    static EngineConfig load(const std::filesystem::path& path);

    /// Applies ZELDA_<KEY> environment overrides (e.g. ZELDA_DEFAULT_K).
    void apply_env();
    void set(const std::string& key, const std::string& value);
    /// default_k >= 1, 0 < default_prune_threshold <= 1, temperature > 0.
    void validate() const;
};

// ---- embedder client -------------------------------------------------------

/// Client for POST {url}/embed_text  {texts:[...]} -> {dim, embeddings:[[...]]}.
/// Transport failures, timeouts, and malformed replies all raise
/// EmbedderUnavailable.
class EmbedderClient {
public:
    explicit EmbedderClient(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(10));

    std::vector<EmbeddingVector> embed_text(const std::vector<std::string>& texts) const;
    BatchEmbedFn as_fn() const;

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

// ---- registry --------------------------------------------------------------

struct DatasetSummary {
    std::string name;
    std::size_t count = 0;
    std::size_t dim = 0;
    std::string model;
};

struct RegisteredDataset {
    Dataset dataset;
    std::optional<PromptCache> prompts;
    std::filesystem::path base_dir;  // relative thumb paths resolve here (the frames.jsonl directory)
    std::optional<std::vector<std::string>> labels;  // overrides the service-wide label set

    DatasetSummary summary() const;
};

struct DatasetSource {
    std::string name;
    std::filesystem::path archive_path;
    std::filesystem::path frames_path;
    std::optional<std::filesystem::path> prompts_archive_path;
    std::optional<std::filesystem::path> prompts_texts_path;
    std::optional<std::filesystem::path> labels_path;
};

/// Name -> immutable dataset. Reads are concurrent; registration takes the
/// writer lock only to publish an already-loaded dataset.
class Registry {
public:
    /// Throws DuplicateName or any frame-store load error.
    DatasetSummary register_dataset(const DatasetSource& source);
    /// Throws UnknownDataset.
    std::shared_ptr<const RegisteredDataset> find(const std::string& name) const;
    std::vector<DatasetSummary> list() const;

private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const RegisteredDataset>> datasets_;
};

/// Resolves a dataset directory laid out as frames.zea + frames.jsonl with an
/// optional prompts.zea + prompts.jsonl prompt cache and labels.txt.
DatasetSource dataset_source_from_dir(const std::string& name, const std::filesystem::path& dir);

// ---- JSON views ------------------------------------------------------------

/// Results as served over HTTP: rank, frame id, confidence, diversity score,
/// status, thumb_url when a thumbnail exists. `detail` adds raw similarities
/// and per-term quality confidences (used by the CLI).
nlohmann::ordered_json query_result_to_json(const QueryResult& result, const RegisteredDataset& dataset,
                                            const PromptSet& prompts, bool detail);

// ---- HTTP service ----------------------------------------------------------

struct HttpResponse {
    int status = 200;
    std::string body;
    std::string content_type = "application/json";
};

class Service {
public:
    /// `embed_override` replaces the HTTP embedder client (tests, offline use).
    explicit Service(EngineConfig config, BatchEmbedFn embed_override = {});

    const EngineConfig& config() const noexcept { return config_; }
    Registry& registry() noexcept { return registry_; }

    HttpResponse list_datasets() const;
    HttpResponse post_dataset(const std::string& body);
    HttpResponse query(const std::string& body) const;
    HttpResponse eval(const std::string& body) const;
    HttpResponse thumb(const std::string& frame_id, const std::string& dataset) const;

    /// Routes: GET/POST /v1/datasets, POST /v1/query, POST /v1/eval,
    /// GET /thumbs/{frame_id}.
    void mount(httplib::Server& server);

private:
    std::shared_ptr<const RegisteredDataset> lookup(const std::string& name) const;
    BatchEmbedFn embedder_for(const RegisteredDataset& dataset) const;
    const std::vector<std::string>& labels_for(const RegisteredDataset& dataset) const;

    EngineConfig config_;
    std::vector<std::string> label_set_;
    BatchEmbedFn live_embed_;
    Registry registry_;
};

/// ErrorCode -> HTTP status (400/404/409/422/503).
int http_status_for(ErrorCode code);

}  // namespace zelda
