#include "zelda/service.hpp"

#include <fstream>
#include <sstream>

#include <httplib.h>

#include "zelda/error.hpp"

namespace zelda {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

int http_status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::kUnknownDataset:
        case ErrorCode::kUnknownFrame: return 404;
        case ErrorCode::kDuplicateName: return 409;
        case ErrorCode::kIoError:
        case ErrorCode::kBadMagic:
        case ErrorCode::kHeaderMismatch:
        case ErrorCode::kMetadataMismatch: return 422;
        case ErrorCode::kEmbedderUnavailable: return 503;
        default: return 400;
    }
}

namespace {

HttpResponse json_response(int status, const ordered_json& body) { return {status, body.dump(2) + "\n"}; }

HttpResponse error_response(int status, std::string_view code, const std::string& message) {
    ordered_json body;
    body["error"] = code;
    body["message"] = message;
    return json_response(status, body);
}

HttpResponse error_response(const Error& e) {
    return error_response(http_status_for(e.code()), error_code_name(e.code()), e.what());
}

/// Runs a handler, translating engine errors and malformed JSON into
/// status-coded bodies.
template <typename F>
HttpResponse guarded(F&& handler) {
    try {
        return handler();
    } catch (const Error& e) {
        return error_response(e);
    } catch (const nlohmann::json::exception& e) {
        return error_response(400, "BadRequest", e.what());
    }
}

nlohmann::json parse_body(const std::string& body) {
    auto j = nlohmann::json::parse(body);
    if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "request body must be a JSON object");
    return j;
}

fs::path resolve(const fs::path& base, const std::string& p) {
    fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

ordered_json summary_json(const DatasetSummary& s) {
    ordered_json j;
    j["name"] = s.name;
    j["count"] = s.count;
    j["dim"] = s.dim;
    j["model"] = s.model;
    return j;
}

std::string stage_order_name(StageOrder order) {
    return order == StageOrder::kDiversityFirst ? "diversity_first" : "quality_first";
}

StageOrder parse_stage_order(const std::string& s) {
    if (s == "diversity_first") return StageOrder::kDiversityFirst;
    if (s == "quality_first") return StageOrder::kQualityFirst;
    throw Error(ErrorCode::kInvalidArgument, "stage_order must be diversity_first or quality_first");
}

}  // namespace

ordered_json query_result_to_json(const QueryResult& result, const RegisteredDataset& entry, const PromptSet& prompts,
                                  bool detail) {
    const Dataset& dataset = entry.dataset;
    ordered_json results = ordered_json::array();
    std::size_t rank = 0;
    for (const auto& c : result.ranked) {
        ordered_json r;
        r["frame_id"] = c.frame_id;
        r["rank"] = ++rank;
        r["query_confidence"] = c.query_confidence;
        r["diversity_score"] = c.diversity_score;
        r["status"] = status_name(c.status);
        const auto& frame = dataset.frame_at(c.row);
        if (frame.thumb_path) {
            r["thumb_url"] = "/thumbs/" + std::to_string(c.frame_id) + "?dataset=" + dataset.name();
        }
        if (detail) {
            r["video_id"] = frame.video_id;
            r["timestamp_s"] = frame.timestamp_s;
            r["query_similarity"] = c.query_similarity;
            r["label_confidence"] = c.label_confidence;
            ordered_json quality = ordered_json::object();
            const auto terms = prompts.quality_info();
            for (std::size_t i = 0; i < c.quality_confidences.size(); ++i) {
                quality[terms[i].term] = c.quality_confidences[i];
            }
            r["quality_confidences"] = std::move(quality);
            if (c.pixel_mse) r["pixel_mse"] = *c.pixel_mse;
        }
        results.push_back(std::move(r));
    }
    ordered_json pruned = ordered_json::array();
    for (const auto& c : result.pruned) {
        ordered_json p;
        p["frame_id"] = c.frame_id;
        p["status"] = status_name(c.status);
        if (detail) {
            p["query_confidence"] = c.query_confidence;
            p["diversity_score"] = c.diversity_score;
        }
        pruned.push_back(std::move(p));
    }
    ordered_json params;
    params["dataset"] = dataset.name();
    params["k"] = result.params.k;
    params["prune_threshold"] = result.params.prune_threshold;
    params["temperature"] = result.params.temperature;
    params["enable_diversity"] = result.params.enable_diversity;
    params["enable_quality"] = result.params.enable_quality;
    params["stage_order"] = stage_order_name(result.params.stage_order);
    params["prompt_count"] = prompts.size();

    ordered_json out;
    out["results"] = std::move(results);
    out["pruned"] = std::move(pruned);
    out["params"] = std::move(params);
    return out;
}

Service::Service(EngineConfig config, BatchEmbedFn embed_override) : config_(std::move(config)) {
    config_.validate();
    label_set_ = load_label_set(config_.label_set_path);
    if (embed_override) {
        live_embed_ = std::move(embed_override);
    } else if (config_.embedder_url) {
        live_embed_ = EmbedderClient(*config_.embedder_url).as_fn();
    }
}

std::shared_ptr<const RegisteredDataset> Service::lookup(const std::string& name) const { return registry_.find(name); }

BatchEmbedFn Service::embedder_for(const RegisteredDataset& dataset) const {
    return make_cached_embedder(dataset.prompts ? &*dataset.prompts : nullptr, live_embed_);
}

const std::vector<std::string>& Service::labels_for(const RegisteredDataset& dataset) const {
    return dataset.labels ? *dataset.labels : label_set_;
}

HttpResponse Service::list_datasets() const {
    ordered_json body;
    body["datasets"] = ordered_json::array();
    for (const auto& s : registry_.list()) body["datasets"].push_back(summary_json(s));
    return json_response(200, body);
}

HttpResponse Service::post_dataset(const std::string& body) {
    return guarded([&] {
        const auto req = parse_body(body);
        const auto name = req.at("name").get<std::string>();
        DatasetSource source;
        if (req.contains("dir")) {
            source = dataset_source_from_dir(name, resolve(config_.data_dir, req.at("dir").get<std::string>()));
        } else {
            source.name = name;
            source.archive_path = resolve(config_.data_dir, req.at("archive_path").get<std::string>());
            const auto frames_key = req.contains("frames_jsonl_path") ? "frames_jsonl_path" : "frames_path";
            source.frames_path = resolve(config_.data_dir, req.at(frames_key).get<std::string>());
            if (req.contains("prompts_archive_path")) {
                source.prompts_archive_path =
                    resolve(config_.data_dir, req.at("prompts_archive_path").get<std::string>());
                source.prompts_texts_path = resolve(config_.data_dir, req.at("prompts_texts_path").get<std::string>());
            }
        }
        if (req.contains("labels_path")) {
            source.labels_path = resolve(config_.data_dir, req.at("labels_path").get<std::string>());
        }
        return json_response(201, summary_json(registry_.register_dataset(source)));
    });
}

HttpResponse Service::query(const std::string& body) const {
    return guarded([&] {
        const auto req = parse_body(body);
        const bool has_text = req.contains("query_text") && !req.at("query_text").is_null();
        const bool has_embedding = req.contains("query_embedding") && !req.at("query_embedding").is_null();
        if (has_text == has_embedding) {
            throw Error(ErrorCode::kBothOrNeitherQuery, "exactly one of query_text and query_embedding is required");
        }
        const auto entry = lookup(req.at("dataset").get<std::string>());

        QueryOptions options;
        options.k = req.value("k", config_.default_k);
        options.prune_threshold = req.value("prune_threshold", config_.default_prune_threshold);
        options.temperature = req.value("temperature", config_.default_temperature);
        options.enable_diversity = req.value("enable_diversity", true);
        options.enable_quality = req.value("enable_quality", true);
        if (req.contains("stage_order")) options.stage_order = parse_stage_order(req.at("stage_order").get<std::string>());
        validate(options);

        PromptOptions prompt_options;
        prompt_options.prompt_template = config_.prompt_template;
        const auto embed = embedder_for(*entry);
        const auto& labels = labels_for(*entry);
        const PromptSet prompts =
            has_text ? assemble_prompt_set(req.at("query_text").get<std::string>(), labels, config_.quality_terms,
                                           prompt_options, embed)
                     : assemble_prompt_set(normalize(req.at("query_embedding").get<std::vector<float>>()), labels,
                                           config_.quality_terms, prompt_options, embed);
        const auto result = execute_query(entry->dataset, prompts, options);
        return json_response(200, query_result_to_json(result, *entry, prompts, false));
    });
}

HttpResponse Service::eval(const std::string& body) const {
    return guarded([&] {
        const auto req = parse_body(body);
        const auto entry = lookup(req.at("dataset").get<std::string>());
        const auto judgments = parse_judgments(req.at("judgments"));
        const std::size_t k = req.value("k", config_.default_k);
        std::vector<EvalMethod> methods;
        for (const auto& m : req.value("methods", std::vector<std::string>{"zelda"})) methods.push_back(parse_method(m));

        EvalContext ctx;
        ctx.dataset = &entry->dataset;
        ctx.embed = embedder_for(*entry);
        ctx.label_set = labels_for(*entry);
        ctx.quality_terms = config_.quality_terms;
        ctx.prompt_options.prompt_template = config_.prompt_template;
        ctx.query_options.prune_threshold = req.value("prune_threshold", config_.default_prune_threshold);
        ctx.query_options.temperature = req.value("temperature", config_.default_temperature);
        PixelStore pixels;
        if (std::find(methods.begin(), methods.end(), EvalMethod::kVdd) != methods.end()) {
            ctx.vdd.mse_threshold = req.value("mse_threshold", ctx.vdd.mse_threshold);
            pixels = load_thumbnail_pixels(entry->dataset, ctx.vdd, entry->base_dir);
            ctx.pixels = &pixels;
        }

        ordered_json out;
        out["dataset"] = entry->dataset.name();
        out["k"] = k;
        out["reports"] = ordered_json::array();
        for (EvalMethod m : methods) out["reports"].push_back(report_to_json(evaluate_method(ctx, judgments, k, m)));
        return json_response(200, out);
    });
}

HttpResponse Service::thumb(const std::string& frame_id, const std::string& dataset) const {
    return guarded([&] {
        std::shared_ptr<const RegisteredDataset> entry;
        if (dataset.empty()) {
            const auto all = registry_.list();
            if (all.size() != 1) throw Error(ErrorCode::kInvalidArgument, "dataset query parameter required");
            entry = lookup(all.front().name);
        } else {
            entry = lookup(dataset);
        }
        const FrameId id = std::stoull(frame_id);
        const auto row = entry->dataset.row_of(id);
        if (!row) throw Error(ErrorCode::kUnknownFrame, "frame " + frame_id + " not in " + entry->dataset.name());
        const auto& thumb_path = entry->dataset.frame_at(*row).thumb_path;
        if (!thumb_path) throw Error(ErrorCode::kUnknownFrame, "frame " + frame_id + " has no thumbnail");
        const fs::path path = resolve(entry->base_dir, *thumb_path);
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error(ErrorCode::kUnknownFrame, "thumbnail file missing for frame " + frame_id);
        std::stringstream buf;
        buf << in.rdbuf();
        const auto ext = path.extension().string();
        std::string type = "application/octet-stream";
        if (ext == ".jpg" || ext == ".jpeg") type = "image/jpeg";
        if (ext == ".png") type = "image/png";
        if (ext == ".pgm") type = "image/x-portable-graymap";
        return HttpResponse{200, buf.str(), type};
    });
}

void Service::mount(httplib::Server& server) {
    auto reply = [](httplib::Response& res, const HttpResponse& r) {
        res.status = r.status;
        res.set_content(r.body, r.content_type);
    };
    server.Get("/v1/datasets", [this, reply](const httplib::Request&, httplib::Response& res) {
        reply(res, list_datasets());
    });
    server.Post("/v1/datasets", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, post_dataset(req.body));
    });
    server.Post("/v1/query", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, query(req.body));
    });
    server.Post("/v1/eval", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, eval(req.body));
    });
    server.Get(R"(/thumbs/(\d+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
        reply(res, thumb(req.matches[1], req.has_param("dataset") ? req.get_param_value("dataset") : ""));
    });
}

}  // namespace zelda
