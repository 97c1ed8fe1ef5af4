#include <algorithm>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>
#include <json.hpp>

#include "zelda/error.hpp"
#include "zelda/eval.hpp"
#include "zelda/fixtures.hpp"
#include "zelda/frame_store.hpp"
#include "zelda/pipeline.hpp"
#include "zelda/prompts.hpp"
#include "zelda/service.hpp"

namespace fs = std::filesystem;
using namespace zelda;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// ---- vector input ----------------------------------------------------------

/// Minimal .npy reader: 2-D, C order, little-endian float32 or float64.
VectorTable read_npy(const fs::path& path) {
    const std::string data = read_file(path);
    if (data.size() < 10 || data.compare(0, 6, "\x93NUMPY") != 0) {
        throw Error(ErrorCode::kBadMagic, path.string() + " is not a .npy file");
    }
    const auto major = static_cast<unsigned char>(data[6]);
    std::size_t header_len = 0;
    std::size_t offset = 0;
    if (major == 1) {
        header_len = static_cast<unsigned char>(data[8]) | (static_cast<unsigned char>(data[9]) << 8);
        offset = 10;
    } else {
        if (data.size() < 12) throw Error(ErrorCode::kHeaderMismatch, "truncated .npy header");
        for (int i = 3; i >= 0; --i) header_len = (header_len << 8) | static_cast<unsigned char>(data[8 + i]);
        offset = 12;
    }
    if (offset + header_len > data.size()) throw Error(ErrorCode::kHeaderMismatch, "truncated .npy header");
    const std::string header = data.substr(offset, header_len);
    offset += header_len;

    std::size_t width = 0;
    if (header.find("'<f4'") != std::string::npos) {
        width = 4;
    } else if (header.find("'<f8'") != std::string::npos) {
        width = 8;
    } else {
        throw Error(ErrorCode::kHeaderMismatch, ".npy dtype must be <f4 or <f8");
    }
    if (header.find("'fortran_order': True") != std::string::npos) {
        throw Error(ErrorCode::kHeaderMismatch, ".npy must be C order");
    }
    const auto lp = header.find('(', header.find("'shape'"));
    const auto rp = header.find(')', lp);
    std::vector<std::size_t> shape;
    std::stringstream dims(header.substr(lp + 1, rp - lp - 1));
    std::string item;
    while (std::getline(dims, item, ',')) {
        if (item.find_first_not_of(" ") != std::string::npos) shape.push_back(std::stoull(item));
    }
    if (shape.size() != 2) throw Error(ErrorCode::kHeaderMismatch, ".npy array must be 2-D");

    const std::size_t n = shape[0] * shape[1];
    if (data.size() - offset != n * width) throw Error(ErrorCode::kHeaderMismatch, ".npy payload length mismatch");
    VectorTable table;
    table.dim = shape[1];
    table.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const char* p = data.data() + offset + i * width;
        if (width == 4) {
            std::memcpy(&table.values[i], p, 4);
        } else {
            double d;
            std::memcpy(&d, p, 8);
            table.values[i] = static_cast<float>(d);
        }
    }
    return table;
}

/// One vector per line, whitespace or comma separated.
VectorTable read_text_vectors(const fs::path& path) {
    std::istringstream in(read_file(path));
    VectorTable table;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        for (char& c : line) {
            if (c == ',') c = ' ';
        }
        std::istringstream fields(line);
        std::vector<float> row;
        std::string tok;
        while (fields >> tok) {
            try {
                row.push_back(std::stof(tok));
            } catch (const std::logic_error&) {
                throw Error(ErrorCode::kInvalidArgument,
                            path.string() + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
            }
        }
        if (row.empty()) continue;
        if (table.dim == 0) table.dim = row.size();
        if (row.size() != table.dim) {
            throw Error(ErrorCode::kDimensionMismatch, path.string() + ":" + std::to_string(line_no) + ": expected " +
                                                           std::to_string(table.dim) + " values");
        }
        table.push_row(row);
    }
    return table;
}

VectorTable read_vectors(const fs::path& path) {
    return path.extension() == ".npy" ? read_npy(path) : read_text_vectors(path);
}

// ---- shared helpers --------------------------------------------------------

EngineConfig load_config(const std::string& path) {
    EngineConfig cfg = path.empty() ? EngineConfig{} : EngineConfig::load(path);
    cfg.apply_env();
    return cfg;
}

std::vector<std::string> resolve_labels(const std::string& labels_flag, const fs::path& dataset_dir,
                                        const EngineConfig& cfg) {
    if (!labels_flag.empty()) return load_label_set(labels_flag);
    if (fs::exists(dataset_dir / "labels.txt")) return load_label_set(dataset_dir / "labels.txt");
    return load_label_set(cfg.label_set_path);
}

BatchEmbedFn live_embedder(const EngineConfig& cfg) {
    if (!cfg.embedder_url) return {};
    return EmbedderClient(*cfg.embedder_url).as_fn();
}

std::shared_ptr<const RegisteredDataset> open_dataset(Registry& registry, const fs::path& dir) {
    const std::string name = dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string();
    registry.register_dataset(dataset_source_from_dir(name.empty() ? "dataset" : name, dir));
    return registry.find(name.empty() ? "dataset" : name);
}

std::string method_file_stem(const std::string& method) {
    std::string out;
    for (char c : method) {
        if (c == ':') {
            out += '_';
        } else if (c != '+') {
            out += c;
        }
    }
    return out;
}

std::vector<std::string> split_commas(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::pair<std::string, int> split_host_port(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) throw UsageError("listen address must be host:port, got '" + addr + "'");
    try {
        return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
    } catch (const std::logic_error&) {
        throw UsageError("bad port in '" + addr + "'");
    }
}

// ---- subcommands -----------------------------------------------------------

struct IngestArgs {
    std::string vectors;
    std::string frames;
    std::string prompts;
    std::string out;
    std::string model = "unknown";
    bool raw = false;
    bool templated = false;
};

int run_ingest(const IngestArgs& a, const EngineConfig& cfg) {
    if (a.vectors.empty() == a.prompts.empty()) throw UsageError("ingest needs exactly one of --vectors or --prompts");
    fs::create_directories(a.out);
    const fs::path out(a.out);

    if (!a.vectors.empty()) {
        if (a.frames.empty()) throw UsageError("--vectors requires --frames");
        VectorTable table = read_vectors(a.vectors);
        const auto frames = read_frames_jsonl(a.frames);
        if (frames.size() != table.count()) {
            throw Error(ErrorCode::kMetadataMismatch, a.frames + " has " + std::to_string(frames.size()) +
                                                          " records for " + std::to_string(table.count()) +
                                                          " vectors");
        }
        if (!a.raw) {
            VectorTable unit;
            unit.dim = table.dim;
            for (std::size_t i = 0; i < table.count(); ++i) unit.push_row(normalize(table.row(i)).values());
            table = std::move(unit);
        }
        write_archive(out / "frames.zea", table, !a.raw, a.model);
        write_frames_jsonl(out / "frames.jsonl", frames);
        // Validates the pair exactly as the service will.
        const Dataset check = load_dataset("ingest", out / "frames.zea", out / "frames.jsonl");
        std::cout << "wrote " << check.size() << " x " << check.dim() << " to " << out.string() << "\n";
        return kExitOk;
    }

    std::vector<std::string> texts = load_label_set(a.prompts);
    if (a.templated) {
        for (auto& t : texts) t = apply_template(cfg.prompt_template, t);
    }
    PromptCache cache;
    if (fs::exists(out / "prompts.zea")) cache = PromptCache::load(out / "prompts.zea", out / "prompts.jsonl");
    std::vector<std::string> missing;
    for (const auto& t : texts) {
        if (!cache.find(t) && std::find(missing.begin(), missing.end(), t) == missing.end()) missing.push_back(t);
    }
    if (!missing.empty()) {
        const auto embed = live_embedder(cfg);
        if (!embed) throw Error(ErrorCode::kEmbedderUnavailable, "no embedder_url configured");
        const auto vectors = embed(missing);
        for (std::size_t i = 0; i < missing.size(); ++i) cache.insert(missing[i], vectors[i]);
    }
    cache.save(out / "prompts.zea", out / "prompts.jsonl", a.model);
    std::cout << "prompt cache holds " << cache.size() << " texts (" << missing.size() << " new)\n";
    return kExitOk;
}

struct QueryArgs {
    std::string dataset;
    std::string query_file;
    std::string query_text;
    std::string labels;
    std::optional<std::size_t> k;
    std::optional<double> threshold;
    std::optional<double> temperature;
    bool no_diversity = false;
    bool no_quality = false;
    bool quality_first = false;
    bool json = false;
};

int run_query(const QueryArgs& a, const EngineConfig& cfg) {
    if (a.query_file.empty() == a.query_text.empty()) {
        throw UsageError("query needs exactly one of --query-file or --query-text");
    }
    Registry registry;
    const auto entry = open_dataset(registry, a.dataset);
    const auto labels = resolve_labels(a.labels, a.dataset, cfg);

    QueryOptions options;
    options.k = a.k.value_or(cfg.default_k);
    options.prune_threshold = a.threshold.value_or(cfg.default_prune_threshold);
    options.temperature = a.temperature.value_or(cfg.default_temperature);
    options.enable_diversity = !a.no_diversity;
    options.enable_quality = !a.no_quality;
    options.stage_order = a.quality_first ? StageOrder::kQualityFirst : StageOrder::kDiversityFirst;
    validate(options);

    PromptOptions prompt_options;
    prompt_options.prompt_template = cfg.prompt_template;
    const auto embed = make_cached_embedder(entry->prompts ? &*entry->prompts : nullptr, live_embedder(cfg));
    const PromptSet prompts =
        a.query_text.empty()
            ? assemble_prompt_set(normalize(read_vector_file(a.query_file)), labels, cfg.quality_terms,
                                  prompt_options, embed)
            : assemble_prompt_set(a.query_text, labels, cfg.quality_terms, prompt_options, embed);
    const QueryResult result = execute_query(entry->dataset, prompts, options);

    if (a.json) {
        std::cout << query_result_to_json(result, *entry, prompts, true).dump(2) << "\n";
        return kExitOk;
    }
    std::size_t rank = 0;
    for (const auto& c : result.ranked) {
        std::cout << ++rank << "\t" << c.frame_id << "\t" << c.query_confidence << "\t" << c.diversity_score << "\t"
                  << status_name(c.status) << "\n";
    }
    return kExitOk;
}

struct EvalArgs {
    std::string dataset;
    std::string judgments;
    std::string labels;
    std::string methods = "zelda,clip_relevant,clip_diverse";
    std::string format = "json";
    std::string out_dir;
    std::optional<std::size_t> k;
};

int run_eval(const EvalArgs& a, const EngineConfig& cfg) {
    if (a.format != "json" && a.format != "csv") throw UsageError("--format must be json or csv");
    std::vector<EvalMethod> methods;
    for (const auto& m : split_commas(a.methods)) methods.push_back(parse_method(m));
    if (methods.empty()) throw UsageError("--methods is empty");

    Registry registry;
    const auto entry = open_dataset(registry, a.dataset);
    const auto judgments = load_judgments(a.judgments);
    validate_judgments(entry->dataset, judgments);

    EvalContext ctx;
    ctx.dataset = &entry->dataset;
    ctx.embed = make_cached_embedder(entry->prompts ? &*entry->prompts : nullptr, live_embedder(cfg));
    ctx.label_set = resolve_labels(a.labels, a.dataset, cfg);
    ctx.quality_terms = cfg.quality_terms;
    ctx.prompt_options.prompt_template = cfg.prompt_template;
    ctx.query_options.prune_threshold = cfg.default_prune_threshold;
    ctx.query_options.temperature = cfg.default_temperature;
    PixelStore pixels;
    if (std::find(methods.begin(), methods.end(), EvalMethod::kVdd) != methods.end()) {
        pixels = load_thumbnail_pixels(entry->dataset, ctx.vdd, entry->base_dir);
        ctx.pixels = &pixels;
    }
    const std::size_t k = a.k.value_or(cfg.default_k);
    const auto format = a.format == "csv" ? ReportFormat::kCsv : ReportFormat::kJson;

    nlohmann::ordered_json all = nlohmann::ordered_json::array();
    for (EvalMethod m : methods) {
        const EvalReport report = evaluate_method(ctx, judgments, k, m);
        if (!a.out_dir.empty()) {
            fs::create_directories(a.out_dir);
            const fs::path path =
                fs::path(a.out_dir) / (method_file_stem(report.method) + (format == ReportFormat::kCsv ? ".csv" : ".json"));
            emit_report(report, path, format);
        } else if (format == ReportFormat::kCsv) {
            std::cout << report_to_csv(report);
        } else {
            all.push_back(report_to_json(report));
        }
        std::cerr << report.method << "\tMAP " << report.map << "\n";
    }
    if (a.out_dir.empty() && format == ReportFormat::kJson) {
        nlohmann::ordered_json body;
        body["reports"] = std::move(all);
        std::cout << body.dump(2) << "\n";
    }
    return kExitOk;
}

struct ServeArgs {
    std::string listen;
    std::vector<std::string> datasets;  // name=dir
};

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

int run_serve(const ServeArgs& a, EngineConfig cfg) {
    if (!a.listen.empty()) cfg.listen_addr = a.listen;
    const auto [host, port] = split_host_port(cfg.listen_addr);
    Service service(cfg);
    for (const auto& spec : a.datasets) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw UsageError("--dataset expects name=dir, got '" + spec + "'");
        fs::path dir(spec.substr(eq + 1));
        if (dir.is_relative()) dir = cfg.data_dir / dir;
        const auto summary = service.registry().register_dataset(dataset_source_from_dir(spec.substr(0, eq), dir));
        std::cerr << "registered " << summary.name << " (" << summary.count << " x " << summary.dim << ")\n";
    }
    httplib::Server server;
    service.mount(server);
    g_server = &server;
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cerr << "listening on " << host << ":" << port << "\n";
    if (!server.listen(host, port)) {
        throw Error(ErrorCode::kIoError, "cannot listen on " + cfg.listen_addr);
    }
    return kExitOk;
}

struct FixtureArgs {
    ClusterFixtureParams params;
    std::string out;
};

int run_fixtures_gen(const FixtureArgs& a) {
    const ClusterFixture fixture = make_cluster_fixture(a.params);
    write_cluster_fixture(fixture, a.out);
    std::cout << "wrote " << fixture.records.size() << " frames to " << a.out << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zelda: diverse, high-quality frame retrieval over embedding archives"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "Config file (key=value or JSON)");

    IngestArgs ingest;
    auto* ingest_cmd = app.add_subcommand("ingest", "Convert vectors + frames.jsonl to ZEA1, or embed prompt texts");
    ingest_cmd->add_option("--vectors", ingest.vectors, "Vectors as .npy or one row per line");
    ingest_cmd->add_option("--frames", ingest.frames, "frames.jsonl with one record per vector");
    ingest_cmd->add_option("--prompts", ingest.prompts, "Prompt texts, one per line, embedded into a prompt cache");
    ingest_cmd->add_option("--out", ingest.out, "Dataset directory")->required();
    ingest_cmd->add_option("--model", ingest.model, "Model name recorded in the archive header");
    ingest_cmd->add_flag("--raw", ingest.raw, "Store vectors as given with normalized=false");
    ingest_cmd->add_flag("--template", ingest.templated, "Apply the prompt template to each prompt text");

    QueryArgs query;
    auto* query_cmd = app.add_subcommand("query", "Run one query against a dataset directory");
    query_cmd->add_option("--dataset", query.dataset, "Dataset directory")->required();
    query_cmd->add_option("--query-file", query.query_file, "Query embedding file");
    query_cmd->add_option("--query-text", query.query_text, "Query text (needs an embedder or prompt cache)");
    query_cmd->add_option("--labels", query.labels, "Label set file");
    query_cmd->add_option("--k", query.k, "Results to return");
    query_cmd->add_option("--threshold", query.threshold, "Diversity prune threshold");
    query_cmd->add_option("--temperature", query.temperature, "Softmax temperature");
    query_cmd->add_flag("--no-diversity", query.no_diversity, "Skip similarity pruning");
    query_cmd->add_flag("--no-quality", query.no_quality, "Skip quality pruning");
    query_cmd->add_flag("--quality-first", query.quality_first, "Run quality pruning before diversity");
    query_cmd->add_flag("--json", query.json, "Print the full result as JSON");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "Score retrieval methods against relevance judgments");
    eval_cmd->add_option("--dataset", eval.dataset, "Dataset directory")->required();
    eval_cmd->add_option("--judgments", eval.judgments, "Judgments JSON")->required();
    eval_cmd->add_option("--labels", eval.labels, "Label set file");
    eval_cmd->add_option("--methods", eval.methods, "Comma-separated methods");
    eval_cmd->add_option("--k", eval.k, "Results per query");
    eval_cmd->add_option("--format", eval.format, "json or csv");
    eval_cmd->add_option("--out-dir", eval.out_dir, "Write one report file per method here");

    ServeArgs serve;
    auto* serve_cmd = app.add_subcommand("serve", "Serve the HTTP API");
    serve_cmd->add_option("--listen", serve.listen, "host:port (overrides listen_addr)");
    serve_cmd->add_option("--dataset", serve.datasets, "name=dir to register at startup");

    FixtureArgs fixture;
    auto* fixtures_cmd = app.add_subcommand("fixtures", "Synthetic fixtures");
    fixtures_cmd->require_subcommand(1);
    auto* gen_cmd = fixtures_cmd->add_subcommand("gen", "Write the seeded cluster fixture");
    gen_cmd->add_option("--clusters", fixture.params.clusters, "Cluster count");
    gen_cmd->add_option("--per", fixture.params.per, "Frames per cluster");
    gen_cmd->add_option("--dim", fixture.params.dim, "Embedding dimension");
    gen_cmd->add_option("--seed", fixture.params.seed, "Generator seed");
    gen_cmd->add_option("--noise", fixture.params.noise, "Per-coordinate noise around each center");
    gen_cmd->add_option("--out", fixture.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        const EngineConfig cfg = load_config(config_path);
        if (*ingest_cmd) return run_ingest(ingest, cfg);
        if (*query_cmd) return run_query(query, cfg);
        if (*eval_cmd) return run_eval(eval, cfg);
        if (*serve_cmd) return run_serve(serve, cfg);
        if (*gen_cmd) return run_fixtures_gen(fixture);
    } catch (const UsageError& e) {
        std::cerr << "usage: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
