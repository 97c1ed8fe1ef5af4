#include "zelda/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "zelda/error.hpp"

namespace zelda {

namespace fs = std::filesystem;

double average_precision(std::span<const int> relevance) {
    if (relevance.empty()) throw Error(ErrorCode::kEmptyInput, "average precision of an empty ranking");
    double sum = 0.0;
    int hits = 0;
    for (std::size_t k = 0; k < relevance.size(); ++k) {
        if (relevance[k] != 0 && relevance[k] != 1) {
            throw Error(ErrorCode::kInvalidArgument, "relevance values must be 0 or 1");
        }
        if (relevance[k] == 1) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(k + 1);
        }
    }
    return hits == 0 ? 0.0 : sum / hits;
}

double mean_average_precision(std::span<const double> aps) {
    if (aps.empty()) throw Error(ErrorCode::kEmptyInput, "MAP over zero queries");
    return std::accumulate(aps.begin(), aps.end(), 0.0) / static_cast<double>(aps.size());
}

double average_pairwise_similarity(std::span<const EmbeddingVector> embeddings) {
    if (embeddings.size() < 2) throw Error(ErrorCode::kFewerThanTwo, "APS needs at least two results");
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            sum += cosine_similarity(embeddings[i], embeddings[j]);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

double average_pairwise_similarity(const Dataset& dataset, std::span<const FrameId> frames) {
    std::vector<EmbeddingVector> embeddings;
    embeddings.reserve(frames.size());
    for (FrameId id : frames) embeddings.push_back(dataset.get_embedding(id));
    return average_pairwise_similarity(embeddings);
}

std::vector<FrameId> baseline_clip_relevant(const Dataset& dataset, const EmbeddingVector& query, std::size_t k) {
    struct Scored {
        double sim;
        FrameId id;
    };
    std::vector<Scored> scored;
    scored.reserve(dataset.size());
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        scored.push_back({cosine_similarity(dataset.embedding_at(r), query), dataset.frame_at(r).frame_id});
    }
    const std::size_t n = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(n), scored.end(),
                      [](const Scored& a, const Scored& b) { return a.sim != b.sim ? a.sim > b.sim : a.id < b.id; });
    std::vector<FrameId> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(scored[i].id);
    return out;
}

std::vector<FrameId> baseline_clip_diverse(const Dataset& dataset, const EmbeddingVector& query, std::size_t k) {
    const std::size_t n = dataset.size();
    const std::size_t target = std::min(k, n);
    std::vector<double> query_sim(n);
    for (std::size_t r = 0; r < n; ++r) query_sim[r] = cosine_similarity(dataset.embedding_at(r), query);

    std::vector<bool> taken(n, false);
    std::vector<double> max_to_selected(n, -std::numeric_limits<double>::infinity());
    std::vector<FrameId> out;
    auto id = [&](std::size_t r) { return dataset.frame_at(r).frame_id; };

    while (out.size() < target) {
        std::size_t best = n;
        for (std::size_t r = 0; r < n; ++r) {
            if (taken[r]) continue;
            if (best == n) {
                best = r;
                continue;
            }
            if (out.empty()) {
                if (query_sim[r] > query_sim[best] || (query_sim[r] == query_sim[best] && id(r) < id(best))) best = r;
                continue;
            }
            const double a = max_to_selected[r];
            const double b = max_to_selected[best];
            if (a < b || (a == b && (query_sim[r] > query_sim[best] ||
                                     (query_sim[r] == query_sim[best] && id(r) < id(best))))) {
                best = r;
            }
        }
        taken[best] = true;
        out.push_back(id(best));
        const auto& chosen = dataset.embedding_at(best);
        for (std::size_t r = 0; r < n; ++r) {
            if (!taken[r]) {
                max_to_selected[r] = std::max(max_to_selected[r], cosine_similarity(dataset.embedding_at(r), chosen));
            }
        }
    }
    return out;
}

PixelFrame downscale_bilinear(const PixelFrame& frame, std::size_t height, std::size_t width) {
    if (frame.height == 0 || frame.width == 0 || height == 0 || width == 0) {
        throw Error(ErrorCode::kShapeMismatch, "image dimensions must be positive");
    }
    PixelFrame out;
    out.frame_id = frame.frame_id;
    out.height = height;
    out.width = width;
    out.pixels.resize(height * width);
    // Pixel-center alignment, edges clamped.
    const double sy = static_cast<double>(frame.height) / static_cast<double>(height);
    const double sx = static_cast<double>(frame.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(frame.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, frame.height - 1);
        const double wy = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                         static_cast<double>(frame.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, frame.width - 1);
            const double wx = fx - static_cast<double>(x0);
            const double top = frame.at(y0, x0) * (1.0 - wx) + frame.at(y0, x1) * wx;
            const double bottom = frame.at(y1, x0) * (1.0 - wx) + frame.at(y1, x1) * wx;
            out.pixels[y * width + x] = static_cast<float>(top * (1.0 - wy) + bottom * wy);
        }
    }
    return out;
}

PixelFrame read_pgm(const fs::path& path, FrameId frame_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kMissingPixels, "cannot open " + path.string());
    auto next_token = [&in]() {
        std::string tok;
        char c;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(static_cast<unsigned char>(c))) {
                if (!tok.empty()) break;
                continue;
            }
            tok.push_back(c);
        }
        return tok;
    };
    const std::string magic = next_token();
    if (magic != "P5" && magic != "P2") throw Error(ErrorCode::kMissingPixels, path.string() + " is not a PGM");
    PixelFrame f;
    f.frame_id = frame_id;
    try {
        f.width = std::stoul(next_token());
        f.height = std::stoul(next_token());
        const unsigned long maxval = std::stoul(next_token());
        if (maxval == 0 || maxval > 255) throw Error(ErrorCode::kMissingPixels, "unsupported PGM maxval");
        f.pixels.resize(f.width * f.height);
        const float scale = 255.0f / static_cast<float>(maxval);
        if (magic == "P5") {
            std::vector<unsigned char> raw(f.pixels.size());
            in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
            if (in.gcount() != static_cast<std::streamsize>(raw.size())) {
                throw Error(ErrorCode::kMissingPixels, path.string() + " is truncated");
            }
            for (std::size_t i = 0; i < raw.size(); ++i) f.pixels[i] = static_cast<float>(raw[i]) * scale;
        } else {
            for (auto& p : f.pixels) p = static_cast<float>(std::stoul(next_token())) * scale;
        }
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::kMissingPixels, path.string() + " has a malformed PGM header");
    }
    if (f.width == 0 || f.height == 0) throw Error(ErrorCode::kShapeMismatch, "empty image " + path.string());
    return f;
}

PixelStore load_thumbnail_pixels(const Dataset& dataset, const VddOptions& options, const fs::path& base_dir) {
    PixelStore store;
    for (const auto& frame : dataset.frames()) {
        if (!frame.thumb_path) continue;
        fs::path path(*frame.thumb_path);
        if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
        store.emplace(frame.frame_id, downscale_bilinear(read_pgm(path, frame.frame_id),
                                                         options.resize_height, options.resize_width));
    }
    return store;
}

double frame_mse(const PixelFrame& a, const PixelFrame& b, double intensity_scale) {
    if (a.height != b.height || a.width != b.width) {
        throw Error(ErrorCode::kShapeMismatch, "frames " + std::to_string(a.frame_id) + " and " +
                                                   std::to_string(b.frame_id) + " differ in shape");
    }
    if (a.pixels.empty()) throw Error(ErrorCode::kShapeMismatch, "empty image");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = (static_cast<double>(a.pixels[i]) - b.pixels[i]) * intensity_scale;
        sum += d * d;
    }
    return sum / static_cast<double>(a.pixels.size());
}

PruneResult vdd_filter(std::vector<ScoredCandidate> ranked, const PixelStore& pixels, const VddOptions& options,
                       std::size_t k) {
    if (ranked.empty()) throw Error(ErrorCode::kEmptyCandidates, "no candidates to filter");
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
    std::vector<const PixelFrame*> frames;
    frames.reserve(ranked.size());
    for (const auto& c : ranked) {
        auto it = pixels.find(c.frame_id);
        if (it == pixels.end()) throw Error(ErrorCode::kMissingPixels, "no pixels for frame " + std::to_string(c.frame_id));
        frames.push_back(&it->second);
    }
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        double min_mse = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < i; ++j) {
            min_mse = std::min(min_mse, frame_mse(*frames[i], *frames[j], options.intensity_scale));
        }
        auto& c = ranked[i];
        c.pixel_mse = i == 0 ? std::nullopt : std::optional<double>(min_mse);
        if (min_mse < options.mse_threshold) {
            c.status = CandidateStatus::kPrunedSimilar;
        } else if (c.status != CandidateStatus::kRestoredMinK) {
            c.status = CandidateStatus::kKept;
        }
    }
    restore_min_k(ranked, std::min(k, ranked.size()));
    return split_by_status(std::move(ranked));
}

std::vector<RelevanceJudgment> parse_judgments(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::kInvalidArgument, "judgments must be a JSON array");
    std::vector<RelevanceJudgment> out;
    try {
        for (const auto& item : j) {
            RelevanceJudgment r;
            r.query = item.at("query").get<std::string>();
            r.relevant_frame_ids = item.at("relevant_frame_ids").get<std::vector<FrameId>>();
            std::sort(r.relevant_frame_ids.begin(), r.relevant_frame_ids.end());
            r.relevant_frame_ids.erase(std::unique(r.relevant_frame_ids.begin(), r.relevant_frame_ids.end()),
                                       r.relevant_frame_ids.end());
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, std::string("malformed judgments: ") + e.what());
    }
    return out;
}

std::vector<RelevanceJudgment> load_judgments(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    try {
        return parse_judgments(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
    }
}

void validate_judgments(const Dataset& dataset, std::span<const RelevanceJudgment> judgments) {
    std::unordered_set<std::string> seen;
    for (const auto& j : judgments) {
        if (!seen.insert(j.query).second) throw Error(ErrorCode::kInvalidArgument, "duplicate query '" + j.query + "'");
        for (FrameId id : j.relevant_frame_ids) {
            if (!dataset.row_of(id)) {
                throw Error(ErrorCode::kUnknownFrame, "judgment for '" + j.query + "' names unknown frame " +
                                                          std::to_string(id));
            }
        }
    }
}

std::string method_name(EvalMethod m) {
    switch (m) {
        case EvalMethod::kZelda: return "zelda";
        case EvalMethod::kClipRelevant: return "clip_relevant";
        case EvalMethod::kClipDiverse: return "clip_diverse";
        case EvalMethod::kVdd: return "vdd";
        case EvalMethod::kAblationLabelSet: return "ablation:+label_set";
        case EvalMethod::kAblationDiversityRank: return "ablation:+diversity_rank";
    }
    return "unknown";
}

EvalMethod parse_method(const std::string& name) {
    if (name == "zelda") return EvalMethod::kZelda;
    if (name == "clip_relevant") return EvalMethod::kClipRelevant;
    if (name == "clip_diverse") return EvalMethod::kClipDiverse;
    if (name == "vdd") return EvalMethod::kVdd;
    if (name == "ablation:+label_set" || name == "+label_set") return EvalMethod::kAblationLabelSet;
    if (name == "ablation:+diversity_rank" || name == "+diversity_rank" || name == "full") {
        return EvalMethod::kAblationDiversityRank;
    }
    throw Error(ErrorCode::kUnknownMode, "unknown method '" + name + "'");
}

namespace {

EmbeddingVector query_embedding(const EvalContext& ctx, const std::string& query) {
    return assemble_prompt_set(query, {}, {}, ctx.prompt_options, ctx.embed).query_embedding();
}

std::vector<FrameId> ids_of(const QueryResult& result) {
    std::vector<FrameId> ids;
    for (const auto& c : result.ranked) ids.push_back(c.frame_id);
    return ids;
}

}  // namespace

std::vector<FrameId> run_method(const EvalContext& ctx, const std::string& query, std::size_t k, EvalMethod method) {
    if (ctx.dataset == nullptr) throw Error(ErrorCode::kInvalidArgument, "evaluation context has no dataset");
    const Dataset& dataset = *ctx.dataset;
    switch (method) {
        case EvalMethod::kClipRelevant: return baseline_clip_relevant(dataset, query_embedding(ctx, query), k);
        case EvalMethod::kClipDiverse: return baseline_clip_diverse(dataset, query_embedding(ctx, query), k);
        default: break;
    }
    const PromptSet prompts = assemble_prompt_set(query, ctx.label_set, ctx.quality_terms, ctx.prompt_options, ctx.embed);
    QueryOptions options = ctx.query_options;
    options.k = k;
    switch (method) {
        case EvalMethod::kAblationLabelSet:
            options.enable_diversity = false;
            options.enable_quality = true;
            return ids_of(execute_query(dataset, prompts, options));
        case EvalMethod::kVdd: {
            if (ctx.pixels == nullptr) throw Error(ErrorCode::kMissingPixels, "vdd method needs pixel frames");
            options.enable_diversity = true;
            options.enable_quality = true;
            const PixelStore& pixels = *ctx.pixels;
            const VddOptions vdd = ctx.vdd;
            return ids_of(execute_query(dataset, prompts, options,
                                        [&pixels, vdd](std::vector<ScoredCandidate> ranked, std::size_t kk) {
                                            return vdd_filter(std::move(ranked), pixels, vdd, kk);
                                        }));
        }
        default:
            options.enable_diversity = true;
            options.enable_quality = true;
            return ids_of(execute_query(dataset, prompts, options));
    }
}

EvalReport evaluate_method(const EvalContext& ctx, std::span<const RelevanceJudgment> judgments, std::size_t k,
                           EvalMethod method) {
    if (ctx.dataset == nullptr) throw Error(ErrorCode::kInvalidArgument, "evaluation context has no dataset");
    if (judgments.empty()) throw Error(ErrorCode::kEmptyInput, "no judgments to evaluate");
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
    validate_judgments(*ctx.dataset, judgments);
    EvalReport report;
    report.method = method_name(method);
    std::vector<double> aps;
    for (const auto& judgment : judgments) {
        const auto ranked = run_method(ctx, judgment.query, k, method);
        QueryEval row;
        row.query = judgment.query;
        row.k = k;
        row.method = report.method;
        std::vector<FrameId> relevant = judgment.relevant_frame_ids;
        std::sort(relevant.begin(), relevant.end());
        std::vector<int> bits;
        for (FrameId id : ranked) bits.push_back(std::binary_search(relevant.begin(), relevant.end(), id) ? 1 : 0);
        row.ap = bits.empty() ? 0.0 : average_precision(bits);
        if (ranked.size() >= 2) row.aps = average_pairwise_similarity(*ctx.dataset, ranked);
        aps.push_back(row.ap);
        report.per_query.push_back(std::move(row));
    }
    report.map = mean_average_precision(aps);
    return report;
}

EvalReport run_ablation(const EvalContext& ctx, std::span<const RelevanceJudgment> judgments, std::size_t k,
                        EvalMethod mode) {
    if (mode != EvalMethod::kClipRelevant && mode != EvalMethod::kAblationLabelSet &&
        mode != EvalMethod::kAblationDiversityRank) {
        throw Error(ErrorCode::kUnknownMode, method_name(mode) + " is not an ablation mode");
    }
    return evaluate_method(ctx, judgments, k, mode);
}

// ---- report I/O ------------------------------------------------------------

nlohmann::ordered_json report_to_json(const EvalReport& report) {
    nlohmann::ordered_json j;
    j["method"] = report.method;
    j["map"] = report.map;
    nlohmann::ordered_json per_query = nlohmann::ordered_json::object();
    for (const auto& q : report.per_query) {
        nlohmann::ordered_json row;
        row["ap"] = q.ap;
        row["aps"] = q.aps ? nlohmann::ordered_json(*q.aps) : nlohmann::ordered_json(nullptr);
        row["k"] = q.k;
        row["method"] = q.method;
        per_query[q.query] = std::move(row);
    }
    j["per_query"] = std::move(per_query);
    return j;
}

EvalReport report_from_json(const nlohmann::ordered_json& j) {
    EvalReport report;
    try {
        report.method = j.at("method").get<std::string>();
        report.map = j.at("map").get<double>();
        for (const auto& [query, row] : j.at("per_query").items()) {
            QueryEval q;
            q.query = query;
            q.ap = row.at("ap").get<double>();
            if (!row.at("aps").is_null()) q.aps = row.at("aps").get<double>();
            q.k = row.at("k").get<std::size_t>();
            q.method = row.at("method").get<std::string>();
            report.per_query.push_back(std::move(q));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kInvalidArgument, std::string("malformed report: ") + e.what());
    }
    return report;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

double parse_double(const std::string& s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw Error(ErrorCode::kInvalidArgument, "bad number '" + s + "' in report");
    }
    return v;
}

constexpr const char* kCsvHeader = "method,query,k,ap,aps";

}  // namespace

std::string report_to_csv(const EvalReport& report) {
    std::string out = std::string(kCsvHeader) + "\n";
    for (const auto& q : report.per_query) {
        out += csv_field(q.method) + "," + csv_field(q.query) + "," + std::to_string(q.k) + "," + format_double(q.ap) +
               "," + (q.aps ? format_double(*q.aps) : std::string()) + "\n";
    }
    return out;
}

EvalReport report_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != kCsvHeader) {
        throw Error(ErrorCode::kInvalidArgument, "report csv must start with '" + std::string(kCsvHeader) + "'");
    }
    EvalReport report;
    std::vector<double> aps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 5) throw Error(ErrorCode::kInvalidArgument, "report csv row needs 5 fields");
        QueryEval q;
        q.method = f[0];
        q.query = f[1];
        q.k = static_cast<std::size_t>(parse_double(f[2]));
        q.ap = parse_double(f[3]);
        if (!f[4].empty()) q.aps = parse_double(f[4]);
        report.method = q.method;
        aps.push_back(q.ap);
        report.per_query.push_back(std::move(q));
    }
    if (!aps.empty()) report.map = mean_average_precision(aps);
    return report;
}

void emit_report(const EvalReport& report, const fs::path& path, ReportFormat format) {
    if (report.per_query.empty()) throw Error(ErrorCode::kEmptyReport, "report has no per-query rows");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
    if (format == ReportFormat::kJson) {
        out << report_to_json(report).dump(2) << '\n';
    } else {
        out << report_to_csv(report);
    }
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

EvalReport read_report(const fs::path& path, ReportFormat format) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    if (format == ReportFormat::kCsv) return report_from_csv(buf.str());
    try {
        return report_from_json(nlohmann::ordered_json::parse(buf.str()));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
    }
}

}  // namespace zelda
