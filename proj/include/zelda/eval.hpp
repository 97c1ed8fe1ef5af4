#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "zelda/frame_store.hpp"
#include "zelda/pipeline.hpp"
#include "zelda/prompts.hpp"

namespace zelda {

// ---- metrics ---------------------------------------------------------------

/// AP = (1/RF) * sum_k P(k) r(k) over the returned list, where RF counts the
/// relevant frames that were returned. Returns 0 when nothing relevant was
/// returned. Throws EmptyInput for an empty list.
double average_precision(std::span<const int> relevance);

/// Arithmetic mean. Throws EmptyInput.
double mean_average_precision(std::span<const double> aps);

/// Mean cosine over all K(K-1)/2 unordered pairs. Can be negative for
/// synthetic vectors. Throws FewerThanTwo.
double average_pairwise_similarity(std::span<const EmbeddingVector> embeddings);
double average_pairwise_similarity(const Dataset& dataset, std::span<const FrameId> frames);

// ---- baselines -------------------------------------------------------------

/// Top-k frames by raw cosine to the query; ties by ascending frame_id.
std::vector<FrameId> baseline_clip_relevant(const Dataset& dataset, const EmbeddingVector& query, std::size_t k);

/// Greedy farthest-first: seed with the frame closest to the query, then keep
/// adding the frame whose max cosine to the selected set is smallest (ties:
/// higher query cosine, then ascending frame_id).
std::vector<FrameId> baseline_clip_diverse(const Dataset& dataset, const EmbeddingVector& query, std::size_t k);

// ---- pixel-difference filter ----------------------------------------------

struct PixelFrame {
    FrameId frame_id = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> pixels;  // grayscale, [0, 255], row-major

    float at(std::size_t y, std::size_t x) const noexcept { return pixels[y * width + x]; }
};

using PixelStore = std::unordered_map<FrameId, PixelFrame>;

struct VddOptions {
    double mse_threshold = 1.5;
    double intensity_scale = 0.01;  // applied to each intensity difference before squaring
    std::size_t resize_height = 64;
    std::size_t resize_width = 64;
};

PixelFrame downscale_bilinear(const PixelFrame& frame, std::size_t height, std::size_t width);

/// Binary (P5) or ASCII (P2) PGM with maxval <= 255.
PixelFrame read_pgm(const std::filesystem::path& path, FrameId frame_id);

/// Reads every frame's thumb_path as PGM and resizes it to the configured
/// shape. Relative paths resolve against `base_dir` when given. Frames
/// without a thumbnail are left out.
PixelStore load_thumbnail_pixels(const Dataset& dataset, const VddOptions& options,
                                 const std::filesystem::path& base_dir = {});

/// mean(((a - b) * scale)^2). Throws ShapeMismatch.
double frame_mse(const PixelFrame& a, const PixelFrame& b, double intensity_scale);

/// Drop-in for diversify_frames using pixel MSE: a candidate is pruned when
/// its MSE to any earlier-visited candidate is below the threshold. The
/// minimum MSE lands in pixel_mse. Throws MissingPixels, ShapeMismatch.
PruneResult vdd_filter(std::vector<ScoredCandidate> ranked, const PixelStore& pixels, const VddOptions& options,
                       std::size_t k);

// ---- evaluation runs -------------------------------------------------------

struct RelevanceJudgment {
    std::string query;
    std::vector<FrameId> relevant_frame_ids;
};

std::vector<RelevanceJudgment> parse_judgments(const nlohmann::json& j);
std::vector<RelevanceJudgment> load_judgments(const std::filesystem::path& path);
/// Throws UnknownFrame for ids missing from the dataset, InvalidArgument for
/// duplicate queries.
void validate_judgments(const Dataset& dataset, std::span<const RelevanceJudgment> judgments);

enum class EvalMethod { kZelda, kClipRelevant, kClipDiverse, kVdd, kAblationLabelSet, kAblationDiversityRank };

std::string method_name(EvalMethod m);
/// Accepts the canonical names plus "+label_set", "+diversity_rank" and
/// "full". Throws UnknownMode.
EvalMethod parse_method(const std::string& name);

struct QueryEval {
    std::string query;
    double ap = 0.0;
    std::optional<double> aps;  // absent when fewer than two results
    std::size_t k = 0;
    std::string method;

    friend bool operator==(const QueryEval&, const QueryEval&) = default;
};

struct EvalReport {
    std::string method;
    std::vector<QueryEval> per_query;  // judgment order
    double map = 0.0;

    friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

struct EvalContext {
    const Dataset* dataset = nullptr;
    BatchEmbedFn embed;
    std::vector<std::string> label_set;
    std::vector<std::string> quality_terms;
    PromptOptions prompt_options;
    QueryOptions query_options;  // k is overridden per run
    const PixelStore* pixels = nullptr;
    VddOptions vdd;
};

/// Ranked frame ids a method returns for one query.
std::vector<FrameId> run_method(const EvalContext& ctx, const std::string& query, std::size_t k, EvalMethod method);

EvalReport evaluate_method(const EvalContext& ctx, std::span<const RelevanceJudgment> judgments, std::size_t k,
                           EvalMethod method);

/// Ablation ladder: clip_relevant, +label_set (label + quality prompts,
/// softmax ranking, quality pruning) and +diversity_rank (full pipeline).
/// Other modes throw UnknownMode.
EvalReport run_ablation(const EvalContext& ctx, std::span<const RelevanceJudgment> judgments, std::size_t k,
                        EvalMethod mode);

enum class ReportFormat { kJson, kCsv };

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& j);
std::string report_to_csv(const EvalReport& report);
EvalReport report_from_csv(const std::string& text);

/// Throws EmptyReport when there are no per-query rows, IoError on write.
void emit_report(const EvalReport& report, const std::filesystem::path& path, ReportFormat format);
EvalReport read_report(const std::filesystem::path& path, ReportFormat format);

}  // namespace zelda
