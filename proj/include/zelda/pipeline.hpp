#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "zelda/frame_store.hpp"
#include "zelda/prompts.hpp"

namespace zelda {

enum class CandidateStatus { kKept, kPrunedSimilar, kPrunedQuality, kRestoredMinK };

std::string_view status_name(CandidateStatus s) noexcept;

struct ScoredCandidate {
    FrameId frame_id = 0;
    std::size_t row = 0;             // row in the owning Dataset
    double query_similarity = 0.0;   // raw cosine to the query prompt
    double query_confidence = 0.0;   // softmax mass of the query prompt
    double label_confidence = 0.0;   // summed softmax mass of all label prompts
    std::vector<double> quality_confidences;  // PromptSet quality order
    double diversity_score = 0.0;    // max cosine to earlier-visited candidates, floored at 0
    std::optional<double> pixel_mse; // min MSE to earlier candidates, set only by the pixel filter
    CandidateStatus status = CandidateStatus::kKept;

    double max_quality_confidence() const noexcept;
    bool is_kept() const noexcept {
        return status == CandidateStatus::kKept || status == CandidateStatus::kRestoredMinK;
    }
};

/// Rank order: query_confidence descending, then raw query cosine descending,
/// then frame_id ascending. The cosine key only matters when confidences tie,
/// which is always the case when the query is the sole prompt.
bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) noexcept;

struct PruneResult {
    std::vector<ScoredCandidate> kept;    // input order, restored candidates included
    std::vector<ScoredCandidate> pruned;  // input order
};

/// Scores every frame against every prompt, softmaxes each frame's row and
/// returns all N frames in rank order (no truncation).
std::vector<ScoredCandidate> generate_candidates(const Dataset& dataset, const PromptSet& prompts,
                                                 double temperature, unsigned threads = 1);

/// Candidate diversification. Visits `ranked` in order; each candidate's
/// diversity_score is its max cosine against every earlier-visited candidate
/// (pruned ones included), 0 for the first. Scores >= prune_threshold are
/// pruned as similar. If fewer than min(k, N) survive, the best-ranked pruned
/// candidates come back as restored_min_k.
PruneResult diversify_frames(const Dataset& dataset, std::vector<ScoredCandidate> ranked, double prune_threshold,
                             std::size_t k);

/// Prunes candidates whose largest quality confidence strictly exceeds their
/// query confidence, then restores up to min(k, N) like diversify_frames.
PruneResult quality_prune(std::vector<ScoredCandidate> candidates, std::size_t k);

/// The first min(k, N) candidates in rank order.
std::vector<ScoredCandidate> rank_top_k(std::vector<ScoredCandidate> candidates, std::size_t k);

/// Re-admits pruned candidates in rank order until `kept_count` reaches
/// `floor`. Operates on statuses in place; shared by every pruning stage.
void restore_min_k(std::span<ScoredCandidate> candidates, std::size_t floor);

/// Splits candidates into kept and pruned, preserving order.
PruneResult split_by_status(std::vector<ScoredCandidate> candidates);

enum class StageOrder { kDiversityFirst, kQualityFirst };

struct QueryOptions {
    std::size_t k = 20;
    double prune_threshold = 0.80;
    double temperature = 100.0;
    bool enable_diversity = true;
    bool enable_quality = true;
    StageOrder stage_order = StageOrder::kDiversityFirst;
    unsigned threads = 1;
};

struct QueryResult {
    std::vector<ScoredCandidate> ranked;
    std::vector<ScoredCandidate> pruned;
    QueryOptions params;
};

/// Replacement for the similarity stage (the pixel-difference filter plugs in
/// here). Receives candidates in rank order and k.
using DiversityStage = std::function<PruneResult(std::vector<ScoredCandidate>, std::size_t)>;

/// generate_candidates -> diversify_frames -> quality_prune -> rank_top_k,
/// with the two pruning stages individually switchable and reorderable.
QueryResult execute_query(const Dataset& dataset, const PromptSet& prompts, const QueryOptions& options);
QueryResult execute_query(const Dataset& dataset, const PromptSet& prompts, const QueryOptions& options,
                          const DiversityStage& diversity);

void validate(const QueryOptions& options);

}  // namespace zelda
