#include "zelda/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "zelda/error.hpp"

namespace zelda {

namespace {

constexpr std::size_t kScoringBlock = 256;

void score_rows(const Dataset& dataset, const PromptSet& prompts, double temperature, std::size_t begin,
                std::size_t end, std::vector<ScoredCandidate>& out) {
    const auto frames = dataset.embeddings();
    const std::size_t first_quality = prompts.first_quality();
    const std::size_t quality_count = prompts.quality_count();
    std::vector<double> confidences;
    for (std::size_t block = begin; block < end; block += kScoringBlock) {
        const std::size_t block_end = std::min(end, block + kScoringBlock);
        const auto sims = similarity_matrix(frames.subspan(block, block_end - block), prompts.embeddings());
        for (std::size_t r = block; r < block_end; ++r) {
            const auto row = sims.row(r - block);
            softmax_into(row, temperature, confidences);
            ScoredCandidate& c = out[r];
            c.frame_id = dataset.frame_at(r).frame_id;
            c.row = r;
            c.query_similarity = row[0];
            c.query_confidence = confidences[0];
            c.label_confidence = 0.0;
            for (std::size_t j = 1; j < first_quality; ++j) c.label_confidence += confidences[j];
            c.quality_confidences.assign(confidences.begin() + static_cast<std::ptrdiff_t>(first_quality),
                                         confidences.begin() +
                                             static_cast<std::ptrdiff_t>(first_quality + quality_count));
        }
    }
}

void check_k(std::size_t k) {
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be at least 1");
}

}  // namespace

std::string_view status_name(CandidateStatus s) noexcept {
    switch (s) {
        case CandidateStatus::kKept: return "kept";
        case CandidateStatus::kPrunedSimilar: return "pruned_similar";
        case CandidateStatus::kPrunedQuality: return "pruned_quality";
        case CandidateStatus::kRestoredMinK: return "restored_min_k";
    }
    return "unknown";
}

double ScoredCandidate::max_quality_confidence() const noexcept {
    double best = 0.0;
    for (double q : quality_confidences) best = std::max(best, q);
    return best;
}

bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b) noexcept {
    if (a.query_confidence != b.query_confidence) return a.query_confidence > b.query_confidence;
    if (a.query_similarity != b.query_similarity) return a.query_similarity > b.query_similarity;
    return a.frame_id < b.frame_id;
}

std::vector<ScoredCandidate> generate_candidates(const Dataset& dataset, const PromptSet& prompts,
                                                 double temperature, unsigned threads) {
    if (dataset.size() > 0 && dataset.dim() != prompts.dim()) {
        throw Error(ErrorCode::kDimensionMismatch, "dataset dim " + std::to_string(dataset.dim()) +
                                                       " but prompt dim " + std::to_string(prompts.dim()));
    }
    if (!(temperature > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
    std::vector<ScoredCandidate> out(dataset.size());
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t n = dataset.size();
    const std::size_t workers = std::min<std::size_t>(threads, (n + kScoringBlock - 1) / kScoringBlock);
    if (workers <= 1) {
        score_rows(dataset, prompts, temperature, 0, n, out);
    } else {
        // Each worker owns a disjoint row range, so the merge is positional.
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = w * chunk;
            const std::size_t end = std::min(n, begin + chunk);
            if (begin >= end) break;
            pool.emplace_back([&, begin, end] { score_rows(dataset, prompts, temperature, begin, end, out); });
        }
        for (auto& t : pool) t.join();
    }
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

void restore_min_k(std::span<ScoredCandidate> candidates, std::size_t floor) {
    std::size_t kept = 0;
    std::vector<std::size_t> pruned;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (candidates[i].is_kept()) {
            ++kept;
        } else {
            pruned.push_back(i);
        }
    }
    if (kept >= floor) return;
    std::sort(pruned.begin(), pruned.end(),
              [&](std::size_t a, std::size_t b) { return ranks_before(candidates[a], candidates[b]); });
    for (std::size_t i = 0; i < pruned.size() && kept < floor; ++i, ++kept) {
        candidates[pruned[i]].status = CandidateStatus::kRestoredMinK;
    }
}

PruneResult split_by_status(std::vector<ScoredCandidate> candidates) {
    PruneResult result;
    for (auto& c : candidates) {
        (c.is_kept() ? result.kept : result.pruned).push_back(std::move(c));
    }
    return result;
}

PruneResult diversify_frames(const Dataset& dataset, std::vector<ScoredCandidate> ranked, double prune_threshold,
                             std::size_t k) {
    if (ranked.empty()) throw Error(ErrorCode::kEmptyCandidates, "no candidates to diversify");
    if (!(prune_threshold > 0.0 && prune_threshold <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "prune threshold must be in (0, 1]");
    }
    check_k(k);
    for (std::size_t i = 0; i < ranked.size(); ++i) {
        auto& candidate = ranked[i];
        const auto& mine = dataset.embedding_at(candidate.row);
        double max_sim = 0.0;
        for (std::size_t j = 0; j < i; ++j) {
            const double sim = cosine_similarity(mine, dataset.embedding_at(ranked[j].row));
            if (sim > max_sim) max_sim = sim;
        }
        candidate.diversity_score = max_sim;
        if (max_sim >= prune_threshold) {
            candidate.status = CandidateStatus::kPrunedSimilar;
        } else if (candidate.status != CandidateStatus::kRestoredMinK) {
            candidate.status = CandidateStatus::kKept;
        }
    }
    restore_min_k(ranked, std::min(k, ranked.size()));
    return split_by_status(std::move(ranked));
}

PruneResult quality_prune(std::vector<ScoredCandidate> candidates, std::size_t k) {
    check_k(k);
    for (auto& c : candidates) {
        if (!c.quality_confidences.empty() && c.max_quality_confidence() > c.query_confidence) {
            c.status = CandidateStatus::kPrunedQuality;
        }
    }
    restore_min_k(candidates, std::min(k, candidates.size()));
    return split_by_status(std::move(candidates));
}

std::vector<ScoredCandidate> rank_top_k(std::vector<ScoredCandidate> candidates, std::size_t k) {
    const std::size_t n = std::min(k, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n), candidates.end(),
                      ranks_before);
    candidates.resize(n);
    return candidates;
}

void validate(const QueryOptions& options) {
    check_k(options.k);
    if (!(options.prune_threshold > 0.0 && options.prune_threshold <= 1.0)) {
        throw Error(ErrorCode::kInvalidArgument, "prune threshold must be in (0, 1]");
    }
    if (!(options.temperature > 0.0) || !std::isfinite(options.temperature)) {
        throw Error(ErrorCode::kInvalidArgument, "temperature must be positive and finite");
    }
}

QueryResult execute_query(const Dataset& dataset, const PromptSet& prompts, const QueryOptions& options) {
    return execute_query(dataset, prompts, options, [&](std::vector<ScoredCandidate> ranked, std::size_t k) {
        return diversify_frames(dataset, std::move(ranked), options.prune_threshold, k);
    });
}

QueryResult execute_query(const Dataset& dataset, const PromptSet& prompts, const QueryOptions& options,
                          const DiversityStage& diversity) {
    validate(options);
    QueryResult result;
    result.params = options;
    auto candidates = generate_candidates(dataset, prompts, options.temperature, options.threads);

    auto run_stage = [&](bool quality_stage) {
        if (candidates.empty()) return;
        PruneResult stage = quality_stage ? quality_prune(std::move(candidates), options.k)
                                          : diversity(std::move(candidates), options.k);
        candidates = std::move(stage.kept);
        for (auto& p : stage.pruned) result.pruned.push_back(std::move(p));
    };

    const bool diversity_first = options.stage_order == StageOrder::kDiversityFirst;
    if (diversity_first) {
        if (options.enable_diversity) run_stage(false);
        if (options.enable_quality) run_stage(true);
    } else {
        if (options.enable_quality) run_stage(true);
        if (options.enable_diversity) run_stage(false);
    }
    result.ranked = rank_top_k(std::move(candidates), options.k);
    return result;
}

}  // namespace zelda
