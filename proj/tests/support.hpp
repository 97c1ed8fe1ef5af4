#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "zelda/error.hpp"
#include "zelda/fixtures.hpp"
#include "zelda/frame_store.hpp"
#include "zelda/pipeline.hpp"
#include "zelda/vector_core.hpp"

namespace zelda::test {

/// Runs `expr` and evaluates to the ErrorCode it threw. Fails the test if it
/// threw nothing.
#define ZELDA_ERROR_CODE(expr)                                   \
    ([&]() -> ::zelda::ErrorCode {                               \
        try {                                                    \
            (void)(expr);                                        \
        } catch (const ::zelda::Error& e) {                      \
            return e.code();                                     \
        }                                                        \
        ADD_FAILURE() << "no zelda::Error from " #expr;          \
        return ::zelda::ErrorCode::kInvalidArgument;             \
    }())

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("zelda-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

inline void spit(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << bytes;
}

// ---- independent oracles ---------------------------------------------------

/// Sequential double-precision dot product, no lane splitting.
inline double naive_dot(std::span<const float> a, std::span<const float> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return s;
}

/// Textbook AP: mean of precision@i over the relevant positions that appear.
inline double oracle_average_precision(const std::vector<int>& rel) {
    double hits = 0.0;
    double sum = 0.0;
    for (std::size_t i = 0; i < rel.size(); ++i) {
        if (rel[i]) {
            hits += 1.0;
            sum += hits / static_cast<double>(i + 1);
        }
    }
    return hits == 0.0 ? 0.0 : sum / hits;
}

/// Ordered-pair mean over i != j, halved back to unordered pairs implicitly.
/// Each pair is a cosine, so it is bounded to [-1, 1].
inline double oracle_pairwise_mean(const std::vector<EmbeddingVector>& v) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        for (std::size_t j = 0; j < v.size(); ++j) {
            if (i == j) continue;
            sum += std::clamp(naive_dot(v[i].values(), v[j].values()), -1.0, 1.0);
            ++count;
        }
    }
    return sum / static_cast<double>(count);
}

struct DiversifyOutcome {
    std::vector<FrameId> kept;    // input order
    std::vector<FrameId> pruned;  // input order
    std::vector<double> score;    // by input position
    std::vector<CandidateStatus> status;  // by input position
};

/// Brute-force candidate diversification. Builds the pairwise similarity
/// table (lower triangle) first, then walks candidates in the given order.
/// Pairwise similarity is taken from `cosine_similarity` since that is an
/// input to the algorithm, not part of it.
inline DiversifyOutcome oracle_diversify(const Dataset& dataset, const std::vector<ScoredCandidate>& ranked,
                                         double threshold, std::size_t k) {
    const std::size_t n = ranked.size();
    std::vector<std::vector<double>> sim(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            sim[i][j] = cosine_similarity(dataset.embedding_at(ranked[i].row), dataset.embedding_at(ranked[j].row));
        }
    }
    DiversifyOutcome out;
    out.score.assign(n, 0.0);
    out.status.assign(n, CandidateStatus::kKept);
    std::size_t kept = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < i; ++j) m = std::max(m, sim[i][j]);
        out.score[i] = m;
        if (m >= threshold) {
            out.status[i] = CandidateStatus::kPrunedSimilar;
        } else {
            ++kept;
        }
    }
    const std::size_t floor = std::min(k, n);
    for (std::size_t i = 0; i < n && kept < floor; ++i) {
        if (out.status[i] == CandidateStatus::kPrunedSimilar) {
            out.status[i] = CandidateStatus::kRestoredMinK;
            ++kept;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        (out.status[i] == CandidateStatus::kPrunedSimilar ? out.pruned : out.kept).push_back(ranked[i].frame_id);
    }
    return out;
}

// ---- random inputs ---------------------------------------------------------

/// Clustered unit vectors so that every threshold in (0.5, 0.95) sees both
/// pruned and kept candidates. Some rows are exact copies of earlier ones.
inline std::vector<EmbeddingVector> clustered_vectors(FixtureRng& rng, std::size_t n, std::size_t dim) {
    const std::size_t centers = 1 + rng.below(8);
    std::vector<EmbeddingVector> c;
    for (std::size_t i = 0; i < centers; ++i) c.push_back(rng.unit_vector(dim));
    const double spread = 0.3 / std::sqrt(static_cast<double>(dim)) * (0.25 + 3.0 * rng.uniform());
    std::vector<EmbeddingVector> out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0 && rng.uniform() < 0.05) {
            out.push_back(out[rng.below(i)]);
            continue;
        }
        const auto& center = c[rng.below(centers)];
        auto v = rng.gaussian_vector(dim, spread);
        for (std::size_t d = 0; d < dim; ++d) v[d] += center[d];
        out.push_back(normalize(v));
    }
    return out;
}

/// Candidates for every row with random confidences (with deliberate ties),
/// sorted into rank order.
inline std::vector<ScoredCandidate> random_ranked(FixtureRng& rng, const Dataset& dataset) {
    std::vector<ScoredCandidate> out(dataset.size());
    for (std::size_t r = 0; r < dataset.size(); ++r) {
        auto& c = out[r];
        c.row = r;
        c.frame_id = dataset.frame_at(r).frame_id;
        c.query_confidence = rng.uniform() < 0.1 ? 0.5 : rng.uniform();
        c.query_similarity = rng.uniform() < 0.1 ? 0.25 : rng.uniform() * 2.0 - 1.0;
    }
    std::sort(out.begin(), out.end(), ranks_before);
    return out;
}

}  // namespace zelda::test
