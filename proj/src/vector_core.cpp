#include "zelda/vector_core.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "zelda/error.hpp"

namespace zelda {

namespace {

void check_finite(std::span<const float> v) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw Error(ErrorCode::kNonFinite, "element " + std::to_string(i) + " is not finite");
        }
    }
}

}  // namespace

double l2_norm(std::span<const float> v) { return std::sqrt(dot(v, v)); }

double dot(std::span<const float> a, std::span<const float> b) {
    const std::size_t n = a.size();
    double lane[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        lane[0] += static_cast<double>(a[i]) * b[i];
        lane[1] += static_cast<double>(a[i + 1]) * b[i + 1];
        lane[2] += static_cast<double>(a[i + 2]) * b[i + 2];
        lane[3] += static_cast<double>(a[i + 3]) * b[i + 3];
    }
    for (std::size_t j = 0; i < n; ++i, ++j) {
        lane[j] += static_cast<double>(a[i]) * b[i];
    }
    return (lane[0] + lane[1]) + (lane[2] + lane[3]);
}

EmbeddingVector normalize(std::span<const float> raw) {
    if (raw.empty()) throw Error(ErrorCode::kZeroVector, "empty vector");
    check_finite(raw);
    const double norm = l2_norm(raw);
    if (!(norm >= kZeroNormEpsilon)) {
        throw Error(ErrorCode::kZeroVector, "norm " + std::to_string(norm) + " below 1e-12");
    }
    if (!std::isfinite(norm)) throw Error(ErrorCode::kNonFinite, "norm overflows");
    std::vector<float> out(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(raw[i]) / norm);
    }
    return EmbeddingVector(std::move(out));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<float> values) {
    if (values.empty()) throw Error(ErrorCode::kZeroVector, "empty vector");
    check_finite(values);
    const double norm = l2_norm(values);
    if (norm < kZeroNormEpsilon) throw Error(ErrorCode::kZeroVector, "zero vector");
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
        throw Error(ErrorCode::kInvalidArgument, "vector is not unit norm (norm=" + std::to_string(norm) + ")");
    }
    return EmbeddingVector(std::move(values));
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    "dimensions " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    return std::clamp(dot(a, b), -1.0, 1.0);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(a.values(), b.values());
}

SimilarityMatrix similarity_matrix(std::span<const EmbeddingVector> frames,
                                   std::span<const EmbeddingVector> prompts, unsigned threads) {
    SimilarityMatrix out(frames.size(), prompts.size());
    if (frames.empty() || prompts.empty()) return out;
    const std::size_t dim = prompts.front().dim();
    for (const auto& p : prompts) {
        if (p.dim() != dim) throw Error(ErrorCode::kDimensionMismatch, "prompt dimensions differ");
    }
    for (const auto& f : frames) {
        if (f.dim() != dim) throw Error(ErrorCode::kDimensionMismatch, "frame dimension differs from prompts");
    }

    auto fill_rows = [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            for (std::size_t c = 0; c < prompts.size(); ++c) {
                out.at(r, c) = std::clamp(dot(frames[r].values(), prompts[c].values()), -1.0, 1.0);
            }
        }
    };

    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    const std::size_t workers = std::min<std::size_t>(threads, frames.size());
    if (workers <= 1) {
        fill_rows(0, frames.size());
        return out;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (frames.size() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(frames.size(), begin + chunk);
        if (begin >= end) break;
        pool.emplace_back(fill_rows, begin, end);
    }
    for (auto& t : pool) t.join();
    return out;
}

void softmax_into(std::span<const double> scores, double temperature, std::vector<double>& out) {
    if (scores.empty()) throw Error(ErrorCode::kEmptyInput, "softmax of empty score list");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw Error(ErrorCode::kInvalidArgument, "temperature must be positive and finite");
    }
    out.resize(scores.size());
    double peak = -INFINITY;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!std::isfinite(scores[i])) {
            throw Error(ErrorCode::kNonFinite, "score " + std::to_string(i) + " is not finite");
        }
        out[i] = temperature * scores[i];
        peak = std::max(peak, out[i]);
    }
    double total = 0.0;
    for (double& v : out) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : out) v /= total;
}

ConfidenceDistribution softmax(std::span<const double> scores, double temperature) {
    ConfidenceDistribution dist;
    dist.temperature = temperature;
    softmax_into(scores, temperature, dist.confidences);
    return dist;
}

}  // namespace zelda
