#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace zelda {

/// Unit-norm dense embedding. Only `normalize` (or `from_unit`, which checks
/// the norm) can produce one, so every instance satisfies the unit-norm
/// invariant within 1e-5.
class EmbeddingVector {
public:
    EmbeddingVector() = default;

    /// Wraps values that are already unit-norm. Throws ZeroVector/NonFinite
    /// on bad input and InvalidArgument if the norm is off by more than 1e-5.
    static EmbeddingVector from_unit(std::vector<float> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const float> values() const noexcept { return values_; }
    float operator[](std::size_t i) const noexcept { return values_[i]; }
    bool empty() const noexcept { return values_.empty(); }

    friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

private:
    friend EmbeddingVector normalize(std::span<const float> raw);
    explicit EmbeddingVector(std::vector<float> values) : values_(std::move(values)) {}

    std::vector<float> values_;
};

struct ConfidenceDistribution {
    // confidences[i] belongs to the i-th input score (prompt id == index).
    std::vector<double> confidences;
    double temperature = 1.0;
};

/// Row-major N x P matrix of cosine similarities.
class SimilarityMatrix {
public:
    SimilarityMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    double at(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
    double& at(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<double> data_;
};

inline constexpr double kZeroNormEpsilon = 1e-12;
inline constexpr double kUnitNormTolerance = 1e-5;

EmbeddingVector normalize(std::span<const float> raw);

/// Euclidean norm accumulated in double.
double l2_norm(std::span<const float> v);

/// Dot product with a fixed reduction order: four interleaved lane sums over
/// the dimension, combined as (l0 + l1) + (l2 + l3). The order never depends
/// on thread count, so results are reproducible bit-for-bit.
double dot(std::span<const float> a, std::span<const float> b);

/// dot(a, b) clamped to [-1, 1]. Throws DimensionMismatch.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

/// Entry (i, j) == cosine_similarity(frames[i], prompts[j]). Rows are split
/// across `threads` workers (0 = hardware concurrency); output is identical
/// for any thread count.
SimilarityMatrix similarity_matrix(std::span<const EmbeddingVector> frames,
                                   std::span<const EmbeddingVector> prompts,
                                   unsigned threads = 1);

/// Numerically stable softmax of temperature * scores.
ConfidenceDistribution softmax(std::span<const double> scores, double temperature);

/// Same as softmax() but writes into `out` (resized to scores.size()); used on
/// the per-frame hot path to avoid an allocation per frame.
void softmax_into(std::span<const double> scores, double temperature, std::vector<double>& out);

}  // namespace zelda
