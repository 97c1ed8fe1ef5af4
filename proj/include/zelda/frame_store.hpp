#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zelda/vector_core.hpp"

namespace zelda {

using FrameId = std::uint64_t;

struct FrameRecord {
    FrameId frame_id = 0;
    std::string video_id;
    double timestamp_s = 0.0;
    std::string source_path;
    std::optional<std::string> thumb_path;

    friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

inline constexpr std::string_view kArchiveMagic = "ZEA1";
inline constexpr double kArchiveNormTolerance = 1e-4;

struct ArchiveHeader {
    int version = 1;
    std::size_t dim = 0;
    std::size_t count = 0;
    std::string metric = "cosine";
    bool normalized = true;
    std::string model;

    friend bool operator==(const ArchiveHeader&, const ArchiveHeader&) = default;
};

/// Dense N x D float32 rows, row-major.
struct VectorTable {
    std::size_t dim = 0;
    std::vector<float> values;

    std::size_t count() const noexcept { return dim == 0 ? 0 : values.size() / dim; }
    std::span<const float> row(std::size_t i) const noexcept { return {values.data() + i * dim, dim}; }
    void push_row(std::span<const float> r);
};

struct EmbeddingArchive {
    ArchiveHeader header;
    VectorTable payload;  // exactly as stored on disk
};

/// File layout: magic(4) | header_len u32 LE | header JSON | N*D float32 LE.
/// `dim` and `count` in the written header are taken from `vectors`.
void write_archive(const std::filesystem::path& path, const VectorTable& vectors, bool normalized,
                   const std::string& model);

/// Reads and validates the container; the payload is returned untouched.
EmbeddingArchive read_archive(const std::filesystem::path& path);

/// Turns archive rows into unit-norm embeddings. Rows of a normalized=false
/// archive go through normalize(); rows of a normalized=true archive keep
/// their bits unless they drift past 1e-5 (renormalized) or 1e-4 (rejected).
std::vector<EmbeddingVector> archive_embeddings(const EmbeddingArchive& archive);

std::vector<FrameRecord> read_frames_jsonl(const std::filesystem::path& path);
void write_frames_jsonl(const std::filesystem::path& path, std::span<const FrameRecord> frames);

/// Immutable collection of frames and their embeddings, sorted by frame_id.
class Dataset {
public:
    Dataset(std::string name, ArchiveHeader header, std::vector<EmbeddingVector> embeddings,
            std::vector<FrameRecord> frames);

    /// In-memory dataset with frame ids 0..N-1 and empty provenance.
    static Dataset from_embeddings(std::string name, std::vector<EmbeddingVector> embeddings,
                                   std::string model = "in-memory");

    const std::string& name() const noexcept { return name_; }
    const ArchiveHeader& header() const noexcept { return header_; }
    std::size_t size() const noexcept { return frames_.size(); }
    std::size_t dim() const noexcept { return header_.dim; }

    std::span<const FrameRecord> frames() const noexcept { return frames_; }
    std::span<const EmbeddingVector> embeddings() const noexcept { return embeddings_; }
    const FrameRecord& frame_at(std::size_t row) const { return frames_.at(row); }
    const EmbeddingVector& embedding_at(std::size_t row) const { return embeddings_.at(row); }

    std::optional<std::size_t> row_of(FrameId id) const noexcept;
    /// Throws UnknownFrame.
    const EmbeddingVector& get_embedding(FrameId id) const;

private:
    std::string name_;
    ArchiveHeader header_;
    std::vector<EmbeddingVector> embeddings_;
    std::vector<FrameRecord> frames_;
};

/// Archive only; frames get ids 0..N-1.
Dataset dataset_from_archive(std::string name, const EmbeddingArchive& archive);

/// Archive plus metadata sidecar. Throws MetadataMismatch when the sidecar
/// line count differs from the archive row count.
Dataset load_dataset(std::string name, const std::filesystem::path& archive_path,
                     const std::filesystem::path& frames_jsonl_path);

}  // namespace zelda
