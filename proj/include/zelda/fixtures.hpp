#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "zelda/eval.hpp"
#include "zelda/frame_store.hpp"
#include "zelda/prompts.hpp"

namespace zelda {

/// Seeded generator whose output depends only on the seed: mt19937_64 bits
/// fed through our own uniform and Box-Muller transforms instead of the
/// implementation-defined std distributions.
class FixtureRng {
public:
    explicit FixtureRng(std::uint64_t seed) : engine_(seed) {}

    double uniform();  // [0, 1)
    double normal();
    std::size_t below(std::size_t n);
    std::vector<float> gaussian_vector(std::size_t dim, double scale = 1.0);
    EmbeddingVector unit_vector(std::size_t dim);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct ClusterFixtureParams {
    std::size_t clusters = 4;
    std::size_t per = 25;
    std::size_t dim = 16;
    std::uint64_t seed = 7;
    double noise = 0.05;                // per-coordinate stddev around the cluster center
    std::size_t distractor_labels = 8;
    double max_center_cosine = 0.5;     // |cos| bound between any two anchors
};

/// Near-duplicate clusters: cluster c holds `per` frames around a center
/// whose text prompt is "concept_c". The prompt cache carries every label
/// (concepts plus distractors) and the default quality terms, templated.
struct ClusterFixture {
    ClusterFixtureParams params;
    VectorTable frames;
    std::vector<FrameRecord> records;
    std::vector<std::size_t> cluster_of;  // by row
    std::vector<std::string> concepts;
    std::vector<std::string> labels;
    PromptCache prompts;
    std::vector<RelevanceJudgment> judgments;  // query concept_c -> frames of cluster c

    const EmbeddingVector& concept_embedding(std::size_t c) const;
};

ClusterFixture make_cluster_fixture(const ClusterFixtureParams& params);
Dataset fixture_dataset(const ClusterFixture& fixture, std::string name = "fixture");

/// Writes frames.zea, frames.jsonl, labels.txt, prompts.zea, prompts.jsonl,
/// judgments.json and queries/<concept>.vec into `dir`.
void write_cluster_fixture(const ClusterFixture& fixture, const std::filesystem::path& dir);

/// Frames for one query concept ("target") split into sharp relevant frames,
/// frames pulled toward the "blurry" prompt, and frames near distractor
/// labels.
struct QualityFixture {
    std::vector<EmbeddingVector> frames;
    std::vector<bool> blurry;  // by frame id
    std::vector<std::string> labels;
    PromptCache prompts;
    std::string query = "target";
};

QualityFixture make_quality_fixture(std::uint64_t seed, std::size_t dim = 16);

/// One vector per file: whitespace/comma separated floats or a JSON array.
std::vector<float> read_vector_file(const std::filesystem::path& path);
void write_vector_file(const std::filesystem::path& path, std::span<const float> values);

}  // namespace zelda
