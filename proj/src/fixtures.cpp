#include "zelda/fixtures.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "zelda/error.hpp"

namespace zelda {

namespace fs = std::filesystem;

double FixtureRng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double FixtureRng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::size_t FixtureRng::below(std::size_t n) { return static_cast<std::size_t>(uniform() * static_cast<double>(n)); }

std::vector<float> FixtureRng::gaussian_vector(std::size_t dim, double scale) {
    std::vector<float> v(dim);
    for (auto& x : v) x = static_cast<float>(normal() * scale);
    return v;
}

EmbeddingVector FixtureRng::unit_vector(std::size_t dim) {
    while (true) {
        auto v = gaussian_vector(dim);
        if (l2_norm(v) > 1e-6) return normalize(v);
    }
}

namespace {

/// Random unit vector whose |cos| to every anchor stays below `bound`.
EmbeddingVector separated_unit(FixtureRng& rng, std::size_t dim, std::span<const EmbeddingVector> anchors,
                               double bound) {
    for (int attempt = 0; attempt < 100000; ++attempt) {
        auto v = rng.unit_vector(dim);
        bool ok = true;
        for (const auto& a : anchors) {
            if (std::abs(cosine_similarity(v, a)) >= bound) {
                ok = false;
                break;
            }
        }
        if (ok) return v;
    }
    throw Error(ErrorCode::kInvalidArgument, "cannot place that many separated anchors in this dimension");
}

EmbeddingVector perturb(FixtureRng& rng, const EmbeddingVector& center, double noise) {
    auto v = rng.gaussian_vector(center.dim(), noise);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += center[i];
    return normalize(v);
}

EmbeddingVector blend(std::initializer_list<std::pair<double, const EmbeddingVector*>> parts,
                      std::span<const float> noise) {
    std::vector<float> v(noise.begin(), noise.end());
    for (const auto& [w, e] : parts) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += static_cast<float>(w * (*e)[i]);
    }
    return normalize(v);
}

}  // namespace

const EmbeddingVector& ClusterFixture::concept_embedding(std::size_t c) const {
    const EmbeddingVector* e = prompts.find(apply_template(kDefaultTemplate, concepts.at(c)));
    if (e == nullptr) throw Error(ErrorCode::kInvalidArgument, "concept prompt missing from fixture cache");
    return *e;
}

ClusterFixture make_cluster_fixture(const ClusterFixtureParams& params) {
    if (params.clusters == 0 || params.per == 0 || params.dim < 2) {
        throw Error(ErrorCode::kInvalidArgument, "fixture needs clusters >= 1, per >= 1, dim >= 2");
    }
    FixtureRng rng(params.seed);
    ClusterFixture fx;
    fx.params = params;
    fx.frames.dim = params.dim;

    std::vector<EmbeddingVector> anchors;
    for (std::size_t c = 0; c < params.clusters; ++c) {
        anchors.push_back(separated_unit(rng, params.dim, anchors, params.max_center_cosine));
    }
    const std::size_t cluster_anchors = anchors.size();
    for (std::size_t c = 0; c < cluster_anchors; ++c) {
        fx.concepts.push_back("concept_" + std::to_string(c));
        fx.labels.push_back(fx.concepts.back());
        fx.prompts.insert(apply_template(kDefaultTemplate, fx.concepts.back()), perturb(rng, anchors[c], params.noise));
    }
    for (std::size_t d = 0; d < params.distractor_labels; ++d) {
        anchors.push_back(separated_unit(rng, params.dim, anchors, params.max_center_cosine));
        fx.labels.push_back("distractor_" + std::to_string(d));
        fx.prompts.insert(apply_template(kDefaultTemplate, fx.labels.back()), anchors.back());
    }
    for (const auto& term : default_quality_terms()) {
        anchors.push_back(separated_unit(rng, params.dim, anchors, params.max_center_cosine));
        fx.prompts.insert(apply_template(kDefaultTemplate, term), anchors.back());
    }

    for (std::size_t c = 0; c < params.clusters; ++c) {
        RelevanceJudgment judgment;
        judgment.query = fx.concepts[c];
        for (std::size_t j = 0; j < params.per; ++j) {
            const FrameId id = c * params.per + j;
            fx.frames.push_row(perturb(rng, anchors[c], params.noise).values());
            fx.cluster_of.push_back(c);
            FrameRecord rec;
            rec.frame_id = id;
            rec.video_id = "video_" + std::to_string(c);
            rec.timestamp_s = static_cast<double>(j);
            rec.source_path = "video_" + std::to_string(c) + "/frame_" + std::to_string(j) + ".jpg";
            fx.records.push_back(std::move(rec));
            judgment.relevant_frame_ids.push_back(id);
        }
        fx.judgments.push_back(std::move(judgment));
    }
    return fx;
}

Dataset fixture_dataset(const ClusterFixture& fixture, std::string name) {
    EmbeddingArchive archive;
    archive.header.dim = fixture.frames.dim;
    archive.header.count = fixture.frames.count();
    archive.header.model = "synthetic-fixture";
    archive.payload = fixture.frames;
    return Dataset(std::move(name), archive.header, archive_embeddings(archive), fixture.records);
}

void write_cluster_fixture(const ClusterFixture& fixture, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "queries", ec);
    if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());
    write_archive(dir / "frames.zea", fixture.frames, true, "synthetic-fixture");
    write_frames_jsonl(dir / "frames.jsonl", fixture.records);
    fixture.prompts.save(dir / "prompts.zea", dir / "prompts.jsonl", "synthetic-fixture");
    {
        std::ofstream out(dir / "labels.txt", std::ios::trunc);
        for (const auto& l : fixture.labels) out << l << '\n';
        if (!out) throw Error(ErrorCode::kIoError, "cannot write labels.txt");
    }
    {
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& r : fixture.judgments) {
            j.push_back({{"query", r.query}, {"relevant_frame_ids", r.relevant_frame_ids}});
        }
        std::ofstream out(dir / "judgments.json", std::ios::trunc);
        out << j.dump(2) << '\n';
        if (!out) throw Error(ErrorCode::kIoError, "cannot write judgments.json");
    }
    for (std::size_t c = 0; c < fixture.concepts.size(); ++c) {
        write_vector_file(dir / "queries" / (fixture.concepts[c] + ".vec"), fixture.concept_embedding(c).values());
    }
}

QualityFixture make_quality_fixture(std::uint64_t seed, std::size_t dim) {
    constexpr std::size_t kGood = 12;
    constexpr std::size_t kBlurry = 8;
    constexpr std::size_t kDistractorLabels = 10;
    constexpr std::size_t kPerDistractor = 2;

    FixtureRng rng(seed);
    QualityFixture fx;
    std::vector<EmbeddingVector> anchors;
    const auto target = rng.unit_vector(dim);
    anchors.push_back(target);
    fx.prompts.insert(apply_template(kDefaultTemplate, fx.query), target);

    // "blurry" is orthogonal to the target; the other quality terms are just separated.
    std::vector<float> b = rng.gaussian_vector(dim);
    const double along = dot(b, target.values());
    for (std::size_t i = 0; i < dim; ++i) b[i] -= static_cast<float>(along * target[i]);
    const auto blurry = normalize(b);
    anchors.push_back(blurry);
    for (const auto& term : default_quality_terms()) {
        if (term == "blurry") {
            fx.prompts.insert(apply_template(kDefaultTemplate, term), blurry);
        } else {
            anchors.push_back(separated_unit(rng, dim, anchors, 0.5));
            fx.prompts.insert(apply_template(kDefaultTemplate, term), anchors.back());
        }
    }
    std::vector<EmbeddingVector> distractors;
    for (std::size_t d = 0; d < kDistractorLabels; ++d) {
        anchors.push_back(separated_unit(rng, dim, anchors, 0.5));
        distractors.push_back(anchors.back());
        fx.labels.push_back("distractor_" + std::to_string(d));
        fx.prompts.insert(apply_template(kDefaultTemplate, fx.labels.back()), anchors.back());
    }

    for (std::size_t i = 0; i < kGood; ++i) {
        fx.frames.push_back(perturb(rng, target, 0.2));
        fx.blurry.push_back(false);
    }
    for (std::size_t i = 0; i < kBlurry; ++i) {
        const auto noise = rng.gaussian_vector(dim, 0.08);
        fx.frames.push_back(blend({{0.6, &target}, {1.0, &blurry}}, noise));
        fx.blurry.push_back(true);
    }
    for (const auto& d : distractors) {
        for (std::size_t i = 0; i < kPerDistractor; ++i) {
            fx.frames.push_back(perturb(rng, d, 0.05));
            fx.blurry.push_back(false);
        }
    }
    return fx;
}

std::vector<float> read_vector_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    std::string text = buf.str();
    std::vector<float> values;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && text[first] == '[') {
        try {
            for (double v : nlohmann::json::parse(text).get<std::vector<double>>()) values.push_back(static_cast<float>(v));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::kInvalidArgument, path.string() + ": " + e.what());
        }
        return values;
    }
    for (char& c : text) {
        if (c == ',') c = ' ';
    }
    std::istringstream tokens(text);
    std::string tok;
    while (tokens >> tok) {
        float v = 0.0f;
        auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
            throw Error(ErrorCode::kInvalidArgument, path.string() + ": bad number '" + tok + "'");
        }
        values.push_back(v);
    }
    if (values.empty()) throw Error(ErrorCode::kEmptyInput, path.string() + " holds no numbers");
    return values;
}

void write_vector_file(const fs::path& path, std::span<const float> values) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
    for (std::size_t i = 0; i < values.size(); ++i) {
        char buf[32];
        auto res = std::to_chars(buf, buf + sizeof buf, values[i]);
        out << (i ? " " : "") << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

}  // namespace zelda
