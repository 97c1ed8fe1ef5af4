#include "zelda/frame_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "zelda/error.hpp"

namespace zelda {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

namespace {

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32_le(const unsigned char* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
           (std::uint32_t{p[3]} << 24);
}

void floats_to_le(std::span<const float> src, std::string& out) {
    const std::size_t offset = out.size();
    out.resize(offset + src.size() * 4);
    char* dst = out.data() + offset;
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(dst, src.data(), src.size() * 4);
    } else {
        for (std::size_t i = 0; i < src.size(); ++i) {
            const auto bits = std::bit_cast<std::uint32_t>(src[i]);
            for (int b = 0; b < 4; ++b) dst[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
        }
    }
}

void le_to_floats(const unsigned char* src, std::size_t n, std::vector<float>& out) {
    out.resize(n);
    if constexpr (std::endian::native == std::endian::little) {
        std::memcpy(out.data(), src, n * 4);
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get_u32_le(src + i * 4));
    }
}

std::string header_json(const ArchiveHeader& h) {
    ordered_json j;
    j["version"] = h.version;
    j["dim"] = h.dim;
    j["count"] = h.count;
    j["metric"] = h.metric;
    j["normalized"] = h.normalized;
    j["model"] = h.model;
    return j.dump();
}

ArchiveHeader parse_header(std::string_view text) {
    ArchiveHeader h;
    try {
        const auto j = nlohmann::json::parse(text);
        h.version = j.at("version").get<int>();
        h.dim = j.at("dim").get<std::size_t>();
        h.count = j.at("count").get<std::size_t>();
        h.metric = j.value("metric", std::string("cosine"));
        h.normalized = j.at("normalized").get<bool>();
        h.model = j.value("model", std::string());
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kHeaderMismatch, std::string("malformed archive header: ") + e.what());
    }
    if (h.version != 1) throw Error(ErrorCode::kHeaderMismatch, "unsupported version " + std::to_string(h.version));
    if (h.metric != "cosine") throw Error(ErrorCode::kHeaderMismatch, "unsupported metric " + h.metric);
    if (h.dim == 0 && h.count != 0) throw Error(ErrorCode::kHeaderMismatch, "dim must be positive");
    return h;
}

FrameRecord parse_frame_line(const std::string& line, std::size_t line_no) {
    try {
        const auto j = nlohmann::json::parse(line);
        FrameRecord r;
        r.frame_id = j.at("frame_id").get<FrameId>();
        r.video_id = j.at("video_id").get<std::string>();
        r.timestamp_s = j.at("timestamp_s").get<double>();
        r.source_path = j.at("source_path").get<std::string>();
        if (auto it = j.find("thumb_path"); it != j.end() && !it->is_null()) r.thumb_path = it->get<std::string>();
        if (r.timestamp_s < 0.0 || !std::isfinite(r.timestamp_s)) {
            throw Error(ErrorCode::kMetadataMismatch, "line " + std::to_string(line_no) + ": negative timestamp");
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kMetadataMismatch, "line " + std::to_string(line_no) + ": " + e.what());
    }
}

}  // namespace

void VectorTable::push_row(std::span<const float> r) {
    if (values.empty() && dim == 0) dim = r.size();
    if (r.size() != dim) throw Error(ErrorCode::kDimensionMismatch, "row length differs from table dim");
    values.insert(values.end(), r.begin(), r.end());
}

void write_archive(const fs::path& path, const VectorTable& vectors, bool normalized, const std::string& model) {
    if (vectors.dim == 0 && !vectors.values.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "vectors with zero dim");
    }
    if (vectors.dim != 0 && vectors.values.size() % vectors.dim != 0) {
        throw Error(ErrorCode::kDimensionMismatch, "vectors are not rectangular");
    }
    for (std::size_t i = 0; i < vectors.values.size(); ++i) {
        if (!std::isfinite(vectors.values[i])) {
            throw Error(ErrorCode::kNonFinite, "row " + std::to_string(i / vectors.dim) + " has a non-finite value");
        }
    }
    ArchiveHeader h;
    h.dim = vectors.dim;
    h.count = vectors.count();
    h.normalized = normalized;
    h.model = model;

    const std::string header = header_json(h);
    std::string blob;
    blob.reserve(8 + header.size() + vectors.values.size() * 4);
    blob.append(kArchiveMagic);
    put_u32_le(blob, static_cast<std::uint32_t>(header.size()));
    blob.append(header);
    floats_to_le(vectors.values, blob);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

EmbeddingArchive read_archive(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (blob.size() < 8) throw Error(ErrorCode::kBadMagic, path.string() + " is too short to be an archive");
    if (std::string_view(blob.data(), 4) != kArchiveMagic) {
        throw Error(ErrorCode::kBadMagic, "expected ZEA1 magic in " + path.string());
    }
    const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
    const std::uint32_t header_len = get_u32_le(bytes + 4);
    if (8 + std::size_t{header_len} > blob.size()) {
        throw Error(ErrorCode::kHeaderMismatch, "header length exceeds file size");
    }
    EmbeddingArchive archive;
    archive.header = parse_header(std::string_view(blob.data() + 8, header_len));
    const std::size_t payload_bytes = blob.size() - 8 - header_len;
    const std::size_t expected = archive.header.count * archive.header.dim * 4;
    if (payload_bytes != expected) {
        throw Error(ErrorCode::kHeaderMismatch, "payload is " + std::to_string(payload_bytes) + " bytes, header implies " +
                                                    std::to_string(expected));
    }
    archive.payload.dim = archive.header.dim;
    le_to_floats(bytes + 8 + header_len, archive.header.count * archive.header.dim, archive.payload.values);
    return archive;
}

std::vector<EmbeddingVector> archive_embeddings(const EmbeddingArchive& archive) {
    std::vector<EmbeddingVector> rows;
    rows.reserve(archive.header.count);
    for (std::size_t i = 0; i < archive.header.count; ++i) {
        const auto row = archive.payload.row(i);
        if (!archive.header.normalized) {
            try {
                rows.push_back(normalize(row));
            } catch (const Error& e) {
                throw Error(e.code(), "row " + std::to_string(i) + ": " + e.what());
            }
            continue;
        }
        const double norm = l2_norm(row);
        if (!std::isfinite(norm)) throw Error(ErrorCode::kNonFinite, "row " + std::to_string(i) + " is not finite");
        if (std::abs(norm - 1.0) <= kUnitNormTolerance) {
            rows.push_back(EmbeddingVector::from_unit({row.begin(), row.end()}));
        } else if (std::abs(norm - 1.0) <= kArchiveNormTolerance) {
            rows.push_back(normalize(row));
        } else {
            throw Error(ErrorCode::kHeaderMismatch, "header says normalized but row " + std::to_string(i) +
                                                        " has norm " + std::to_string(norm));
        }
    }
    return rows;
}

std::vector<FrameRecord> read_frames_jsonl(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
    std::vector<FrameRecord> frames;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        frames.push_back(parse_frame_line(line, line_no));
    }
    return frames;
}

void write_frames_jsonl(const fs::path& path, std::span<const FrameRecord> frames) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIoError, "cannot open " + path.string() + " for writing");
    for (const auto& f : frames) {
        ordered_json j;
        j["frame_id"] = f.frame_id;
        j["video_id"] = f.video_id;
        j["timestamp_s"] = f.timestamp_s;
        j["source_path"] = f.source_path;
        if (f.thumb_path) j["thumb_path"] = *f.thumb_path;
        out << j.dump() << '\n';
    }
    if (!out) throw Error(ErrorCode::kIoError, "write failed for " + path.string());
}

Dataset::Dataset(std::string name, ArchiveHeader header, std::vector<EmbeddingVector> embeddings,
                 std::vector<FrameRecord> frames)
    : name_(std::move(name)), header_(std::move(header)) {
    if (frames.size() != embeddings.size()) {
        throw Error(ErrorCode::kMetadataMismatch, "metadata has " + std::to_string(frames.size()) +
                                                      " lines but archive has " + std::to_string(embeddings.size()) +
                                                      " rows");
    }
    for (const auto& e : embeddings) {
        if (e.dim() != header_.dim) throw Error(ErrorCode::kDimensionMismatch, "embedding dim differs from header");
    }
    std::vector<std::size_t> order(frames.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return frames[a].frame_id < frames[b].frame_id; });
    embeddings_.reserve(order.size());
    frames_.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (i > 0 && frames[order[i]].frame_id == frames[order[i - 1]].frame_id) {
            throw Error(ErrorCode::kMetadataMismatch, "duplicate frame_id " + std::to_string(frames[order[i]].frame_id));
        }
        embeddings_.push_back(std::move(embeddings[order[i]]));
        frames_.push_back(std::move(frames[order[i]]));
    }
    header_.count = frames_.size();
}

Dataset Dataset::from_embeddings(std::string name, std::vector<EmbeddingVector> embeddings, std::string model) {
    ArchiveHeader h;
    h.dim = embeddings.empty() ? 0 : embeddings.front().dim();
    h.count = embeddings.size();
    h.model = std::move(model);
    std::vector<FrameRecord> frames(embeddings.size());
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_id = i;
    return Dataset(std::move(name), std::move(h), std::move(embeddings), std::move(frames));
}

std::optional<std::size_t> Dataset::row_of(FrameId id) const noexcept {
    auto it = std::lower_bound(frames_.begin(), frames_.end(), id,
                               [](const FrameRecord& f, FrameId v) { return f.frame_id < v; });
    if (it == frames_.end() || it->frame_id != id) return std::nullopt;
    return static_cast<std::size_t>(it - frames_.begin());
}

const EmbeddingVector& Dataset::get_embedding(FrameId id) const {
    const auto row = row_of(id);
    if (!row) throw Error(ErrorCode::kUnknownFrame, "frame " + std::to_string(id) + " not in dataset " + name_);
    return embeddings_[*row];
}

Dataset dataset_from_archive(std::string name, const EmbeddingArchive& archive) {
    std::vector<FrameRecord> frames(archive.header.count);
    for (std::size_t i = 0; i < frames.size(); ++i) frames[i].frame_id = i;
    return Dataset(std::move(name), archive.header, archive_embeddings(archive), std::move(frames));
}

Dataset load_dataset(std::string name, const fs::path& archive_path, const fs::path& frames_jsonl_path) {
    const auto archive = read_archive(archive_path);
    auto frames = read_frames_jsonl(frames_jsonl_path);
    if (frames.size() != archive.header.count) {
        throw Error(ErrorCode::kMetadataMismatch, frames_jsonl_path.string() + " has " + std::to_string(frames.size()) +
                                                      " lines but archive has " +
                                                      std::to_string(archive.header.count) + " rows");
    }
    return Dataset(std::move(name), archive.header, archive_embeddings(archive), std::move(frames));
}

}  // namespace zelda
