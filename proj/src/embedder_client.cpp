#include <httplib.h>

#include "zelda/error.hpp"
#include "zelda/service.hpp"

namespace zelda {

EmbedderClient::EmbedderClient(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

std::vector<EmbeddingVector> EmbedderClient::embed_text(const std::vector<std::string>& texts) const {
    // httplib wants scheme://host:port separately from the path prefix.
    std::string origin = base_url_;
    std::string prefix;
    const auto scheme = base_url_.find("://");
    const auto slash = base_url_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
        origin = base_url_.substr(0, slash);
        prefix = base_url_.substr(slash);
    }

    httplib::Client client(origin);
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    client.set_write_timeout(timeout_);
    const nlohmann::json request = {{"texts", texts}};
    auto res = client.Post(prefix + "/embed_text", request.dump(), "application/json");
    if (!res) {
        throw Error(ErrorCode::kEmbedderUnavailable, "embedder at " + base_url_ + " unreachable: " +
                                                         httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::kEmbedderUnavailable, "embedder returned HTTP " + std::to_string(res->status));
    }
    std::vector<EmbeddingVector> out;
    try {
        const auto body = nlohmann::json::parse(res->body);
        const auto dim = body.at("dim").get<std::size_t>();
        const auto& rows = body.at("embeddings");
        if (!rows.is_array() || rows.size() != texts.size()) {
            throw Error(ErrorCode::kEmbedderUnavailable, "embedder returned the wrong number of embeddings");
        }
        for (const auto& row : rows) {
            auto values = row.get<std::vector<float>>();
            if (values.size() != dim) {
                throw Error(ErrorCode::kEmbedderUnavailable, "embedding length differs from reported dim");
            }
            out.push_back(normalize(values));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::kEmbedderUnavailable, std::string("malformed embedder reply: ") + e.what());
    }
    return out;
}

BatchEmbedFn EmbedderClient::as_fn() const {
    return [client = *this](const std::vector<std::string>& texts) { return client.embed_text(texts); };
}

}  // namespace zelda
