#include "driftrank/dense.hpp"

#include "driftrank/error.hpp"

#include <cmath>

namespace driftrank {

using nlohmann::json;

EmbeddingStore::EmbeddingStore(std::size_t dim, std::string provider_tag)
    : dim_(dim), provider_tag_(std::move(provider_tag)) {
    if (dim_ == 0) {
        fail(ErrorKind::InvalidArgument, "embedding dimension must be positive");
    }
}

void EmbeddingStore::put(const std::string& id, EmbeddingVector values) {
    if (values.size() != dim_) {
        fail(ErrorKind::InvalidArgument, "embedding for '" + id + "' has dim " +
                                             std::to_string(values.size()) + ", store has " +
                                             std::to_string(dim_));
    }
    for (const double v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::InvalidArgument, "embedding for '" + id + "' has a non-finite value");
        }
    }
    vectors_[id] = std::move(values);
}

const EmbeddingVector* EmbeddingStore::find(const std::string& id) const {
    const auto it = vectors_.find(id);
    return it == vectors_.end() ? nullptr : &it->second;
}

void EmbeddingStore::merge(const EmbeddingStore& other) {
    if (other.size() == 0) {
        return;
    }
    if (dim_ == 0) {
        dim_ = other.dim_;
        provider_tag_ = other.provider_tag_;
    }
    for (const auto& [id, v] : other.vectors_) {
        put(id, v);
    }
}

EmbeddingStore fetch_embeddings(Endpoint& provider,
                                std::span<const std::pair<std::string, std::string>> texts,
                                const FetchOptions& options) {
    if (texts.empty()) {
        fail(ErrorKind::InvalidArgument, "fetch_embeddings: no texts given");
    }
    if (options.batch_size == 0) {
        fail(ErrorKind::InvalidArgument, "fetch_embeddings: batch_size must be positive");
    }
    EmbeddingStore store;
    for (std::size_t start = 0; start < texts.size(); start += options.batch_size) {
        const auto batch = texts.subspan(start, std::min(options.batch_size, texts.size() - start));
        const auto batch_name = "ids " + batch.front().first + ".." + batch.back().first;
        json items = json::array();
        for (const auto& [id, text] : batch) {
            items.push_back({{"id", id}, {"text", text}});
        }
        const json request = {
            {"op", "embed"}, {"truncate_tokens", options.truncate_tokens}, {"items", std::move(items)}};
        json reply;
        try {
            reply = provider.call(request);
        } catch (const Error& e) {
            fail(ErrorKind::Provider, "embedding batch " + batch_name + ": " + e.what());
        }
        try {
            const auto dim = reply.at("dim").get<std::size_t>();
            if (store.dim() == 0) {
                store = EmbeddingStore(dim, provider.describe());
            } else if (dim != store.dim()) {
                fail(ErrorKind::Provider, "embedding batch " + batch_name + ": dim " + std::to_string(dim) +
                                              " differs from earlier batches (" +
                                              std::to_string(store.dim()) + ")");
            }
            std::size_t seen = 0;
            for (const auto& v : reply.at("vectors")) {
                store.put(v.at("id").get<std::string>(), v.at("values").get<std::vector<double>>());
                ++seen;
            }
            if (seen != batch.size()) {
                fail(ErrorKind::Provider, "embedding batch " + batch_name + ": expected " +
                                              std::to_string(batch.size()) + " vectors, got " +
                                              std::to_string(seen));
            }
        } catch (const json::exception& e) {
            fail(ErrorKind::Provider, "embedding batch " + batch_name + ": malformed reply: " + e.what());
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Provider) {
                throw;
            }
            fail(ErrorKind::Provider, "embedding batch " + batch_name + ": " + e.what());
        }
    }
    for (const auto& [id, _] : texts) {
        if (!store.contains(id)) {
            fail(ErrorKind::Provider, "provider returned no vector for '" + id + "'");
        }
    }
    return store;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        fail(ErrorKind::InvalidArgument, "dot: dimension mismatch");
    }
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        s += a[i] * b[i];
    }
    return s;
}

RankedList dot_rescore(const EmbeddingVector& query_vec, const RankedList& candidates,
                       const EmbeddingStore& store, std::size_t k, double fusion_weight) {
    if (k == 0) {
        fail(ErrorKind::InvalidArgument, "dot_rescore: k must be at least 1");
    }
    if (query_vec.size() != store.dim()) {
        fail(ErrorKind::InvalidArgument, "query vector dim " + std::to_string(query_vec.size()) +
                                             " does not match store dim " + std::to_string(store.dim()));
    }
    RankedList out{candidates.query_id, {}};
    out.entries.reserve(candidates.size());
    for (const auto& e : candidates.entries) {
        const auto* v = store.find(e.doc_id);
        if (v == nullptr) {
            fail(ErrorKind::InvalidArgument, "no embedding for document '" + e.doc_id + "'");
        }
        double score = dot(query_vec, *v);
        if (fusion_weight != 0.0) {
            score += fusion_weight * e.score;
        }
        out.entries.push_back({e.doc_id, score, 0});
    }
    sort_and_truncate(out, k);
    return out;
}

} // namespace driftrank
