#pragma once

#include "driftrank/ranked_list.hpp"
#include "driftrank/transport.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace driftrank {

using EmbeddingVector = std::vector<double>;

/// id -> vector, all of one dimension. Values are finite.
class EmbeddingStore {
public:
    EmbeddingStore() = default;
    EmbeddingStore(std::size_t dim, std::string provider_tag);

    /// Rejects a wrong dimension or non-finite values.
    void put(const std::string& id, EmbeddingVector values);

    const EmbeddingVector* find(const std::string& id) const;
    bool contains(const std::string& id) const { return find(id) != nullptr; }
    std::size_t size() const noexcept { return vectors_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::string& provider_tag() const noexcept { return provider_tag_; }

    /// Adds every vector of `other`; dimensions must agree.
    void merge(const EmbeddingStore& other);

private:
    std::size_t dim_ = 0;
    std::string provider_tag_;
    std::unordered_map<std::string, EmbeddingVector> vectors_;
};

struct FetchOptions {
    std::size_t truncate_tokens = 512;
    std::size_t batch_size = 64;
};

/// One embed request per batch. The store's dim comes from the first reply;
/// later batches must match it.
EmbeddingStore fetch_embeddings(Endpoint& provider,
                                std::span<const std::pair<std::string, std::string>> texts,
                                const FetchOptions& options = {});

double dot(std::span<const double> a, std::span<const double> b);

/// Rescores by dot product with the query vector, plus fusion_weight times
/// the incoming score, and keeps the top k.
RankedList dot_rescore(const EmbeddingVector& query_vec, const RankedList& candidates,
                       const EmbeddingStore& store, std::size_t k = 100, double fusion_weight = 0.0);

} // namespace driftrank
