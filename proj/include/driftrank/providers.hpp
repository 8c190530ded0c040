#pragma once

#include "driftrank/bm25.hpp"
#include "driftrank/treceval.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace driftrank {

/// Deterministic stand-ins for the neural models, speaking the same wire
/// protocol as a real backend.
///
/// Embedding modes:
///   hash  pseudorandom vector seeded by (seed, text)
///   bow   L2-normalized feature-hashed bag of analyzed tokens
/// Scorer modes:
///   oracle    qrels grade (needs "qid" and doc ids in requests)
///   constant  fixed probability, identity permutation order
///   bm25      BM25 of the passage text against a corpus's statistics
///   noise     qrels grade plus seeded Gaussian noise per (qid, doc)
///   biased    qrels grade plus a bonus for early input positions
///   identity  always returns the input order
struct MockConfig {
    std::string embed = "bow";
    std::size_t dim = 256;
    std::string scorer = "constant";
    std::string qrels;
    std::string corpus;
    double value = 0.5;
    double sigma = 0.5;
    double bias = 1.0;
    std::uint64_t seed = 0;
    /// Every Nth scoring request fails with an error reply (0 = never).
    std::size_t fail_every = 0;
    /// Listwise replies as raw "[2] > [1]" strings instead of index arrays.
    bool raw = false;

    /// "key=value,key=value" with the field names above.
    static MockConfig parse(std::string_view options);
};

class MockProvider {
public:
    explicit MockProvider(MockConfig config);

    /// One request, one reply. Problems come back as {"error": ...}.
    nlohmann::json handle(const nlohmann::json& request) const;

    const MockConfig& config() const noexcept { return config_; }

    std::vector<double> embed(std::string_view text, std::size_t truncate_tokens) const;

private:
    nlohmann::json handle_embed(const nlohmann::json& request) const;
    nlohmann::json handle_score(const nlohmann::json& request) const;
    nlohmann::json handle_rank(const nlohmann::json& request) const;

    double relevance(const std::string& qid, const std::string& query, const std::string& doc_id,
                     const std::string& text) const;
    double bm25_text_score(const std::string& query, const std::string& text) const;
    int max_grade(const std::string& qid) const;

    MockConfig config_;
    std::optional<QrelSet> qrels_;
    std::shared_ptr<const InvertedIndex> index_;
    mutable std::atomic<std::size_t> calls_{0};
};

/// splitmix64 step; shared by the mocks and by the test fixtures.
std::uint64_t splitmix64(std::uint64_t& state);
std::uint64_t fnv1a(std::string_view text, std::uint64_t seed = 0);

} // namespace driftrank
