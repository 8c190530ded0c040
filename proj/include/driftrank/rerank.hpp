#pragma once

#include "driftrank/ranked_list.hpp"
#include "driftrank/textcorpus.hpp"
#include "driftrank/transport.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace driftrank {

struct Passage {
    std::string doc_id;
    std::string text;
};

/// 1-based candidate indices; after repair a permutation of 1..n.
struct Permutation {
    std::vector<std::size_t> order;

    bool operator==(const Permutation&) const = default;
};

/// P("true") for one (query, passage) pair. Throws on failure.
class PointwiseScorer {
public:
    virtual ~PointwiseScorer() = default;
    virtual double score(const Query& query, const Passage& passage) = 0;
};

/// Orders a window of passages. Throws on failure.
class ListwiseScorer {
public:
    virtual ~ListwiseScorer() = default;
    virtual Permutation rank(const Query& query, std::span<const Passage> window) = 0;
};

/// {"op":"score",...} -> {"prob":p}. Probabilities outside [0,1] are errors.
class WirePointwiseScorer final : public PointwiseScorer {
public:
    explicit WirePointwiseScorer(Endpoint& endpoint) : endpoint_(endpoint) {}
    double score(const Query& query, const Passage& passage) override;

private:
    Endpoint& endpoint_;
};

/// {"op":"rank",...} -> {"permutation":[...]} or {"raw":"[2] > [1]"}.
/// Both reply forms go through the same repair.
class WireListwiseScorer final : public ListwiseScorer {
public:
    explicit WireListwiseScorer(Endpoint& endpoint) : endpoint_(endpoint) {}
    Permutation rank(const Query& query, std::span<const Passage> window) override;

private:
    Endpoint& endpoint_;
};

/// "Query: {q} Document: {d}"
std::string pointwise_input(std::string_view query, std::string_view doc);

std::string build_listwise_prompt(const Query& query, std::span<const Passage> window);

/// Bracketed integers in order of appearance, then repaired: out-of-range
/// entries dropped, first occurrence of duplicates kept, missing indices
/// appended ascending. Throws Error(Parse) if nothing bracketed is found.
Permutation parse_permutation(std::string_view raw, std::size_t n);

/// Same repair for an already extracted list. Throws if `values` is empty.
Permutation repair_permutation(std::span<const long long> values, std::size_t n);

struct SlidingWindowConfig {
    std::size_t window = 20;
    std::size_t stride = 10;
    std::size_t passes = 1;

    void validate() const;
};

struct TournamentConfig {
    std::size_t match_size = 5;
    std::size_t promote = 2;
    std::size_t top_k = 10;
    /// Off rebuilds the whole bracket for every extracted rank.
    bool use_cache = true;

    void validate() const;
};

/// Text for a candidate id.
using PassageText = std::function<std::string(const std::string& doc_id)>;

struct RerankOutcome {
    /// Reranked candidates; scores are positional (n - i).
    RankedList list;
    std::size_t scorer_calls = 0;
    std::size_t failures = 0;
    /// Pointwise probabilities of the scored docs.
    std::unordered_map<std::string, double> model_scores;
};

RerankOutcome pointwise_rerank(PointwiseScorer& scorer, const Query& query, const RankedList& candidates,
                               const PassageText& text, std::size_t k = 30);

RerankOutcome sliding_window_rerank(ListwiseScorer& scorer, const Query& query,
                                    const RankedList& candidates, const PassageText& text,
                                    const SlidingWindowConfig& cfg = {});

RerankOutcome tournament_rerank(ListwiseScorer& scorer, const Query& query, const RankedList& candidates,
                                const PassageText& text, const TournamentConfig& cfg = {});

struct BiasProbeReport {
    std::vector<std::string> doc_ids;
    /// Population variance of each doc's output rank across trials.
    std::vector<double> rank_variance;
    double mean_variance = 0.0;
    std::size_t trials = 0;
};

/// Shows the same window in `trials` seeded random orders.
BiasProbeReport positional_bias_probe(ListwiseScorer& scorer, const Query& query,
                                      std::span<const Passage> window, std::size_t trials,
                                      std::uint64_t seed = 0);

} // namespace driftrank
