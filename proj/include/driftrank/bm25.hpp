#pragma once

#include "driftrank/ranked_list.hpp"
#include "driftrank/textcorpus.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace driftrank {

class QrelSet;

/// Lucene defaults.
struct BM25Params {
    double k1 = 0.9;
    double b = 0.4;
};

struct Posting {
    std::uint32_t doc = 0;
    std::uint32_t tf = 0;

    bool operator==(const Posting&) const = default;
};

class InvertedIndex {
public:
    static InvertedIndex build(const Corpus& corpus, const AnalyzerConfig& cfg,
                               BM25Params params = {});

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    double avg_doc_length() const noexcept { return avgdl_; }
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
    const std::string& external_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
    std::optional<std::uint32_t> internal_id(std::string_view external) const;

    /// Empty span when the term is not indexed.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t df(std::string_view term) const { return postings(term).size(); }
    std::uint32_t tf(std::string_view term, std::uint32_t doc) const;
    std::size_t vocabulary_size() const noexcept { return terms_.size(); }
    std::vector<std::string> vocabulary() const;

    const AnalyzerConfig& analyzer() const noexcept { return analyzer_; }
    const BM25Params& params() const noexcept { return params_; }
    void set_params(BM25Params params) { params_ = params; }

    double idf(std::string_view term) const;

    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path);

private:
    void finalize();

    AnalyzerConfig analyzer_;
    BM25Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::uint32_t> id_lookup_;
    std::unordered_map<std::string, std::uint32_t> terms_;
    std::vector<std::vector<Posting>> postings_;
    double avgdl_ = 0.0;
};

/// ln(1 + (N - df + 0.5) / (df + 0.5)).
double bm25_idf(std::size_t doc_count, std::size_t df);

/// Contribution of one query-term occurrence.
double bm25_term_weight(double idf, double tf, double doc_len, double avgdl, const BM25Params& p);

/// Sum over query terms (each occurrence counted); absent terms add 0.
double bm25_score(const InvertedIndex& index, const BM25Params& params,
                  std::span<const std::string> query_terms, std::uint32_t doc);

RankedList search(const InvertedIndex& index, const BM25Params& params, const Query& query,
                  std::size_t k);

/// |relevant in top-k| / |relevant|. Throws when the query has no judgments.
double recall_at_k(const RankedList& ranked, const QrelSet& qrels, std::size_t k);

} // namespace driftrank
