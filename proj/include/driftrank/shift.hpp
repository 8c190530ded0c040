#pragma once

#include "driftrank/textcorpus.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace driftrank {

/// Normalized IDF weights over a corpus vocabulary. vocab is sorted.
struct TokenDistribution {
    std::vector<std::string> vocab;
    std::vector<double> probs;
    std::string source;
    std::uint64_t analyzer_hash = 0;
};

/// Analyzer used for shift analysis when none is given: defaults with
/// documents truncated to 1024 tokens.
AnalyzerConfig default_shift_analyzer();

/// idf(t) = ln(N / df(t)) + 1 over the truncated documents, normalized.
TokenDistribution idf_distribution(const Corpus& corpus, const AnalyzerConfig& cfg = default_shift_analyzer());

/// Distribution straight from weights; they are normalized. Mostly for tests.
TokenDistribution make_distribution(std::vector<std::string> vocab, std::vector<double> weights,
                                    std::uint64_t analyzer_hash = 0);

/// Jensen-Shannon divergence, base 2, over the union vocabulary. In [0,1].
double jsd(const TokenDistribution& p, const TokenDistribution& q);

struct ShiftReport {
    std::vector<std::string> labels;
    std::vector<std::vector<double>> jsd;
    std::vector<std::vector<double>> similarity;
    std::string analyzer;

    nlohmann::json to_json() const;
    std::string to_table() const;
};

ShiftReport shift_report(const std::vector<Corpus>& corpora, const std::vector<std::string>& labels,
                         const AnalyzerConfig& cfg = default_shift_analyzer());

} // namespace driftrank
