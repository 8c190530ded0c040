#include "driftrank/shift.hpp"

#include "driftrank/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <unordered_set>

namespace driftrank {

AnalyzerConfig default_shift_analyzer() {
    AnalyzerConfig cfg;
    cfg.max_tokens = 1024;
    return cfg;
}

TokenDistribution make_distribution(std::vector<std::string> vocab, std::vector<double> weights,
                                    std::uint64_t analyzer_hash) {
    if (vocab.size() != weights.size()) {
        fail(ErrorKind::InvalidArgument, "vocabulary and weights differ in length");
    }
    if (vocab.empty()) {
        fail(ErrorKind::InvalidArgument, "empty vocabulary");
    }
    double total = 0.0;
    for (const double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            fail(ErrorKind::InvalidArgument, "distribution weights must be finite and non-negative");
        }
        total += w;
    }
    if (total <= 0.0) {
        fail(ErrorKind::InvalidArgument, "distribution weights sum to zero");
    }
    std::vector<std::size_t> order(vocab.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vocab[a] < vocab[b]; });
    TokenDistribution d;
    d.analyzer_hash = analyzer_hash;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (k > 0 && vocab[order[k]] == d.vocab.back()) {
            fail(ErrorKind::InvalidArgument, "duplicate token '" + vocab[order[k]] + "'");
        }
        d.vocab.push_back(std::move(vocab[order[k]]));
        d.probs.push_back(weights[order[k]] / total);
    }
    return d;
}

TokenDistribution idf_distribution(const Corpus& corpus, const AnalyzerConfig& cfg) {
    if (corpus.empty()) {
        fail(ErrorKind::InvalidArgument, "idf_distribution: empty corpus");
    }
    std::map<std::string, std::size_t> df;
    std::unordered_set<std::string> seen;
    for (const auto& doc : corpus) {
        seen.clear();
        for (auto& token : tokenize(doc.text, cfg)) {
            if (seen.insert(token).second) {
                ++df[token];
            }
        }
    }
    if (df.empty()) {
        fail(ErrorKind::InvalidArgument, "idf_distribution: corpus " + corpus.source_path() + " has no tokens");
    }
    const auto n = static_cast<double>(corpus.size());
    std::vector<std::string> vocab;
    std::vector<double> weights;
    vocab.reserve(df.size());
    weights.reserve(df.size());
    for (const auto& [token, count] : df) {
        vocab.push_back(token);
        weights.push_back(std::log(n / static_cast<double>(count)) + 1.0);
    }
    auto d = make_distribution(std::move(vocab), std::move(weights), cfg.hash());
    d.source = corpus.source_path();
    return d;
}

namespace {

// p * log2(p / m) with 0 log 0 = 0.
double kl_term(double p, double m) { return p > 0.0 ? p * std::log2(p / m) : 0.0; }

} // namespace

double jsd(const TokenDistribution& p, const TokenDistribution& q) {
    if (p.analyzer_hash != q.analyzer_hash) {
        fail(ErrorKind::InvalidArgument, "jsd: distributions were built with different analyzer settings");
    }
    if (p.vocab.size() != p.probs.size() || q.vocab.size() != q.probs.size()) {
        fail(ErrorKind::InvalidArgument, "jsd: vocabulary and probabilities differ in length");
    }
    // Merge over the sorted vocabularies. Each term is symmetric in (a, b)
    // so jsd(p, q) == jsd(q, p) bit for bit.
    double total = 0.0;
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < p.vocab.size() || j < q.vocab.size()) {
        double a = 0.0;
        double b = 0.0;
        if (j >= q.vocab.size() || (i < p.vocab.size() && p.vocab[i] < q.vocab[j])) {
            a = p.probs[i++];
        } else if (i >= p.vocab.size() || q.vocab[j] < p.vocab[i]) {
            b = q.probs[j++];
        } else {
            a = p.probs[i++];
            b = q.probs[j++];
        }
        const double m = 0.5 * (a + b);
        const double ta = kl_term(a, m);
        const double tb = kl_term(b, m);
        total += 0.5 * (std::min(ta, tb) + std::max(ta, tb));
    }
    return std::clamp(total, 0.0, 1.0);
}

ShiftReport shift_report(const std::vector<Corpus>& corpora, const std::vector<std::string>& labels,
                         const AnalyzerConfig& cfg) {
    if (corpora.size() < 2) {
        fail(ErrorKind::InvalidArgument, "shift report needs at least two corpora");
    }
    if (labels.size() != corpora.size()) {
        fail(ErrorKind::InvalidArgument, "one label per corpus required");
    }
    std::vector<TokenDistribution> dists;
    dists.reserve(corpora.size());
    for (const auto& c : corpora) {
        dists.push_back(idf_distribution(c, cfg));
    }
    const auto n = corpora.size();
    ShiftReport report;
    report.labels = labels;
    report.analyzer = cfg.canonical();
    report.jsd.assign(n, std::vector<double>(n, 0.0));
    report.similarity.assign(n, std::vector<double>(n, 100.0));
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const double d = jsd(dists[a], dists[b]);
            report.jsd[a][b] = report.jsd[b][a] = d;
            report.similarity[a][b] = report.similarity[b][a] = 100.0 * (1.0 - d);
        }
    }
    return report;
}

nlohmann::json ShiftReport::to_json() const {
    return {{"labels", labels}, {"analyzer", analyzer}, {"jsd", jsd}, {"similarity", similarity}};
}

std::string ShiftReport::to_table() const {
    std::size_t width = 18;
    for (const auto& l : labels) {
        width = std::max(width, l.size() + 2);
    }
    const auto pad = [&](const std::string& s) { return s + std::string(width - std::min(width, s.size()), ' '); };
    std::string out = pad("similarity");
    for (const auto& l : labels) {
        out += pad(l);
    }
    out += '\n';
    char buf[64];
    for (std::size_t a = 0; a < labels.size(); ++a) {
        out += pad(labels[a]);
        for (std::size_t b = 0; b < labels.size(); ++b) {
            std::snprintf(buf, sizeof buf, "%.2f (%.4f)", similarity[a][b], jsd[a][b]);
            out += pad(buf);
        }
        out += '\n';
    }
    return out;
}

} // namespace driftrank
