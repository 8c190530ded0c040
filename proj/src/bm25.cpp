#include "driftrank/bm25.hpp"

#include "driftrank/error.hpp"
#include "driftrank/treceval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace driftrank {

using nlohmann::json;

namespace {

constexpr int kSnapshotVersion = 1;
constexpr const char* kSnapshotFormat = "driftrank-index";

json analyzer_to_json(const AnalyzerConfig& cfg) {
    json j = {{"lowercase", cfg.lowercase},
              {"ascii_fold", cfg.ascii_fold},
              {"stem", cfg.stem},
              {"stopwords", cfg.stopwords}};
    j["max_tokens"] = cfg.max_tokens ? json(*cfg.max_tokens) : json(nullptr);
    return j;
}

AnalyzerConfig analyzer_from_json(const json& j) {
    AnalyzerConfig cfg;
    cfg.lowercase = j.value("lowercase", cfg.lowercase);
    cfg.ascii_fold = j.value("ascii_fold", cfg.ascii_fold);
    cfg.stem = j.value("stem", cfg.stem);
    cfg.stopwords = j.value("stopwords", cfg.stopwords);
    if (j.contains("max_tokens") && !j["max_tokens"].is_null()) {
        cfg.max_tokens = j["max_tokens"].get<std::size_t>();
    }
    return cfg;
}

} // namespace

double bm25_idf(std::size_t doc_count, std::size_t df) {
    const auto n = static_cast<double>(doc_count);
    const auto d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_term_weight(double idf, double tf, double doc_len, double avgdl, const BM25Params& p) {
    return idf * (tf * (p.k1 + 1.0)) / (tf + p.k1 * (1.0 - p.b + p.b * doc_len / avgdl));
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, const AnalyzerConfig& cfg, BM25Params params) {
    if (corpus.empty()) {
        fail(ErrorKind::InvalidArgument, "cannot index an empty corpus");
    }
    InvertedIndex index;
    index.analyzer_ = cfg;
    index.params_ = params;
    index.doc_ids_.reserve(corpus.size());
    index.doc_lengths_.reserve(corpus.size());
    std::unordered_map<std::string, std::uint32_t> counts;
    for (const auto& doc : corpus) {
        const auto doc_no = static_cast<std::uint32_t>(index.doc_ids_.size());
        index.doc_ids_.push_back(doc.id);
        const auto tokens = tokenize(doc.text, cfg);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        counts.clear();
        for (const auto& t : tokens) {
            ++counts[t];
        }
        for (const auto& [term, tf] : counts) {
            auto [it, inserted] = index.terms_.emplace(term, static_cast<std::uint32_t>(index.postings_.size()));
            if (inserted) {
                index.postings_.emplace_back();
            }
            // Documents are visited in internal-id order, so lists stay sorted.
            index.postings_[it->second].push_back({doc_no, tf});
        }
    }
    index.finalize();
    return index;
}

void InvertedIndex::finalize() {
    id_lookup_.clear();
    id_lookup_.reserve(doc_ids_.size());
    for (std::uint32_t i = 0; i < doc_ids_.size(); ++i) {
        if (!id_lookup_.emplace(doc_ids_[i], i).second) {
            fail(ErrorKind::Parse, "duplicate document id '" + doc_ids_[i] + "' in index");
        }
    }
    double total = 0.0;
    for (const auto len : doc_lengths_) {
        total += len;
    }
    avgdl_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
}

std::optional<std::uint32_t> InvertedIndex::internal_id(std::string_view external) const {
    const auto it = id_lookup_.find(std::string(external));
    if (it == id_lookup_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const {
    const auto it = terms_.find(std::string(term));
    if (it == terms_.end()) {
        return {};
    }
    return postings_[it->second];
}

std::uint32_t InvertedIndex::tf(std::string_view term, std::uint32_t doc) const {
    const auto list = postings(term);
    const auto it = std::lower_bound(list.begin(), list.end(), doc,
                                     [](const Posting& p, std::uint32_t d) { return p.doc < d; });
    return it != list.end() && it->doc == doc ? it->tf : 0;
}

std::vector<std::string> InvertedIndex::vocabulary() const {
    std::vector<std::string> vocab;
    vocab.reserve(terms_.size());
    for (const auto& [term, _] : terms_) {
        vocab.push_back(term);
    }
    std::sort(vocab.begin(), vocab.end());
    return vocab;
}

double InvertedIndex::idf(std::string_view term) const { return bm25_idf(doc_count(), df(term)); }

void InvertedIndex::save(const std::filesystem::path& path) const {
    json docs = json::array();
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        docs.push_back({{"id", doc_ids_[i]}, {"length", doc_lengths_[i]}});
    }
    json postings = json::array();
    for (const auto& term : vocabulary()) {
        json list = json::array();
        for (const auto& p : postings_[terms_.at(term)]) {
            list.push_back({p.doc, p.tf});
        }
        postings.push_back({term, std::move(list)});
    }
    const json snapshot = {
        {"format", kSnapshotFormat},
        {"version", kSnapshotVersion},
        {"params", {{"k1", params_.k1}, {"b", params_.b}}},
        {"analyzer", analyzer_to_json(analyzer_)},
        {"documents", std::move(docs)},
        {"postings", std::move(postings)},
    };
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, "cannot write index snapshot " + path.string());
    }
    out << snapshot.dump() << '\n';
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open index snapshot " + path.string());
    }
    json snapshot;
    try {
        snapshot = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Parse, "index snapshot " + path.string() + ": " + e.what());
    }
    if (snapshot.value("format", "") != kSnapshotFormat) {
        fail(ErrorKind::Parse, path.string() + " is not an index snapshot");
    }
    if (snapshot.value("version", 0) != kSnapshotVersion) {
        fail(ErrorKind::Parse, "unsupported index snapshot version in " + path.string());
    }
    InvertedIndex index;
    try {
        index.params_.k1 = snapshot.at("params").at("k1").get<double>();
        index.params_.b = snapshot.at("params").at("b").get<double>();
        index.analyzer_ = analyzer_from_json(snapshot.at("analyzer"));
        for (const auto& d : snapshot.at("documents")) {
            index.doc_ids_.push_back(d.at("id").get<std::string>());
            index.doc_lengths_.push_back(d.at("length").get<std::uint32_t>());
        }
        for (const auto& entry : snapshot.at("postings")) {
            const auto term = entry.at(0).get<std::string>();
            std::vector<Posting> list;
            for (const auto& p : entry.at(1)) {
                const auto doc = p.at(0).get<std::uint32_t>();
                if (doc >= index.doc_ids_.size() || (!list.empty() && list.back().doc >= doc)) {
                    fail(ErrorKind::Parse, "corrupt posting list for '" + term + "'");
                }
                list.push_back({doc, p.at(1).get<std::uint32_t>()});
            }
            index.terms_.emplace(term, static_cast<std::uint32_t>(index.postings_.size()));
            index.postings_.push_back(std::move(list));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, "index snapshot " + path.string() + ": " + e.what());
    }
    index.finalize();
    return index;
}

double bm25_score(const InvertedIndex& index, const BM25Params& params,
                  std::span<const std::string> query_terms, std::uint32_t doc) {
    const double dl = index.doc_length(doc);
    double score = 0.0;
    for (const auto& term : query_terms) {
        const auto tf = index.tf(term, doc);
        if (tf == 0) {
            continue;
        }
        score += bm25_term_weight(index.idf(term), tf, dl, index.avg_doc_length(), params);
    }
    return score;
}

RankedList search(const InvertedIndex& index, const BM25Params& params, const Query& query,
                  std::size_t k) {
    if (k == 0) {
        fail(ErrorKind::InvalidArgument, "search depth k must be at least 1");
    }
    RankedList result{query.id, {}};
    const auto terms = tokenize(query.text, index.analyzer());
    std::vector<double> acc(index.doc_count(), 0.0);
    std::vector<std::uint32_t> touched;
    // Term-at-a-time, in query order, so sums match bm25_score exactly.
    for (const auto& term : terms) {
        const auto list = index.postings(term);
        if (list.empty()) {
            continue;
        }
        const double idf = bm25_idf(index.doc_count(), list.size());
        for (const auto& p : list) {
            if (acc[p.doc] == 0.0) {
                touched.push_back(p.doc);
            }
            acc[p.doc] += bm25_term_weight(idf, p.tf, index.doc_length(p.doc),
                                           index.avg_doc_length(), params);
        }
    }
    result.entries.reserve(touched.size());
    for (const auto doc : touched) {
        result.entries.push_back({index.external_id(doc), acc[doc], 0});
    }
    sort_and_truncate(result, k);
    return result;
}

double recall_at_k(const RankedList& ranked, const QrelSet& qrels, std::size_t k) {
    const auto* judgments = qrels.judgments(ranked.query_id);
    if (judgments == nullptr) {
        fail(ErrorKind::InvalidArgument, "query " + ranked.query_id + " has no relevance judgments");
    }
    const auto relevant = qrels.relevant_count(ranked.query_id);
    if (relevant == 0) {
        return 0.0;
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < std::min(k, ranked.entries.size()); ++i) {
        const auto it = judgments->find(ranked.entries[i].doc_id);
        hits += (it != judgments->end() && it->second > 0) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(relevant);
}

} // namespace driftrank
