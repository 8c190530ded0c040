#include "driftrank/pipeline.hpp"

#include "driftrank/dense.hpp"
#include "driftrank/error.hpp"
#include "driftrank/log.hpp"
#include "driftrank/transport.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace driftrank {

using nlohmann::json;

namespace {

// Typed lookup of an optional key; unknown keys are rejected by the caller.
template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return;
    }
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        fail(ErrorKind::Config, "config " + where + key + ": expected " +
                                    (std::is_same_v<T, bool>     ? "a boolean"
                                     : std::is_same_v<T, std::string> ? "a string"
                                     : std::is_arithmetic_v<T>  ? "a number"
                                                                : "another type") +
                                    ", got " + it->dump());
    }
    if constexpr (std::is_unsigned_v<T>) {
        if (it->is_number_integer() && it->get<long long>() < 0) {
            fail(ErrorKind::Config, "config " + where + key + ": must not be negative");
        }
    }
}

const json& section(const json& obj, const char* key, const std::string& where) {
    static const json empty = json::object();
    const auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) {
        return empty;
    }
    if (!it->is_object()) {
        fail(ErrorKind::Config, "config " + where + key + ": expected an object");
    }
    return *it;
}

void only_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    for (const auto& [key, _] : obj.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
            fail(ErrorKind::Config, "config " + where + ": unknown key '" + key + "'");
        }
    }
}

json analyzer_json(const AnalyzerConfig& a) {
    return {{"lowercase", a.lowercase},
            {"ascii_fold", a.ascii_fold},
            {"stem", a.stem},
            {"stopwords", a.stopwords},
            {"max_tokens", a.max_tokens ? json(*a.max_tokens) : json(nullptr)}};
}

double ms_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first failure
/// is rethrown after all workers stop.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
    const auto workers = std::max<std::size_t>(1, std::min(threads, n));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const auto i = next++;
                if (i >= n || stop) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) {
                        error = std::current_exception();
                    }
                    stop = true;
                }
            }
        });
    }
    for (auto& t : pool) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

[[noreturn]] void stage_failure(const std::string& stage, const std::string& query_id, const std::exception& e) {
    fail(ErrorKind::Stage, "stage " + stage + (query_id.empty() ? "" : ", query " + query_id) + ": " + e.what());
}

/// Relative qrels=/corpus= paths inside builtin: specs resolve against the
/// config directory, like every other path in the file.
std::string resolve_endpoint(const PipelineConfig& cfg, const std::string& spec) {
    constexpr std::string_view prefix = "builtin:";
    if (spec.rfind(prefix, 0) != 0) {
        return spec;
    }
    std::string out(prefix);
    std::size_t start = prefix.size();
    bool first = true;
    while (start <= spec.size()) {
        auto end = spec.find(',', start);
        if (end == std::string::npos) {
            end = spec.size();
        }
        auto item = spec.substr(start, end - start);
        for (const char* key : {"qrels=", "corpus="}) {
            if (item.rfind(key, 0) == 0) {
                item = key + cfg.resolve(item.substr(std::strlen(key))).string();
            }
        }
        if (!item.empty()) {
            out += (first ? "" : ",") + item;
            first = false;
        }
        start = end + 1;
    }
    return out;
}

} // namespace

std::filesystem::path PipelineConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

PipelineConfig PipelineConfig::from_json(const json& j, std::filesystem::path base_dir) {
    if (!j.is_object()) {
        fail(ErrorKind::Config, "config must be a JSON object");
    }
    only_keys(j, {"version", "corpus", "queries", "qrels", "cleanup", "analyzer", "first_stage", "second_stage",
                  "rerank", "backfill", "output", "tag", "threads"},
              "");
    int version = 0;
    read(j, "version", version, "");
    if (version != kVersion) {
        fail(ErrorKind::Config, "config version must be " + std::to_string(kVersion) + " (got " +
                                    std::to_string(version) + ")");
    }
    PipelineConfig cfg;
    cfg.base_dir = std::move(base_dir);
    read(j, "corpus", cfg.corpus, "");
    read(j, "queries", cfg.queries, "");
    read(j, "qrels", cfg.qrels, "");
    read(j, "cleanup", cfg.cleanup, "");
    read(j, "tag", cfg.tag, "");
    read(j, "threads", cfg.threads, "");

    const auto& a = section(j, "analyzer", "");
    only_keys(a, {"lowercase", "ascii_fold", "stem", "stopwords", "max_tokens"}, "analyzer");
    read(a, "lowercase", cfg.analyzer.lowercase, "analyzer.");
    read(a, "ascii_fold", cfg.analyzer.ascii_fold, "analyzer.");
    read(a, "stem", cfg.analyzer.stem, "analyzer.");
    read(a, "stopwords", cfg.analyzer.stopwords, "analyzer.");
    if (a.contains("max_tokens") && !a["max_tokens"].is_null()) {
        std::size_t max_tokens = 0;
        read(a, "max_tokens", max_tokens, "analyzer.");
        cfg.analyzer.max_tokens = max_tokens;
    }

    const auto& fs = section(j, "first_stage", "");
    only_keys(fs, {"retriever", "k", "k1", "b"}, "first_stage");
    read(fs, "retriever", cfg.first_stage.retriever, "first_stage.");
    read(fs, "k", cfg.first_stage.k, "first_stage.");
    read(fs, "k1", cfg.first_stage.bm25.k1, "first_stage.");
    read(fs, "b", cfg.first_stage.bm25.b, "first_stage.");

    const auto& ss = section(j, "second_stage", "");
    only_keys(ss, {"enabled", "endpoint", "k", "truncate_tokens", "fusion_weight", "batch_size"}, "second_stage");
    read(ss, "enabled", cfg.second_stage.enabled, "second_stage.");
    read(ss, "endpoint", cfg.second_stage.endpoint, "second_stage.");
    read(ss, "k", cfg.second_stage.k, "second_stage.");
    read(ss, "truncate_tokens", cfg.second_stage.truncate_tokens, "second_stage.");
    read(ss, "fusion_weight", cfg.second_stage.fusion_weight, "second_stage.");
    read(ss, "batch_size", cfg.second_stage.batch_size, "second_stage.");

    const auto& rr = section(j, "rerank", "");
    only_keys(rr, {"strategy", "endpoint", "pointwise", "sliding_window", "tournament"}, "rerank");
    read(rr, "strategy", cfg.rerank.strategy, "rerank.");
    read(rr, "endpoint", cfg.rerank.endpoint, "rerank.");
    const auto& pw = section(rr, "pointwise", "rerank.");
    only_keys(pw, {"k"}, "rerank.pointwise");
    read(pw, "k", cfg.rerank.pointwise_k, "rerank.pointwise.");
    const auto& sw = section(rr, "sliding_window", "rerank.");
    only_keys(sw, {"window", "stride", "passes"}, "rerank.sliding_window");
    read(sw, "window", cfg.rerank.sliding_window.window, "rerank.sliding_window.");
    read(sw, "stride", cfg.rerank.sliding_window.stride, "rerank.sliding_window.");
    read(sw, "passes", cfg.rerank.sliding_window.passes, "rerank.sliding_window.");
    const auto& tn = section(rr, "tournament", "rerank.");
    only_keys(tn, {"match_size", "promote", "top_k"}, "rerank.tournament");
    read(tn, "match_size", cfg.rerank.tournament.match_size, "rerank.tournament.");
    read(tn, "promote", cfg.rerank.tournament.promote, "rerank.tournament.");
    read(tn, "top_k", cfg.rerank.tournament.top_k, "rerank.tournament.");

    const auto& bf = section(j, "backfill", "");
    only_keys(bf, {"enabled", "depth"}, "backfill");
    read(bf, "enabled", cfg.backfill.enabled, "backfill.");
    read(bf, "depth", cfg.backfill.depth, "backfill.");

    const auto& out = section(j, "output", "");
    only_keys(out, {"trec_run", "jsonl", "trace", "include_text"}, "output");
    read(out, "trec_run", cfg.output.trec_run, "output.");
    read(out, "jsonl", cfg.output.jsonl, "output.");
    read(out, "trace", cfg.output.trace, "output.");
    read(out, "include_text", cfg.output.include_text, "output.");
    return cfg;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Config, "cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::Config, "config " + path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

json PipelineConfig::to_json() const {
    return {
        {"version", kVersion},
        {"corpus", corpus},
        {"queries", queries},
        {"qrels", qrels},
        {"cleanup", cleanup},
        {"analyzer", analyzer_json(analyzer)},
        {"first_stage",
         {{"retriever", first_stage.retriever}, {"k", first_stage.k}, {"k1", first_stage.bm25.k1},
          {"b", first_stage.bm25.b}}},
        {"second_stage",
         {{"enabled", second_stage.enabled},
          {"endpoint", second_stage.endpoint},
          {"k", second_stage.k},
          {"truncate_tokens", second_stage.truncate_tokens},
          {"fusion_weight", second_stage.fusion_weight},
          {"batch_size", second_stage.batch_size}}},
        {"rerank",
         {{"strategy", rerank.strategy},
          {"endpoint", rerank.endpoint},
          {"pointwise", {{"k", rerank.pointwise_k}}},
          {"sliding_window",
           {{"window", rerank.sliding_window.window},
            {"stride", rerank.sliding_window.stride},
            {"passes", rerank.sliding_window.passes}}},
          {"tournament",
           {{"match_size", rerank.tournament.match_size},
            {"promote", rerank.tournament.promote},
            {"top_k", rerank.tournament.top_k}}}}},
        {"backfill", {{"enabled", backfill.enabled}, {"depth", backfill.depth}}},
        {"output",
         {{"trec_run", output.trec_run},
          {"jsonl", output.jsonl},
          {"trace", output.trace},
          {"include_text", output.include_text}}},
        {"tag", tag},
        {"threads", threads},
    };
}

void apply_env_overrides(PipelineConfig& cfg) {
    if (const char* v = std::getenv("DRIFTRANK_EMBED_ENDPOINT"); v != nullptr && *v != '\0') {
        cfg.second_stage.endpoint = v;
    }
    if (const char* v = std::getenv("DRIFTRANK_SCORER_ENDPOINT"); v != nullptr && *v != '\0') {
        cfg.rerank.endpoint = v;
    }
}

std::vector<std::string> validate_config(const PipelineConfig& cfg) {
    std::vector<std::string> findings;
    const auto add = [&](std::string s) { findings.push_back(std::move(s)); };
    if (cfg.corpus.empty()) {
        add("corpus path is missing");
    }
    if (cfg.queries.empty()) {
        add("queries path is missing");
    }
    if (cfg.first_stage.retriever != "bm25" && cfg.first_stage.retriever != "dense") {
        add("first_stage.retriever must be bm25 or dense, got '" + cfg.first_stage.retriever + "'");
    }
    if (cfg.first_stage.k == 0) {
        add("first_stage.k must be at least 1");
    }
    if (!(cfg.first_stage.bm25.k1 >= 0.0)) {
        add("first_stage.k1 must be non-negative");
    }
    if (!(cfg.first_stage.bm25.b >= 0.0 && cfg.first_stage.bm25.b <= 1.0)) {
        add("first_stage.b must lie in [0,1]");
    }
    const bool needs_embeddings = cfg.second_stage.enabled || cfg.first_stage.retriever == "dense";
    if (needs_embeddings && cfg.second_stage.endpoint.empty()) {
        add("second_stage.endpoint is required for dense scoring");
    }
    std::size_t rerank_pool = cfg.first_stage.k;
    if (cfg.second_stage.enabled) {
        if (cfg.second_stage.k == 0) {
            add("second_stage.k must be at least 1");
        }
        if (cfg.second_stage.k > cfg.first_stage.k) {
            add("second_stage.k (" + std::to_string(cfg.second_stage.k) + ") exceeds first_stage.k (" +
                std::to_string(cfg.first_stage.k) + ")");
        }
        rerank_pool = cfg.second_stage.k;
        if (cfg.second_stage.batch_size == 0) {
            add("second_stage.batch_size must be at least 1");
        }
        if (cfg.second_stage.truncate_tokens == 0) {
            add("second_stage.truncate_tokens must be at least 1");
        }
    }
    const auto& strategy = cfg.rerank.strategy;
    if (strategy != "none" && strategy != "pointwise" && strategy != "sliding_window" && strategy != "tournament") {
        add("unknown rerank.strategy '" + strategy + "' (none, pointwise, sliding_window, tournament)");
    } else if (strategy != "none" && cfg.rerank.endpoint.empty()) {
        add("rerank.strategy " + strategy + " needs rerank.endpoint");
    }
    if (strategy == "pointwise") {
        if (cfg.rerank.pointwise_k == 0) {
            add("rerank.pointwise.k must be at least 1");
        } else if (cfg.rerank.pointwise_k > rerank_pool) {
            add("rerank.pointwise.k (" + std::to_string(cfg.rerank.pointwise_k) +
                ") exceeds the candidates handed to reranking (" + std::to_string(rerank_pool) + ")");
        }
    }
    if (strategy == "sliding_window") {
        const auto& sw = cfg.rerank.sliding_window;
        if (sw.stride < 1 || sw.stride >= sw.window) {
            add("rerank.sliding_window needs 1 <= stride < window");
        }
        if (sw.passes < 1) {
            add("rerank.sliding_window.passes must be at least 1");
        }
    }
    if (strategy == "tournament") {
        const auto& t = cfg.rerank.tournament;
        if (t.promote < 1 || t.promote >= t.match_size) {
            add("rerank.tournament needs 1 <= promote < match_size");
        }
        if (t.top_k < 1) {
            add("rerank.tournament.top_k must be at least 1");
        } else if (t.top_k > rerank_pool) {
            add("rerank.tournament.top_k (" + std::to_string(t.top_k) +
                ") exceeds the candidates handed to reranking (" + std::to_string(rerank_pool) + ")");
        }
    }
    if (cfg.backfill.enabled && (cfg.backfill.depth == 0 || cfg.backfill.depth > kTrecRunDepth)) {
        add("backfill.depth must be between 1 and " + std::to_string(kTrecRunDepth));
    }
    if (cfg.threads == 0) {
        add("threads must be at least 1");
    }
    if (cfg.tag.empty() || cfg.tag.find_first_of(" \t\n") != std::string::npos) {
        add("tag must be a non-empty word without whitespace");
    }
    return findings;
}

RankedList backfill(const RankedList& reranked, const RankedList& first_stage, std::size_t depth) {
    if (depth == 0) {
        fail(ErrorKind::InvalidArgument, "backfill depth must be at least 1");
    }
    std::unordered_set<std::string> present;
    std::unordered_set<std::string> pool;
    for (const auto& e : first_stage.entries) {
        pool.insert(e.doc_id);
    }
    RankedList out{reranked.query_id.empty() ? first_stage.query_id : reranked.query_id, {}};
    for (const auto& e : reranked.entries) {
        if (!pool.contains(e.doc_id)) {
            fail(ErrorKind::InvalidArgument, "reranked document '" + e.doc_id + "' is not in the first-stage list");
        }
        if (!present.insert(e.doc_id).second) {
            fail(ErrorKind::InvalidArgument, "reranked list repeats '" + e.doc_id + "'");
        }
        if (out.size() < depth) {
            out.entries.push_back(e);
        }
    }
    const bool anchored = !out.empty();
    const double last = anchored ? out.entries.back().score : 0.0;
    std::size_t pos = 0;
    for (const auto& e : first_stage.entries) {
        if (out.size() >= depth) {
            break;
        }
        if (present.contains(e.doc_id)) {
            continue;
        }
        present.insert(e.doc_id);
        ++pos;
        out.entries.push_back({e.doc_id, anchored ? last - kBackfillEpsilon * static_cast<double>(pos) : e.score, 0});
    }
    renumber(out);
    return out;
}

void make_strictly_decreasing(RankedList& list) {
    for (std::size_t i = 1; i < list.entries.size(); ++i) {
        auto& s = list.entries[i].score;
        const double prev = list.entries[i - 1].score;
        if (!(s < prev)) {
            s = std::nextafter(prev, -std::numeric_limits<double>::infinity());
        }
    }
}

json StageTrace::to_json() const {
    json out = json::array();
    for (const auto& q : queries) {
        json stages = json::array();
        for (const auto& s : q.stages) {
            stages.push_back({{"stage", s.stage},
                              {"doc_ids", s.doc_ids},
                              {"elapsed_ms", s.elapsed_ms},
                              {"scorer_calls", s.scorer_calls},
                              {"failures", s.failures}});
        }
        out.push_back({{"query_id", q.query_id}, {"stages", std::move(stages)}});
    }
    return out;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    if (const auto findings = validate_config(cfg); !findings.empty()) {
        std::string msg = "invalid pipeline config:";
        for (const auto& f : findings) {
            msg += "\n  - " + f;
        }
        fail(ErrorKind::Config, msg);
    }

    Corpus corpus;
    std::vector<Query> queries;
    std::optional<QrelSet> qrels;
    try {
        corpus = ingest_jsonl(cfg.resolve(cfg.corpus), cfg.cleanup);
        queries = load_queries(cfg.resolve(cfg.queries));
        if (!cfg.qrels.empty()) {
            qrels = QrelSet::load(cfg.resolve(cfg.qrels));
        }
    } catch (const Error& e) {
        stage_failure("load", "", e);
    }
    if (queries.empty()) {
        fail(ErrorKind::Stage, "stage load: no queries in " + cfg.resolve(cfg.queries).string());
    }

    const auto nq = queries.size();
    PipelineResult result;
    result.trace.queries.resize(nq);
    for (std::size_t i = 0; i < nq; ++i) {
        result.trace.queries[i].query_id = queries[i].id;
    }
    const auto text_of = [&corpus](const std::string& id) { return corpus.at(id).text; };
    const auto snapshot = [&](std::size_t qi, std::string stage, const RankedList& list, double ms,
                              std::size_t calls = 0, std::size_t failures = 0) {
        result.trace.queries[qi].stages.push_back({std::move(stage), list.doc_ids(), ms, calls, failures});
    };

    // doc id -> score of the stage that last placed it, per query.
    std::vector<std::unordered_map<std::string, double>> stage_scores(nq);
    const auto record_scores = [&](std::size_t qi, const RankedList& list) {
        for (const auto& e : list.entries) {
            stage_scores[qi][e.doc_id] = e.score;
        }
    };

    std::unique_ptr<Endpoint> embedder;
    const bool uses_dense = cfg.second_stage.enabled || cfg.first_stage.retriever == "dense";
    if (uses_dense) {
        try {
            embedder = open_endpoint(resolve_endpoint(cfg, cfg.second_stage.endpoint));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Config) {
                throw;
            }
            stage_failure("dense", "", e);
        }
    }
    FetchOptions fetch;
    fetch.truncate_tokens = cfg.second_stage.truncate_tokens;
    fetch.batch_size = cfg.second_stage.batch_size;

    EmbeddingStore query_vectors;
    if (uses_dense) {
        std::vector<std::pair<std::string, std::string>> items;
        for (const auto& q : queries) {
            items.emplace_back(q.id, q.text);
        }
        try {
            query_vectors = fetch_embeddings(*embedder, items, fetch);
        } catch (const Error& e) {
            stage_failure("dense", "", e);
        }
    }

    // Stage 1.
    std::vector<RankedList> first(nq);
    if (cfg.first_stage.retriever == "bm25") {
        InvertedIndex index;
        try {
            index = InvertedIndex::build(corpus, cfg.analyzer, cfg.first_stage.bm25);
        } catch (const Error& e) {
            stage_failure("index", "", e);
        }
        parallel_for(nq, cfg.threads, [&](std::size_t qi) {
            const auto start = std::chrono::steady_clock::now();
            try {
                first[qi] = search(index, cfg.first_stage.bm25, queries[qi], cfg.first_stage.k);
            } catch (const Error& e) {
                stage_failure("bm25", queries[qi].id, e);
            }
            snapshot(qi, "bm25", first[qi], ms_since(start));
        });
    } else {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::pair<std::string, std::string>> items;
        for (const auto& d : corpus) {
            items.emplace_back(d.id, d.text);
        }
        EmbeddingStore docs;
        try {
            docs = fetch_embeddings(*embedder, items, fetch);
        } catch (const Error& e) {
            stage_failure("dense-retrieval", "", e);
        }
        RankedList everything;
        for (const auto& d : corpus) {
            everything.entries.push_back({d.id, 0.0, 0});
        }
        const double fetch_ms = ms_since(start);
        parallel_for(nq, cfg.threads, [&](std::size_t qi) {
            const auto q_start = std::chrono::steady_clock::now();
            try {
                RankedList all = everything;
                all.query_id = queries[qi].id;
                first[qi] = dot_rescore(*query_vectors.find(queries[qi].id), all, docs, cfg.first_stage.k);
            } catch (const Error& e) {
                stage_failure("dense-retrieval", queries[qi].id, e);
            }
            snapshot(qi, "dense-retrieval", first[qi], fetch_ms + ms_since(q_start));
        });
    }
    for (std::size_t qi = 0; qi < nq; ++qi) {
        record_scores(qi, first[qi]);
    }

    // Stage 2.
    std::vector<RankedList> second = first;
    if (cfg.second_stage.enabled) {
        const auto start = std::chrono::steady_clock::now();
        std::vector<std::pair<std::string, std::string>> items;
        std::set<std::string> wanted;
        for (const auto& list : first) {
            for (const auto& e : list.entries) {
                wanted.insert(e.doc_id);
            }
        }
        for (const auto& id : wanted) {
            items.emplace_back(id, corpus.at(id).text);
        }
        EmbeddingStore docs;
        if (!items.empty()) {
            try {
                docs = fetch_embeddings(*embedder, items, fetch);
            } catch (const Error& e) {
                stage_failure("dense", "", e);
            }
        }
        const double fetch_ms = ms_since(start) / static_cast<double>(nq);
        parallel_for(nq, cfg.threads, [&](std::size_t qi) {
            const auto q_start = std::chrono::steady_clock::now();
            if (!first[qi].empty()) {
                try {
                    second[qi] = dot_rescore(*query_vectors.find(queries[qi].id), first[qi], docs,
                                             cfg.second_stage.k, cfg.second_stage.fusion_weight);
                } catch (const Error& e) {
                    stage_failure("dense", queries[qi].id, e);
                }
            }
            snapshot(qi, "dense", second[qi], fetch_ms + ms_since(q_start));
        });
        for (std::size_t qi = 0; qi < nq; ++qi) {
            record_scores(qi, second[qi]);
        }
    }

    // Stage 3.
    std::vector<RankedList> reranked = second;
    if (cfg.rerank.strategy != "none") {
        std::unique_ptr<Endpoint> endpoint;
        try {
            endpoint = open_endpoint(resolve_endpoint(cfg, cfg.rerank.endpoint));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Config) {
                throw;
            }
            stage_failure("rerank", "", e);
        }
        WirePointwiseScorer pointwise(*endpoint);
        WireListwiseScorer listwise(*endpoint);
        const auto& strategy = cfg.rerank.strategy;
        parallel_for(nq, cfg.threads, [&](std::size_t qi) {
            if (second[qi].empty()) {
                snapshot(qi, strategy, second[qi], 0.0);
                return;
            }
            const auto start = std::chrono::steady_clock::now();
            RerankOutcome outcome;
            try {
                if (strategy == "pointwise") {
                    outcome = pointwise_rerank(pointwise, queries[qi], second[qi], text_of, cfg.rerank.pointwise_k);
                } else if (strategy == "sliding_window") {
                    outcome = sliding_window_rerank(listwise, queries[qi], second[qi], text_of,
                                                    cfg.rerank.sliding_window);
                } else {
                    outcome = tournament_rerank(listwise, queries[qi], second[qi], text_of, cfg.rerank.tournament);
                }
            } catch (const Error& e) {
                stage_failure(strategy, queries[qi].id, e);
            }
            reranked[qi] = std::move(outcome.list);
            snapshot(qi, strategy, reranked[qi], ms_since(start), outcome.scorer_calls, outcome.failures);
            if (strategy == "pointwise") {
                for (const auto& [id, p] : outcome.model_scores) {
                    stage_scores[qi][id] = p;
                }
            } else {
                record_scores(qi, reranked[qi]);
            }
        });
    }

    // Stage 4 and assembly.
    result.runs.resize(nq);
    result.records.resize(nq);
    for (std::size_t qi = 0; qi < nq; ++qi) {
        RankedList final_list;
        if (cfg.backfill.enabled) {
            const auto start = std::chrono::steady_clock::now();
            final_list = backfill(reranked[qi], first[qi], cfg.backfill.depth);
            snapshot(qi, "backfill", final_list, ms_since(start));
        } else {
            final_list = reranked[qi];
        }
        final_list.query_id = queries[qi].id;
        make_strictly_decreasing(final_list);
        RunRecord record{queries[qi].id, queries[qi].text, {}};
        record.docs.reserve(final_list.size());
        for (const auto& e : final_list.entries) {
            RunDoc doc;
            doc.doc_id = e.doc_id;
            doc.score = stage_scores[qi].at(e.doc_id);
            if (cfg.output.include_text) {
                doc.doc = corpus.at(e.doc_id).text;
            }
            if (qrels) {
                doc.grade = qrels->grade(queries[qi].id, e.doc_id);
            }
            record.docs.push_back(std::move(doc));
        }
        result.runs[qi] = std::move(final_list);
        result.records[qi] = std::move(record);
    }

    try {
        for (const auto* out : {&cfg.output.trec_run, &cfg.output.jsonl, &cfg.output.trace}) {
            if (!out->empty()) {
                if (const auto dir = cfg.resolve(*out).parent_path(); !dir.empty()) {
                    std::filesystem::create_directories(dir);
                }
            }
        }
        if (!cfg.output.trec_run.empty()) {
            write_trec_run(result.runs, cfg.tag, cfg.resolve(cfg.output.trec_run));
        }
        if (!cfg.output.jsonl.empty()) {
            write_run_jsonl(result.records, cfg.resolve(cfg.output.jsonl));
        }
        if (!cfg.output.trace.empty()) {
            std::ofstream out(cfg.resolve(cfg.output.trace));
            if (!out) {
                fail(ErrorKind::Io, "cannot write trace " + cfg.resolve(cfg.output.trace).string());
            }
            out << result.trace.to_json().dump(1) << '\n';
        }
    } catch (const Error& e) {
        stage_failure("output", "", e);
    } catch (const std::filesystem::filesystem_error& e) {
        stage_failure("output", "", e);
    }
    return result;
}

} // namespace driftrank
