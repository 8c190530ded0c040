#include "driftrank/driftrank.h"

#include "driftrank/bm25.hpp"
#include "driftrank/dense.hpp"
#include "driftrank/error.hpp"
#include "driftrank/pipeline.hpp"
#include "driftrank/rerank.hpp"
#include "driftrank/shift.hpp"
#include "driftrank/textcorpus.hpp"
#include "driftrank/transport.hpp"
#include "driftrank/treceval.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <unordered_map>

using nlohmann::json;
namespace dr = driftrank;

struct dr_corpus {
    dr::Corpus corpus;
};

struct dr_queries {
    std::vector<dr::Query> queries;
};

struct dr_index {
    dr::InvertedIndex index;
};

struct dr_run {
    std::vector<dr::RankedList> lists;
};

namespace {

thread_local std::string g_last_error;

dr_status status_of(dr::ErrorKind kind) {
    switch (kind) {
    case dr::ErrorKind::InvalidArgument:
        return DR_ERR_INVALID_ARGUMENT;
    case dr::ErrorKind::Io:
        return DR_ERR_IO;
    case dr::ErrorKind::Parse:
        return DR_ERR_PARSE;
    case dr::ErrorKind::Config:
        return DR_ERR_CONFIG;
    case dr::ErrorKind::Stage:
        return DR_ERR_STAGE;
    case dr::ErrorKind::Provider:
        return DR_ERR_PROVIDER;
    }
    return DR_ERR_INTERNAL;
}

template <typename Fn>
dr_status guard(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return DR_OK;
    } catch (const dr::Error& e) {
        g_last_error = e.what();
        return status_of(e.kind());
    } catch (const json::exception& e) {
        g_last_error = std::string("malformed JSON: ") + e.what();
        return DR_ERR_PARSE;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return DR_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return DR_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return DR_ERR_INTERNAL;
    }
}

template <typename T>
void require(const T* p, const char* what) {
    if (p == nullptr) {
        dr::fail(dr::ErrorKind::InvalidArgument, std::string(what) + " must not be NULL");
    }
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) {
        throw std::bad_alloc();
    }
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

json parse_options(const char* text, std::initializer_list<const char*> allowed) {
    if (text == nullptr || *text == '\0') {
        return json::object();
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        dr::fail(dr::ErrorKind::InvalidArgument, std::string("options are not valid JSON: ") + e.what());
    }
    if (!j.is_object()) {
        dr::fail(dr::ErrorKind::InvalidArgument, "options must be a JSON object");
    }
    for (const auto& [key, _] : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            known = known || key == a;
        }
        if (!known) {
            dr::fail(dr::ErrorKind::InvalidArgument, "unknown option '" + key + "'");
        }
    }
    return j;
}

template <typename T>
T option(const json& j, const char* key, T fallback) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        return fallback;
    }
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        dr::fail(dr::ErrorKind::InvalidArgument, std::string("option '") + key + "' has the wrong type");
    }
}

dr::AnalyzerConfig analyzer_option(const json& j) {
    dr::AnalyzerConfig cfg;
    const auto it = j.find("analyzer");
    if (it == j.end() || it->is_null()) {
        return cfg;
    }
    if (!it->is_object()) {
        dr::fail(dr::ErrorKind::InvalidArgument, "option 'analyzer' must be an object");
    }
    cfg.lowercase = option(*it, "lowercase", cfg.lowercase);
    cfg.ascii_fold = option(*it, "ascii_fold", cfg.ascii_fold);
    cfg.stem = option(*it, "stem", cfg.stem);
    cfg.stopwords = option(*it, "stopwords", cfg.stopwords);
    if (it->contains("max_tokens") && !(*it)["max_tokens"].is_null()) {
        cfg.max_tokens = option(*it, "max_tokens", std::size_t{0});
    }
    return cfg;
}

std::unordered_map<std::string, const dr::Query*> query_map(const dr_queries* queries) {
    std::unordered_map<std::string, const dr::Query*> map;
    for (const auto& q : queries->queries) {
        map.emplace(q.id, &q);
    }
    return map;
}

const dr::Query& query_for(const std::unordered_map<std::string, const dr::Query*>& map, const std::string& id) {
    const auto it = map.find(id);
    if (it == map.end()) {
        dr::fail(dr::ErrorKind::InvalidArgument, "run has query '" + id + "' that is not in the query file");
    }
    return *it->second;
}

dr::PipelineConfig load_pipeline_config(const char* path, const char* overrides) {
    require(path, "config_path");
    auto cfg = dr::PipelineConfig::load(path);
    dr::apply_env_overrides(cfg);
    if (overrides != nullptr && *overrides != '\0') {
        json patch;
        try {
            patch = json::parse(overrides);
        } catch (const json::parse_error& e) {
            dr::fail(dr::ErrorKind::Config, std::string("overrides are not valid JSON: ") + e.what());
        }
        auto merged = cfg.to_json();
        merged.merge_patch(patch);
        auto base = cfg.base_dir;
        cfg = dr::PipelineConfig::from_json(merged, std::move(base));
    }
    return cfg;
}

} // namespace

extern "C" {

const char* dr_version(void) { return "0.3.0"; }

const char* dr_last_error(void) { return g_last_error.c_str(); }

const char* dr_status_name(dr_status status) {
    switch (status) {
    case DR_OK:
        return "ok";
    case DR_ERR_INVALID_ARGUMENT:
        return "invalid argument";
    case DR_ERR_IO:
        return "i/o error";
    case DR_ERR_PARSE:
        return "parse error";
    case DR_ERR_CONFIG:
        return "config error";
    case DR_ERR_STAGE:
        return "stage failure";
    case DR_ERR_PROVIDER:
        return "provider error";
    case DR_ERR_INTERNAL:
        return "internal error";
    }
    return "unknown status";
}

void dr_string_free(char* s) { std::free(s); }

dr_status dr_clean_text(const char* raw, char** out) {
    return guard([&] {
        require(raw, "raw");
        require(out, "out");
        *out = dup_string(dr::clean_text(raw));
    });
}

dr_status dr_corpus_open(const char* path, int cleanup, dr_corpus** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new dr_corpus{dr::ingest_jsonl(path, cleanup != 0)};
    });
}

dr_status dr_corpus_save(const dr_corpus* corpus, const char* path) {
    return guard([&] {
        require(corpus, "corpus");
        require(path, "path");
        dr::write_jsonl(corpus->corpus, path);
    });
}

size_t dr_corpus_size(const dr_corpus* corpus) { return corpus ? corpus->corpus.size() : 0; }

void dr_corpus_free(dr_corpus* corpus) { delete corpus; }

dr_status dr_cleanup_report(const dr_corpus* before, const dr_corpus* after, char** json_out) {
    return guard([&] {
        require(before, "before");
        require(after, "after");
        require(json_out, "json_out");
        const auto r = dr::cleanup_report(before->corpus, after->corpus);
        const json j = {{"documents", r.doc_count},
                        {"bytes_before", r.bytes_before},
                        {"bytes_after", r.bytes_after},
                        {"chars_before", r.chars_before},
                        {"chars_after", r.chars_after},
                        {"byte_reduction_percent", r.byte_reduction_percent},
                        {"char_reduction_percent", r.char_reduction_percent}};
        *json_out = dup_string(j.dump());
    });
}

dr_status dr_queries_open(const char* path, dr_queries** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new dr_queries{dr::load_queries(path)};
    });
}

size_t dr_queries_size(const dr_queries* queries) { return queries ? queries->queries.size() : 0; }

void dr_queries_free(dr_queries* queries) { delete queries; }

dr_status dr_index_build(const dr_corpus* corpus, const char* options_json, dr_index** out) {
    return guard([&] {
        require(corpus, "corpus");
        require(out, "out");
        const auto opts = parse_options(options_json, {"k1", "b", "analyzer"});
        dr::BM25Params params;
        params.k1 = option(opts, "k1", params.k1);
        params.b = option(opts, "b", params.b);
        *out = new dr_index{dr::InvertedIndex::build(corpus->corpus, analyzer_option(opts), params)};
    });
}

dr_status dr_index_save(const dr_index* index, const char* path) {
    return guard([&] {
        require(index, "index");
        require(path, "path");
        index->index.save(path);
    });
}

dr_status dr_index_load(const char* path, dr_index** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        *out = new dr_index{dr::InvertedIndex::load(path)};
    });
}

dr_status dr_index_stats(const dr_index* index, char** json_out) {
    return guard([&] {
        require(index, "index");
        require(json_out, "json_out");
        const auto& ix = index->index;
        const json j = {{"documents", ix.doc_count()},
                        {"terms", ix.vocabulary().size()},
                        {"avg_doc_length", ix.avg_doc_length()},
                        {"k1", ix.params().k1},
                        {"b", ix.params().b},
                        {"analyzer", ix.analyzer().canonical()}};
        *json_out = dup_string(j.dump());
    });
}

void dr_index_free(dr_index* index) { delete index; }

dr_status dr_index_search(const dr_index* index, const dr_queries* queries, size_t k, const char* options_json,
                          dr_run** out) {
    return guard([&] {
        require(index, "index");
        require(queries, "queries");
        require(out, "out");
        const auto opts = parse_options(options_json, {"k1", "b"});
        auto params = index->index.params();
        params.k1 = option(opts, "k1", params.k1);
        params.b = option(opts, "b", params.b);
        auto run = std::make_unique<dr_run>();
        for (const auto& q : queries->queries) {
            run->lists.push_back(dr::search(index->index, params, q, k));
        }
        *out = run.release();
    });
}

dr_status dr_run_load(const char* path, dr_run** out) {
    return guard([&] {
        require(path, "path");
        require(out, "out");
        std::ifstream in(path);
        if (!in) {
            dr::fail(dr::ErrorKind::Io, std::string("cannot open run ") + path);
        }
        char first = ' ';
        while (in.get(first) && std::isspace(static_cast<unsigned char>(first))) {
        }
        in.close();
        auto run = std::make_unique<dr_run>();
        run->lists = first == '{' ? dr::ranked_lists_from_records(dr::read_run_jsonl(path)) : dr::read_trec_run(path);
        *out = run.release();
    });
}

dr_status dr_run_save_trec(const dr_run* run, const char* tag, const char* path) {
    return guard([&] {
        require(run, "run");
        require(path, "path");
        dr::write_trec_run(run->lists, tag && *tag ? tag : "driftrank", path);
    });
}

dr_status dr_run_save_jsonl(const dr_run* run, const dr_queries* queries, const dr_corpus* corpus,
                            const char* qrels_path, const char* path) {
    return guard([&] {
        require(run, "run");
        require(path, "path");
        std::unordered_map<std::string, const dr::Query*> qmap;
        if (queries != nullptr) {
            qmap = query_map(queries);
        }
        std::vector<dr::RunRecord> records;
        for (const auto& list : run->lists) {
            dr::RunRecord rec{list.query_id, queries ? query_for(qmap, list.query_id).text : std::string(), {}};
            for (const auto& e : list.entries) {
                dr::RunDoc doc{e.doc_id, std::nullopt, e.score, std::nullopt};
                if (corpus != nullptr) {
                    doc.doc = corpus->corpus.at(e.doc_id).text;
                }
                rec.docs.push_back(std::move(doc));
            }
            records.push_back(std::move(rec));
        }
        if (qrels_path != nullptr && *qrels_path != '\0') {
            dr::attach_grades(records, dr::QrelSet::load(qrels_path));
        }
        dr::write_run_jsonl(records, path);
    });
}

size_t dr_run_query_count(const dr_run* run) { return run ? run->lists.size() : 0; }

void dr_run_free(dr_run* run) { delete run; }

dr_status dr_dense_rescore(const dr_run* candidates, const dr_queries* queries, const dr_corpus* corpus,
                           const char* options_json, dr_run** out) {
    return guard([&] {
        require(candidates, "candidates");
        require(queries, "queries");
        require(corpus, "corpus");
        require(out, "out");
        const auto opts =
            parse_options(options_json, {"endpoint", "k", "truncate_tokens", "fusion_weight", "batch_size"});
        const auto endpoint_spec = option<std::string>(opts, "endpoint", "builtin:embed=bow,dim=256");
        dr::FetchOptions fetch;
        fetch.truncate_tokens = option(opts, "truncate_tokens", fetch.truncate_tokens);
        fetch.batch_size = option(opts, "batch_size", fetch.batch_size);
        const auto k = option(opts, "k", std::size_t{100});
        const auto fusion = option(opts, "fusion_weight", 0.0);
        auto endpoint = dr::open_endpoint(endpoint_spec);

        const auto qmap = query_map(queries);
        std::vector<std::pair<std::string, std::string>> qitems;
        std::vector<std::pair<std::string, std::string>> ditems;
        std::unordered_map<std::string, bool> seen;
        for (const auto& list : candidates->lists) {
            qitems.emplace_back(list.query_id, query_for(qmap, list.query_id).text);
            for (const auto& e : list.entries) {
                if (seen.emplace(e.doc_id, true).second) {
                    ditems.emplace_back(e.doc_id, corpus->corpus.at(e.doc_id).text);
                }
            }
        }
        auto run = std::make_unique<dr_run>();
        if (qitems.empty()) {
            *out = run.release();
            return;
        }
        const auto qvecs = dr::fetch_embeddings(*endpoint, qitems, fetch);
        dr::EmbeddingStore dvecs;
        if (!ditems.empty()) {
            dvecs = dr::fetch_embeddings(*endpoint, ditems, fetch);
        }
        for (const auto& list : candidates->lists) {
            if (list.empty()) {
                run->lists.push_back(list);
                continue;
            }
            run->lists.push_back(dr::dot_rescore(*qvecs.find(list.query_id), list, dvecs, k, fusion));
        }
        *out = run.release();
    });
}

dr_status dr_rerank(const dr_run* candidates, const dr_queries* queries, const dr_corpus* corpus,
                    const char* options_json, dr_run** out, char** stats_json) {
    return guard([&] {
        require(candidates, "candidates");
        require(queries, "queries");
        require(corpus, "corpus");
        require(out, "out");
        const auto opts = parse_options(options_json, {"strategy", "endpoint", "depth", "k", "window", "stride",
                                                       "passes", "match_size", "promote", "top_k"});
        const auto strategy = option<std::string>(opts, "strategy", "tournament");
        const auto endpoint_spec = option<std::string>(opts, "endpoint", "");
        if (endpoint_spec.empty()) {
            dr::fail(dr::ErrorKind::Config, "rerank needs a scorer endpoint");
        }
        const auto depth = option(opts, "depth", std::size_t{100});
        if (depth == 0) {
            dr::fail(dr::ErrorKind::InvalidArgument, "rerank depth must be at least 1");
        }
        dr::SlidingWindowConfig sw;
        sw.window = option(opts, "window", sw.window);
        sw.stride = option(opts, "stride", sw.stride);
        sw.passes = option(opts, "passes", sw.passes);
        dr::TournamentConfig tc;
        tc.match_size = option(opts, "match_size", tc.match_size);
        tc.promote = option(opts, "promote", tc.promote);
        tc.top_k = option(opts, "top_k", tc.top_k);
        const auto pointwise_k = option(opts, "k", std::size_t{30});
        if (strategy == "sliding_window") {
            sw.validate();
        } else if (strategy == "tournament") {
            tc.validate();
        } else if (strategy != "pointwise") {
            dr::fail(dr::ErrorKind::Config, "unknown rerank strategy '" + strategy + "'");
        }

        auto endpoint = dr::open_endpoint(endpoint_spec);
        dr::WirePointwiseScorer pointwise(*endpoint);
        dr::WireListwiseScorer listwise(*endpoint);
        const auto qmap = query_map(queries);
        const auto text = [&](const std::string& id) { return corpus->corpus.at(id).text; };
        auto run = std::make_unique<dr_run>();
        json stats = json::array();
        for (const auto& list : candidates->lists) {
            if (list.empty()) {
                run->lists.push_back(list);
                continue;
            }
            const auto& query = query_for(qmap, list.query_id);
            dr::RankedList head{list.query_id, {}};
            const auto cut = std::min(depth, list.size());
            head.entries.assign(list.entries.begin(), list.entries.begin() + static_cast<std::ptrdiff_t>(cut));
            dr::RerankOutcome outcome;
            if (strategy == "pointwise") {
                outcome = dr::pointwise_rerank(pointwise, query, head, text, pointwise_k);
            } else if (strategy == "sliding_window") {
                outcome = dr::sliding_window_rerank(listwise, query, head, text, sw);
            } else {
                outcome = dr::tournament_rerank(listwise, query, head, text, tc);
            }
            auto result = std::move(outcome.list);
            result.entries.insert(result.entries.end(), list.entries.begin() + static_cast<std::ptrdiff_t>(cut),
                                  list.entries.end());
            dr::assign_positional_scores(result);
            run->lists.push_back(std::move(result));
            stats.push_back({{"query_id", list.query_id},
                             {"scorer_calls", outcome.scorer_calls},
                             {"failures", outcome.failures}});
        }
        if (stats_json != nullptr) {
            *stats_json = dup_string(stats.dump());
        }
        *out = run.release();
    });
}

dr_status dr_evaluate(const dr_run* run, const char* qrels_path, const char* metrics, const char* format,
                      char** out) {
    return guard([&] {
        require(run, "run");
        require(qrels_path, "qrels_path");
        require(out, "out");
        const auto specs = dr::parse_metric_list(metrics && *metrics ? metrics : "ndcg@10,map@100,P@10,recall@1000");
        const auto report = dr::evaluate(run->lists, dr::QrelSet::load(qrels_path), specs);
        const std::string fmt = format ? format : "json";
        if (fmt == "json") {
            *out = dup_string(report.to_json().dump(2));
        } else if (fmt == "text") {
            *out = dup_string(report.to_text());
        } else {
            dr::fail(dr::ErrorKind::InvalidArgument, "format must be json or text");
        }
    });
}

dr_status dr_shift_report(const char* const* corpus_paths, const char* const* labels, size_t count,
                          const char* options_json, char** json_out, char** table_out) {
    return guard([&] {
        require(corpus_paths, "corpus_paths");
        const auto opts = parse_options(options_json, {"cleanup", "analyzer"});
        const bool cleanup = option(opts, "cleanup", true);
        auto cfg = analyzer_option(opts);
        if (!opts.contains("analyzer") || !opts["analyzer"].contains("max_tokens")) {
            cfg.max_tokens = dr::default_shift_analyzer().max_tokens;
        }
        std::vector<dr::Corpus> corpora;
        std::vector<std::string> names;
        for (size_t i = 0; i < count; ++i) {
            require(corpus_paths[i], "corpus path");
            corpora.push_back(dr::ingest_jsonl(corpus_paths[i], cleanup));
            names.emplace_back(labels != nullptr && labels[i] != nullptr
                                   ? labels[i]
                                   : std::filesystem::path(corpus_paths[i]).stem().string());
        }
        const auto report = dr::shift_report(corpora, names, cfg);
        if (json_out != nullptr) {
            *json_out = dup_string(report.to_json().dump(2));
        }
        if (table_out != nullptr) {
            *table_out = dup_string(report.to_table());
        }
    });
}

dr_status dr_pipeline_validate(const char* config_path, const char* overrides_json, char** findings_json) {
    return guard([&] {
        require(findings_json, "findings_json");
        const auto cfg = load_pipeline_config(config_path, overrides_json);
        *findings_json = dup_string(json(dr::validate_config(cfg)).dump());
    });
}

dr_status dr_pipeline_run(const char* config_path, const char* overrides_json, char** summary_json) {
    return guard([&] {
        const auto cfg = load_pipeline_config(config_path, overrides_json);
        const auto result = dr::run_pipeline(cfg);
        if (summary_json != nullptr) {
            std::size_t calls = 0;
            std::size_t failures = 0;
            for (const auto& q : result.trace.queries) {
                for (const auto& s : q.stages) {
                    calls += s.scorer_calls;
                    failures += s.failures;
                }
            }
            json outputs = json::object();
            if (!cfg.output.trec_run.empty()) {
                outputs["trec_run"] = cfg.resolve(cfg.output.trec_run).string();
            }
            if (!cfg.output.jsonl.empty()) {
                outputs["jsonl"] = cfg.resolve(cfg.output.jsonl).string();
            }
            if (!cfg.output.trace.empty()) {
                outputs["trace"] = cfg.resolve(cfg.output.trace).string();
            }
            const json summary = {{"queries", result.runs.size()},
                                  {"strategy", cfg.rerank.strategy},
                                  {"scorer_calls", calls},
                                  {"scorer_failures", failures},
                                  {"outputs", outputs}};
            *summary_json = dup_string(summary.dump());
        }
    });
}

} // extern "C"
