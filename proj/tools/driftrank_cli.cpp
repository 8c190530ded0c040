// driftrank command line. Talks to the library only through the C API.
#include "driftrank/driftrank.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;

struct Failure {
    dr_status status;
    std::string message;
};

int exit_code(dr_status status) {
    return status == DR_ERR_CONFIG || status == DR_ERR_INVALID_ARGUMENT ? kExitConfig : kExitStage;
}

void check(dr_status status) {
    if (status != DR_OK) {
        throw Failure{status, dr_last_error()};
    }
}

struct CString {
    char* p = nullptr;
    ~CString() { dr_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

template <typename T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
    ~Handle() { Free(p); }
};

using Corpus = Handle<dr_corpus, dr_corpus_free>;
using Queries = Handle<dr_queries, dr_queries_free>;
using Index = Handle<dr_index, dr_index_free>;
using Run = Handle<dr_run, dr_run_free>;

std::string env_or(const char* name, std::string fallback) {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? std::string(v) : fallback;
}

void write_or_print(const std::string& text, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << text;
        if (!text.empty() && text.back() != '\n') {
            std::cout << '\n';
        }
        return;
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (f == nullptr) {
        throw Failure{DR_ERR_IO, "cannot write " + path};
    }
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
}

struct AnalyzerFlags {
    bool no_lowercase = false;
    bool no_fold = false;
    bool no_stem = false;
    bool stopwords = false;
    std::optional<std::size_t> max_tokens;

    void attach(CLI::App* app) {
        app->add_flag("--no-lowercase", no_lowercase, "Keep case");
        app->add_flag("--no-fold", no_fold, "Skip ASCII folding");
        app->add_flag("--no-stem", no_stem, "Skip Porter stemming");
        app->add_flag("--stopwords", stopwords, "Drop English stopwords");
        app->add_option("--max-tokens", max_tokens, "Keep only the first N tokens per document");
    }

    json to_json() const {
        json a = {{"lowercase", !no_lowercase}, {"ascii_fold", !no_fold}, {"stem", !no_stem}, {"stopwords", stopwords}};
        if (max_tokens) {
            a["max_tokens"] = *max_tokens;
        }
        return a;
    }
};

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"driftrank: multi-stage retrieval, reranking and evaluation"};
    app.set_version_flag("--version", std::string(dr_version()));
    app.require_subcommand(1);

    // clean
    auto* clean = app.add_subcommand("clean", "Clean a JSONL corpus (or a single --text string)");
    std::string clean_in, clean_out, clean_text, clean_report;
    clean->add_option("--input,-i", clean_in, "Corpus JSONL");
    clean->add_option("--output,-o", clean_out, "Cleaned corpus JSONL (default stdout)");
    clean->add_option("--text", clean_text, "Clean this string and print it");
    clean->add_option("--report", clean_report, "Write the size-reduction report (JSON) here; '-' for stdout");

    // index
    auto* index = app.add_subcommand("index", "BM25 index");
    index->require_subcommand(1);
    auto* index_build = index->add_subcommand("build", "Build an index snapshot");
    std::string ib_corpus, ib_output;
    bool ib_no_cleanup = false;
    double ib_k1 = 0.9, ib_b = 0.4;
    AnalyzerFlags ib_analyzer;
    index_build->add_option("--corpus,-c", ib_corpus, "Corpus JSONL")->required();
    index_build->add_option("--output,-o", ib_output, "Snapshot path")->required();
    index_build->add_flag("--no-cleanup", ib_no_cleanup, "Index raw text");
    index_build->add_option("--k1", ib_k1, "BM25 k1")->capture_default_str();
    index_build->add_option("--b", ib_b, "BM25 b")->capture_default_str();
    ib_analyzer.attach(index_build);

    auto* index_search = index->add_subcommand("search", "Search an index snapshot");
    std::string is_index, is_queries, is_output = "-", is_tag = "driftrank", is_jsonl;
    std::size_t is_k = 1000;
    std::optional<double> is_k1, is_b;
    index_search->add_option("--index", is_index, "Snapshot path")->required();
    index_search->add_option("--queries,-q", is_queries, "Queries (TSV or JSONL)")->required();
    index_search->add_option("--k", is_k, "Depth")->capture_default_str();
    index_search->add_option("--k1", is_k1, "Override BM25 k1");
    index_search->add_option("--b", is_b, "Override BM25 b");
    index_search->add_option("--output,-o", is_output, "TREC run path (default stdout)");
    index_search->add_option("--jsonl", is_jsonl, "Also write JSONL run records");
    index_search->add_option("--tag", is_tag, "Run tag")->capture_default_str();

    // dense
    auto* dense = app.add_subcommand("dense", "Dense rescoring");
    dense->require_subcommand(1);
    auto* dense_rescore = dense->add_subcommand("rescore", "Rescore a run by embedding dot product");
    std::string dr_run_path, dr_queries, dr_corpus_path, dr_output = "-", dr_tag = "driftrank", dr_endpoint;
    std::size_t dr_k = 100, dr_truncate = 512, dr_batch = 64;
    double dr_fusion = 0.0;
    bool dr_no_cleanup = false;
    dense_rescore->add_option("--run,-r", dr_run_path, "Candidate run (TREC or JSONL)")->required();
    dense_rescore->add_option("--queries,-q", dr_queries, "Queries")->required();
    dense_rescore->add_option("--corpus,-c", dr_corpus_path, "Corpus JSONL")->required();
    dense_rescore->add_option("--endpoint", dr_endpoint, "Embedding endpoint (env DRIFTRANK_EMBED_ENDPOINT)");
    dense_rescore->add_option("--k", dr_k, "Keep top k")->capture_default_str();
    dense_rescore->add_option("--truncate-tokens", dr_truncate, "Tokens per text")->capture_default_str();
    dense_rescore->add_option("--batch-size", dr_batch, "Texts per request")->capture_default_str();
    dense_rescore->add_option("--fusion-weight", dr_fusion, "Weight of the incoming score")->capture_default_str();
    dense_rescore->add_flag("--no-cleanup", dr_no_cleanup, "Use raw document text");
    dense_rescore->add_option("--output,-o", dr_output, "TREC run path (default stdout)");
    dense_rescore->add_option("--tag", dr_tag, "Run tag")->capture_default_str();

    // rerank
    auto* rerank = app.add_subcommand("rerank", "Rerank a run with a pointwise or listwise scorer");
    std::string rr_run, rr_queries, rr_corpus, rr_output = "-", rr_tag = "driftrank", rr_endpoint, rr_stats;
    std::string rr_strategy = "tournament";
    std::size_t rr_depth = 100, rr_k = 30, rr_window = 20, rr_stride = 10, rr_passes = 1, rr_match = 5,
                rr_promote = 2, rr_top_k = 10;
    bool rr_no_cleanup = false;
    rerank->add_option("--run,-r", rr_run, "Candidate run (TREC or JSONL)")->required();
    rerank->add_option("--queries,-q", rr_queries, "Queries")->required();
    rerank->add_option("--corpus,-c", rr_corpus, "Corpus JSONL")->required();
    rerank->add_option("--strategy", rr_strategy, "pointwise, sliding_window or tournament")
        ->check(CLI::IsMember({"pointwise", "sliding_window", "tournament"}))
        ->capture_default_str();
    rerank->add_option("--endpoint", rr_endpoint, "Scorer endpoint (env DRIFTRANK_SCORER_ENDPOINT)");
    rerank->add_option("--depth", rr_depth, "Candidates handed to the reranker")->capture_default_str();
    rerank->add_option("--k", rr_k, "Pointwise: documents scored")->capture_default_str();
    rerank->add_option("--window", rr_window, "Sliding window size")->capture_default_str();
    rerank->add_option("--stride", rr_stride, "Sliding window stride")->capture_default_str();
    rerank->add_option("--passes", rr_passes, "Sliding window passes")->capture_default_str();
    rerank->add_option("--match-size", rr_match, "Tournament match size")->capture_default_str();
    rerank->add_option("--promote", rr_promote, "Tournament promotions per match")->capture_default_str();
    rerank->add_option("--top-k", rr_top_k, "Tournament ranks extracted")->capture_default_str();
    rerank->add_flag("--no-cleanup", rr_no_cleanup, "Use raw document text");
    rerank->add_option("--output,-o", rr_output, "TREC run path (default stdout)");
    rerank->add_option("--stats", rr_stats, "Write per-query call counts (JSON) here");
    rerank->add_option("--tag", rr_tag, "Run tag")->capture_default_str();

    // eval
    auto* eval = app.add_subcommand("eval", "Evaluate a run against qrels");
    std::string ev_run, ev_qrels, ev_metrics = "ndcg@10,ndcg@100,map@100,P@10,recall@1000", ev_format = "text";
    eval->add_option("--run,-r", ev_run, "TREC run or JSONL run records")->required();
    eval->add_option("--qrels", ev_qrels, "Qrels file")->required();
    eval->add_option("--metrics,-m", ev_metrics, "Comma list, e.g. ndcg@10,map@all")->capture_default_str();
    eval->add_option("--format", ev_format, "text or json")
        ->check(CLI::IsMember({"text", "json"}))
        ->capture_default_str();

    // shift
    auto* shift = app.add_subcommand("shift", "Corpus distribution shift");
    shift->require_subcommand(1);
    auto* shift_report = shift->add_subcommand("report", "Pairwise IDF Jensen-Shannon divergence");
    std::vector<std::string> sh_corpora, sh_labels;
    std::string sh_format = "both", sh_output;
    bool sh_no_cleanup = false;
    AnalyzerFlags sh_analyzer;
    sh_analyzer.max_tokens = 1024;
    shift_report->add_option("--corpus,-c", sh_corpora, "Corpus JSONL (repeat, at least two)")->required();
    shift_report->add_option("--label", sh_labels, "Label per corpus (repeat)");
    shift_report->add_option("--format", sh_format, "json, table or both")
        ->check(CLI::IsMember({"json", "table", "both"}))
        ->capture_default_str();
    shift_report->add_option("--output,-o", sh_output, "Write the JSON matrix here");
    shift_report->add_flag("--no-cleanup", sh_no_cleanup, "Use raw document text");
    sh_analyzer.attach(shift_report);

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "End-to-end runs");
    pipeline->require_subcommand(1);
    std::string pl_config;
    std::optional<std::string> pl_strategy, pl_tag, pl_trec, pl_jsonl, pl_trace, pl_scorer, pl_embed;
    std::optional<std::size_t> pl_threads, pl_k1st, pl_k2nd, pl_top_k;
    bool pl_no_backfill = false, pl_no_dense = false;
    auto* pipeline_run = pipeline->add_subcommand("run", "Run a pipeline config");
    auto* pipeline_validate = pipeline->add_subcommand("validate", "Check a pipeline config");
    for (auto* sub : {pipeline_run, pipeline_validate}) {
        sub->add_option("--config", pl_config, "Pipeline config (JSON)")->required();
        sub->add_option("--strategy", pl_strategy, "Override rerank.strategy");
        sub->add_option("--tag", pl_tag, "Override the run tag");
        sub->add_option("--trec-run", pl_trec, "Override output.trec_run");
        sub->add_option("--jsonl", pl_jsonl, "Override output.jsonl");
        sub->add_option("--trace", pl_trace, "Override output.trace");
        sub->add_option("--threads", pl_threads, "Worker threads");
        sub->add_option("--first-stage-k", pl_k1st, "Override first_stage.k");
        sub->add_option("--second-stage-k", pl_k2nd, "Override second_stage.k");
        sub->add_option("--top-k", pl_top_k, "Override rerank.tournament.top_k");
        sub->add_option("--scorer-endpoint", pl_scorer, "Override rerank.endpoint");
        sub->add_option("--embed-endpoint", pl_embed, "Override second_stage.endpoint");
        sub->add_flag("--no-backfill", pl_no_backfill, "Disable backfill");
        sub->add_flag("--no-dense", pl_no_dense, "Disable the dense stage");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (clean->parsed()) {
            if (!clean_text.empty()) {
                CString out;
                check(dr_clean_text(clean_text.c_str(), &out.p));
                std::cout << out.str() << '\n';
                return kExitOk;
            }
            if (clean_in.empty()) {
                throw Failure{DR_ERR_CONFIG, "clean needs --input or --text"};
            }
            Corpus cleaned;
            check(dr_corpus_open(clean_in.c_str(), 1, &cleaned.p));
            check(dr_corpus_save(cleaned.p, clean_out.empty() ? "/dev/stdout" : clean_out.c_str()));
            if (!clean_report.empty()) {
                Corpus raw;
                check(dr_corpus_open(clean_in.c_str(), 0, &raw.p));
                CString report;
                check(dr_cleanup_report(raw.p, cleaned.p, &report.p));
                write_or_print(json::parse(report.str()).dump(2), clean_report);
            }
            return kExitOk;
        }

        if (index_build->parsed()) {
            Corpus corpus;
            check(dr_corpus_open(ib_corpus.c_str(), ib_no_cleanup ? 0 : 1, &corpus.p));
            const json opts = {{"k1", ib_k1}, {"b", ib_b}, {"analyzer", ib_analyzer.to_json()}};
            Index idx;
            check(dr_index_build(corpus.p, opts.dump().c_str(), &idx.p));
            check(dr_index_save(idx.p, ib_output.c_str()));
            CString stats;
            check(dr_index_stats(idx.p, &stats.p));
            std::cerr << stats.str() << '\n';
            return kExitOk;
        }

        if (index_search->parsed()) {
            Index idx;
            check(dr_index_load(is_index.c_str(), &idx.p));
            Queries queries;
            check(dr_queries_open(is_queries.c_str(), &queries.p));
            json opts = json::object();
            if (is_k1) {
                opts["k1"] = *is_k1;
            }
            if (is_b) {
                opts["b"] = *is_b;
            }
            Run run;
            check(dr_index_search(idx.p, queries.p, is_k, opts.dump().c_str(), &run.p));
            check(dr_run_save_trec(run.p, is_tag.c_str(), is_output == "-" ? "/dev/stdout" : is_output.c_str()));
            if (!is_jsonl.empty()) {
                check(dr_run_save_jsonl(run.p, queries.p, nullptr, nullptr, is_jsonl.c_str()));
            }
            return kExitOk;
        }

        if (dense_rescore->parsed()) {
            Run in;
            check(dr_run_load(dr_run_path.c_str(), &in.p));
            Queries queries;
            check(dr_queries_open(dr_queries.c_str(), &queries.p));
            Corpus corpus;
            check(dr_corpus_open(dr_corpus_path.c_str(), dr_no_cleanup ? 0 : 1, &corpus.p));
            const auto endpoint = dr_endpoint.empty()
                                      ? env_or("DRIFTRANK_EMBED_ENDPOINT", "builtin:embed=bow,dim=256")
                                      : dr_endpoint;
            const json opts = {{"endpoint", endpoint},
                               {"k", dr_k},
                               {"truncate_tokens", dr_truncate},
                               {"batch_size", dr_batch},
                               {"fusion_weight", dr_fusion}};
            Run out;
            check(dr_dense_rescore(in.p, queries.p, corpus.p, opts.dump().c_str(), &out.p));
            check(dr_run_save_trec(out.p, dr_tag.c_str(), dr_output == "-" ? "/dev/stdout" : dr_output.c_str()));
            return kExitOk;
        }

        if (rerank->parsed()) {
            const auto endpoint = rr_endpoint.empty() ? env_or("DRIFTRANK_SCORER_ENDPOINT", "") : rr_endpoint;
            if (endpoint.empty()) {
                throw Failure{DR_ERR_CONFIG, "rerank needs --endpoint or DRIFTRANK_SCORER_ENDPOINT"};
            }
            Run in;
            check(dr_run_load(rr_run.c_str(), &in.p));
            Queries queries;
            check(dr_queries_open(rr_queries.c_str(), &queries.p));
            Corpus corpus;
            check(dr_corpus_open(rr_corpus.c_str(), rr_no_cleanup ? 0 : 1, &corpus.p));
            const json opts = {{"strategy", rr_strategy}, {"endpoint", endpoint},  {"depth", rr_depth},
                               {"k", rr_k},               {"window", rr_window},   {"stride", rr_stride},
                               {"passes", rr_passes},     {"match_size", rr_match}, {"promote", rr_promote},
                               {"top_k", rr_top_k}};
            Run out;
            CString stats;
            check(dr_rerank(in.p, queries.p, corpus.p, opts.dump().c_str(), &out.p, &stats.p));
            check(dr_run_save_trec(out.p, rr_tag.c_str(), rr_output == "-" ? "/dev/stdout" : rr_output.c_str()));
            if (!rr_stats.empty()) {
                write_or_print(json::parse(stats.str()).dump(2), rr_stats);
            }
            return kExitOk;
        }

        if (eval->parsed()) {
            Run run;
            check(dr_run_load(ev_run.c_str(), &run.p));
            CString report;
            check(dr_evaluate(run.p, ev_qrels.c_str(), ev_metrics.c_str(), ev_format.c_str(), &report.p));
            write_or_print(report.str(), "-");
            return kExitOk;
        }

        if (shift_report->parsed()) {
            if (sh_corpora.size() < 2) {
                throw Failure{DR_ERR_CONFIG, "shift report needs at least two --corpus"};
            }
            if (!sh_labels.empty() && sh_labels.size() != sh_corpora.size()) {
                throw Failure{DR_ERR_CONFIG, "give one --label per --corpus"};
            }
            std::vector<const char*> paths, labels;
            for (const auto& c : sh_corpora) {
                paths.push_back(c.c_str());
            }
            for (const auto& l : sh_labels) {
                labels.push_back(l.c_str());
            }
            const json opts = {{"cleanup", !sh_no_cleanup}, {"analyzer", sh_analyzer.to_json()}};
            CString js, table;
            check(dr_shift_report(paths.data(), labels.empty() ? nullptr : labels.data(), paths.size(),
                                  opts.dump().c_str(), &js.p, &table.p));
            if (!sh_output.empty()) {
                write_or_print(js.str(), sh_output);
            }
            if (sh_format == "json" || sh_format == "both") {
                if (sh_output.empty()) {
                    write_or_print(js.str(), "-");
                }
            }
            if (sh_format == "table" || sh_format == "both") {
                write_or_print(table.str(), "-");
            }
            return kExitOk;
        }

        if (pipeline_run->parsed() || pipeline_validate->parsed()) {
            json overrides = json::object();
            if (pl_strategy) {
                overrides["rerank"]["strategy"] = *pl_strategy;
            }
            if (pl_scorer) {
                overrides["rerank"]["endpoint"] = *pl_scorer;
            }
            if (pl_top_k) {
                overrides["rerank"]["tournament"]["top_k"] = *pl_top_k;
            }
            if (pl_embed) {
                overrides["second_stage"]["endpoint"] = *pl_embed;
            }
            if (pl_k2nd) {
                overrides["second_stage"]["k"] = *pl_k2nd;
            }
            if (pl_no_dense) {
                overrides["second_stage"]["enabled"] = false;
            }
            if (pl_k1st) {
                overrides["first_stage"]["k"] = *pl_k1st;
            }
            if (pl_no_backfill) {
                overrides["backfill"]["enabled"] = false;
            }
            if (pl_tag) {
                overrides["tag"] = *pl_tag;
            }
            if (pl_threads) {
                overrides["threads"] = *pl_threads;
            }
            if (pl_trec) {
                overrides["output"]["trec_run"] = *pl_trec;
            }
            if (pl_jsonl) {
                overrides["output"]["jsonl"] = *pl_jsonl;
            }
            if (pl_trace) {
                overrides["output"]["trace"] = *pl_trace;
            }
            const auto text = overrides.dump();
            if (pipeline_validate->parsed()) {
                CString findings;
                check(dr_pipeline_validate(pl_config.c_str(), text.c_str(), &findings.p));
                const auto list = json::parse(findings.str());
                for (const auto& f : list) {
                    std::cout << f.get<std::string>() << '\n';
                }
                if (!list.empty()) {
                    return kExitConfig;
                }
                std::cout << "ok\n";
                return kExitOk;
            }
            CString summary;
            check(dr_pipeline_run(pl_config.c_str(), text.c_str(), &summary.p));
            std::cerr << summary.str() << '\n';
            return kExitOk;
        }
    } catch (const Failure& f) {
        std::cerr << "driftrank: " << dr_status_name(f.status) << ": " << f.message << '\n';
        return exit_code(f.status);
    } catch (const std::exception& e) {
        std::cerr << "driftrank: " << e.what() << '\n';
        return kExitStage;
    }
    return kExitOk;
}
