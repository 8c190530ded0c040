/* C interface to the driftrank retrieval library.
 *
 * Objects are opaque handles released with their *_free function. Calls
 * return DR_OK or an error code; dr_last_error() then describes the failure
 * on the calling thread. Strings returned through char** are owned by the
 * caller and released with dr_string_free(). Options are JSON objects given
 * as strings; NULL or "" means all defaults.
 */
#ifndef DRIFTRANK_DRIFTRANK_H
#define DRIFTRANK_DRIFTRANK_H

#include <stddef.h>

#if defined(_WIN32)
#define DR_API __declspec(dllexport)
#else
#define DR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dr_status {
    DR_OK = 0,
    DR_ERR_INVALID_ARGUMENT = 1,
    DR_ERR_IO = 2,
    DR_ERR_PARSE = 3,
    DR_ERR_CONFIG = 4,
    DR_ERR_STAGE = 5,
    DR_ERR_PROVIDER = 6,
    DR_ERR_INTERNAL = 7
} dr_status;

typedef struct dr_corpus dr_corpus;
typedef struct dr_queries dr_queries;
typedef struct dr_index dr_index;
typedef struct dr_run dr_run;

DR_API const char* dr_version(void);
/* Message for the last failed call on this thread; "" if none. */
DR_API const char* dr_last_error(void);
DR_API const char* dr_status_name(dr_status status);
DR_API void dr_string_free(char* s);

/* Text cleanup */
DR_API dr_status dr_clean_text(const char* raw, char** out);

/* Corpora: JSONL with "id" and "text" per line. */
DR_API dr_status dr_corpus_open(const char* path, int cleanup, dr_corpus** out);
DR_API dr_status dr_corpus_save(const dr_corpus* corpus, const char* path);
DR_API size_t dr_corpus_size(const dr_corpus* corpus);
DR_API void dr_corpus_free(dr_corpus* corpus);
/* Byte and character reduction between two versions of one corpus. */
DR_API dr_status dr_cleanup_report(const dr_corpus* before, const dr_corpus* after, char** json_out);

/* Queries: TSV "qid<TAB>text" or JSONL with "id" and "text". */
DR_API dr_status dr_queries_open(const char* path, dr_queries** out);
DR_API size_t dr_queries_size(const dr_queries* queries);
DR_API void dr_queries_free(dr_queries* queries);

/* BM25 index. Options: {"k1","b","analyzer":{lowercase,ascii_fold,stem,stopwords,max_tokens}} */
DR_API dr_status dr_index_build(const dr_corpus* corpus, const char* options_json, dr_index** out);
DR_API dr_status dr_index_save(const dr_index* index, const char* path);
DR_API dr_status dr_index_load(const char* path, dr_index** out);
DR_API dr_status dr_index_stats(const dr_index* index, char** json_out);
DR_API void dr_index_free(dr_index* index);
/* Top-k per query. Options: {"k1","b"} override the index parameters. */
DR_API dr_status dr_index_search(const dr_index* index, const dr_queries* queries, size_t k,
                                 const char* options_json, dr_run** out);

/* Runs: per-query ranked lists. Loading accepts TREC run files and JSONL
 * run records (detected by a leading '{'). */
DR_API dr_status dr_run_load(const char* path, dr_run** out);
DR_API dr_status dr_run_save_trec(const dr_run* run, const char* tag, const char* path);
/* queries and corpus may be NULL; with a corpus, document text is included. */
DR_API dr_status dr_run_save_jsonl(const dr_run* run, const dr_queries* queries, const dr_corpus* corpus,
                                   const char* qrels_path, const char* path);
DR_API size_t dr_run_query_count(const dr_run* run);
DR_API void dr_run_free(dr_run* run);

/* Dense rescoring. Options: {"endpoint","k","truncate_tokens","fusion_weight","batch_size"} */
DR_API dr_status dr_dense_rescore(const dr_run* candidates, const dr_queries* queries, const dr_corpus* corpus,
                                  const char* options_json, dr_run** out);

/* Reranking. Options: {"strategy": "pointwise"|"sliding_window"|"tournament", "endpoint", "depth",
 * "k", "window", "stride", "passes", "match_size", "promote", "top_k"}.
 * stats_json (may be NULL) receives per-query call and failure counts. */
DR_API dr_status dr_rerank(const dr_run* candidates, const dr_queries* queries, const dr_corpus* corpus,
                           const char* options_json, dr_run** out, char** stats_json);

/* Evaluation. metrics: comma list such as "ndcg@10,map@100,P@10,recall@1000".
 * format: "json" or "text". */
DR_API dr_status dr_evaluate(const dr_run* run, const char* qrels_path, const char* metrics, const char* format,
                             char** out);

/* Corpus shift. Options: {"cleanup": bool, "analyzer": {...}} */
DR_API dr_status dr_shift_report(const char* const* corpus_paths, const char* const* labels, size_t count,
                                 const char* options_json, char** json_out, char** table_out);

/* Pipeline. overrides_json is merged over the config file before the
 * environment overrides apply. */
DR_API dr_status dr_pipeline_validate(const char* config_path, const char* overrides_json, char** findings_json);
DR_API dr_status dr_pipeline_run(const char* config_path, const char* overrides_json, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif /* DRIFTRANK_DRIFTRANK_H */
