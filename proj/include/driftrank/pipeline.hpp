#pragma once

#include "driftrank/bm25.hpp"
#include "driftrank/rerank.hpp"
#include "driftrank/textcorpus.hpp"
#include "driftrank/treceval.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace driftrank {

/// Versioned JSON config. Relative paths resolve against base_dir (the
/// directory of the config file).
struct PipelineConfig {
    static constexpr int kVersion = 1;

    std::filesystem::path base_dir;
    std::string corpus;
    std::string queries;
    std::string qrels; // optional; fills grades in the JSONL records
    bool cleanup = true;
    AnalyzerConfig analyzer;

    struct FirstStage {
        std::string retriever = "bm25"; // bm25 | dense
        std::size_t k = 1000;
        BM25Params bm25;
    } first_stage;

    struct SecondStage {
        bool enabled = true;
        std::string endpoint = "builtin:embed=bow,dim=256";
        std::size_t k = 100;
        std::size_t truncate_tokens = 512;
        double fusion_weight = 0.0;
        std::size_t batch_size = 64;
    } second_stage;

    struct Rerank {
        std::string strategy = "none"; // none | pointwise | sliding_window | tournament
        std::string endpoint;
        std::size_t pointwise_k = 30;
        SlidingWindowConfig sliding_window;
        TournamentConfig tournament;
    } rerank;

    struct Backfill {
        bool enabled = true;
        std::size_t depth = kTrecRunDepth;
    } backfill;

    struct Output {
        std::string trec_run;
        std::string jsonl;
        std::string trace;
        bool include_text = false;
    } output;

    std::string tag = "driftrank";
    std::size_t threads = 1;

    /// Throws Error(Config) on unknown keys, wrong types or a bad version.
    static PipelineConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;

    std::filesystem::path resolve(const std::string& path) const;
};

/// DRIFTRANK_EMBED_ENDPOINT and DRIFTRANK_SCORER_ENDPOINT replace the
/// configured endpoints when set and non-empty.
void apply_env_overrides(PipelineConfig& cfg);

/// Every problem found; empty means runnable. File existence is not checked.
std::vector<std::string> validate_config(const PipelineConfig& cfg);

/// Reranked entries, then first-stage entries not yet present, in their
/// original order, cut at depth and renumbered. Backfilled scores continue
/// strictly below the last reranked score.
RankedList backfill(const RankedList& reranked, const RankedList& first_stage, std::size_t depth = kTrecRunDepth);

/// Step used for backfilled scores.
inline constexpr double kBackfillEpsilon = 1e-4;

/// Nudges any score that is not below its predecessor to just under it.
void make_strictly_decreasing(RankedList& list);

struct StageSnapshot {
    std::string stage;
    std::vector<std::string> doc_ids;
    double elapsed_ms = 0.0;
    std::size_t scorer_calls = 0;
    std::size_t failures = 0;
};

struct QueryTrace {
    std::string query_id;
    std::vector<StageSnapshot> stages;
};

struct StageTrace {
    std::vector<QueryTrace> queries;

    nlohmann::json to_json() const;
};

struct PipelineResult {
    std::vector<RankedList> runs;
    std::vector<RunRecord> records;
    StageTrace trace;
};

/// Runs all stages and writes whichever outputs are configured. Throws
/// Error(Config) for an invalid config and Error(Stage) naming the stage and
/// query when a stage fails.
PipelineResult run_pipeline(const PipelineConfig& cfg);

} // namespace driftrank
