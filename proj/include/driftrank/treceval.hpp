#pragma once

#include "driftrank/ranked_list.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace driftrank {

/// Graded judgments keyed by (query, document). Grades are non-negative;
/// binary relevance is grade > 0.
class QrelSet {
public:
    void set(const std::string& query_id, const std::string& doc_id, int grade);

    bool contains(std::string_view query_id) const;
    std::optional<int> grade(std::string_view query_id, std::string_view doc_id) const;
    /// Nullptr when the query has no judgments.
    const std::map<std::string, int, std::less<>>* judgments(std::string_view query_id) const;
    std::size_t relevant_count(std::string_view query_id) const;
    std::vector<std::string> query_ids() const;
    std::size_t size() const noexcept { return grades_.size(); }

    /// "qid 0 docid grade", whitespace separated.
    static QrelSet load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    std::map<std::string, std::map<std::string, int, std::less<>>, std::less<>> grades_;
};

struct RunDoc {
    std::string doc_id;
    std::optional<std::string> doc;
    double score = 0.0;
    std::optional<int> grade;

    bool operator==(const RunDoc&) const = default;
};

/// One line of the JSONL diagnostic log: everything known about one query's
/// results at one stage.
struct RunRecord {
    std::string query_id;
    std::string query;
    std::vector<RunDoc> docs;

    bool operator==(const RunRecord&) const = default;
};

nlohmann::json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::json& obj);

void write_run_jsonl(const std::vector<RunRecord>& records, const std::filesystem::path& path);
std::vector<RunRecord> read_run_jsonl(const std::filesystem::path& path);

/// Fills RunDoc::grade from qrels where a judgment exists.
void attach_grades(std::vector<RunRecord>& records, const QrelSet& qrels);

/// Shortest decimal form that parses back to the same double.
std::string format_score(double score);

inline constexpr std::size_t kTrecRunDepth = 1000;

/// "qid Q0 docid rank score tag"; lists deeper than 1000 are truncated with a
/// warning.
void write_trec_run(const std::vector<RankedList>& runs, std::string_view tag,
                    const std::filesystem::path& path);
std::string format_trec_run(const std::vector<RankedList>& runs, std::string_view tag);
/// Queries in first-appearance order, entries ordered by rank.
std::vector<RankedList> read_trec_run(const std::filesystem::path& path);

namespace trec {

// Metrics follow trec_eval's *_cut measures over the list in its rank order.
// nullopt means the query is skipped: no judgments or no relevant document.
std::optional<double> ndcg_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k);
std::optional<double> map_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k);
std::optional<double> precision_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k);
std::optional<double> recall_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k);

} // namespace trec

enum class MetricKind { NDCG, MAP, Precision, Recall };

struct MetricSpec {
    MetricKind kind = MetricKind::NDCG;
    std::size_t k = 10;

    /// "ndcg@10", "map@100", "P@10", "recall@all" (@all is @1000).
    static MetricSpec parse(std::string_view text);
    std::string name() const;

    bool operator==(const MetricSpec&) const = default;
};

std::vector<MetricSpec> parse_metric_list(std::string_view comma_separated);
std::optional<double> evaluate_metric(const MetricSpec& metric, const RankedList& run,
                                      const QrelSet& qrels);

struct MetricReport {
    std::vector<MetricSpec> metrics;
    /// query id -> one value per metric, for evaluated queries.
    std::map<std::string, std::vector<double>> per_query;
    std::vector<double> mean;
    std::vector<std::string> skipped_unjudged;
    std::vector<std::string> skipped_no_relevant;

    std::size_t evaluated() const noexcept { return per_query.size(); }
    std::optional<double> mean_of(const MetricSpec& metric) const;
    nlohmann::json to_json() const;
    std::string to_text() const;
};

MetricReport evaluate(const std::vector<RankedList>& runs, const QrelSet& qrels,
                      const std::vector<MetricSpec>& metrics);

/// Reads a TREC run (or a JSONL run-record file, detected by a leading '{')
/// and qrels, and evaluates.
MetricReport proxy_evaluate(const std::filesystem::path& run_path,
                            const std::filesystem::path& qrels_path,
                            const std::vector<MetricSpec>& metrics);

/// Ranked lists from JSONL records, in record order.
std::vector<RankedList> ranked_lists_from_records(const std::vector<RunRecord>& records);

} // namespace driftrank
