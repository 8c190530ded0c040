#include "driftrank/treceval.hpp"

#include "driftrank/error.hpp"
#include "driftrank/log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>

namespace driftrank {

using nlohmann::json;

// ---------------------------------------------------------------------------
// QrelSet

void QrelSet::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) {
        fail(ErrorKind::InvalidArgument, "negative relevance grade for (" + query_id + ", " +
                                             doc_id + ")");
    }
    grades_[query_id][doc_id] = grade;
}

bool QrelSet::contains(std::string_view query_id) const { return grades_.find(query_id) != grades_.end(); }

std::optional<int> QrelSet::grade(std::string_view query_id, std::string_view doc_id) const {
    const auto* j = judgments(query_id);
    if (j == nullptr) {
        return std::nullopt;
    }
    const auto it = j->find(doc_id);
    if (it == j->end()) {
        return std::nullopt;
    }
    return it->second;
}

const std::map<std::string, int, std::less<>>* QrelSet::judgments(std::string_view query_id) const {
    const auto it = grades_.find(query_id);
    return it == grades_.end() ? nullptr : &it->second;
}

std::size_t QrelSet::relevant_count(std::string_view query_id) const {
    const auto* j = judgments(query_id);
    if (j == nullptr) {
        return 0;
    }
    return static_cast<std::size_t>(
        std::count_if(j->begin(), j->end(), [](const auto& kv) { return kv.second > 0; }));
}

std::vector<std::string> QrelSet::query_ids() const {
    std::vector<std::string> ids;
    ids.reserve(grades_.size());
    for (const auto& [qid, _] : grades_) {
        ids.push_back(qid);
    }
    return ids;
}

QrelSet QrelSet::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open qrels file " + path.string());
    }
    QrelSet qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string qid, iteration, docid, grade_text, extra;
        if (!(fields >> qid)) {
            continue;
        }
        if (!(fields >> iteration >> docid >> grade_text) || (fields >> extra)) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                       ": expected \"qid 0 docid grade\"");
        }
        int grade = 0;
        const auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
        if (ec != std::errc() || ptr != grade_text.data() + grade_text.size() || grade < 0) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                       ": grade must be a non-negative integer");
        }
        qrels.set(qid, docid, grade);
    }
    return qrels;
}

void QrelSet::save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, "cannot write " + path.string());
    }
    for (const auto& [qid, docs] : grades_) {
        for (const auto& [docid, grade] : docs) {
            out << qid << " 0 " << docid << ' ' << grade << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// JSONL run records

json to_json(const RunRecord& record) {
    json docs = json::array();
    for (const auto& d : record.docs) {
        json entry = {{"doc_id", d.doc_id}};
        if (d.doc) {
            entry["doc"] = *d.doc;
        }
        entry["score"] = d.score;
        if (d.grade) {
            entry["grade"] = *d.grade;
        }
        docs.push_back(std::move(entry));
    }
    return {{"query_id", record.query_id}, {"query", record.query}, {"docs", std::move(docs)}};
}

RunRecord run_record_from_json(const json& obj) {
    if (!obj.is_object() || !obj.contains("query_id") || !obj["query_id"].is_string() ||
        !obj.contains("docs") || !obj["docs"].is_array()) {
        fail(ErrorKind::Parse, "run record needs \"query_id\" and \"docs\"");
    }
    RunRecord record;
    record.query_id = obj["query_id"].get<std::string>();
    if (obj.contains("query")) {
        record.query = obj["query"].get<std::string>();
    }
    for (const auto& d : obj["docs"]) {
        if (!d.is_object() || !d.contains("doc_id") || !d["doc_id"].is_string() ||
            !d.contains("score") || !d["score"].is_number()) {
            fail(ErrorKind::Parse, "run record doc needs \"doc_id\" and numeric \"score\"");
        }
        RunDoc doc;
        doc.doc_id = d["doc_id"].get<std::string>();
        doc.score = d["score"].get<double>();
        if (d.contains("doc") && !d["doc"].is_null()) {
            doc.doc = d["doc"].get<std::string>();
        }
        if (d.contains("grade") && !d["grade"].is_null()) {
            doc.grade = d["grade"].get<int>();
        }
        record.docs.push_back(std::move(doc));
    }
    return record;
}

void write_run_jsonl(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, "cannot write " + path.string());
    }
    for (const auto& r : records) {
        out << to_json(r).dump() << '\n';
    }
}

std::vector<RunRecord> read_run_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open " + path.string());
    }
    std::vector<RunRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            records.push_back(run_record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const Error& e) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

void attach_grades(std::vector<RunRecord>& records, const QrelSet& qrels) {
    for (auto& r : records) {
        for (auto& d : r.docs) {
            d.grade = qrels.grade(r.query_id, d.doc_id);
        }
    }
}

std::vector<RankedList> ranked_lists_from_records(const std::vector<RunRecord>& records) {
    std::vector<RankedList> lists;
    lists.reserve(records.size());
    for (const auto& r : records) {
        RankedList list{r.query_id, {}};
        for (const auto& d : r.docs) {
            list.entries.push_back({d.doc_id, d.score, list.entries.size() + 1});
        }
        lists.push_back(std::move(list));
    }
    return lists;
}

// ---------------------------------------------------------------------------
// TREC run files

std::string format_score(double score) {
    std::array<char, 64> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), score);
    return std::string(buf.data(), ptr);
}

std::string format_trec_run(const std::vector<RankedList>& runs, std::string_view tag) {
    std::string out;
    for (const auto& list : runs) {
        auto n = list.entries.size();
        if (n > kTrecRunDepth) {
            log_warning("query " + list.query_id + ": " + std::to_string(n) +
                        " entries truncated to " + std::to_string(kTrecRunDepth));
            n = kTrecRunDepth;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const auto& e = list.entries[i];
            out += list.query_id;
            out += " Q0 ";
            out += e.doc_id;
            out += ' ';
            out += std::to_string(i + 1);
            out += ' ';
            out += format_score(e.score);
            out += ' ';
            out += tag;
            out += '\n';
        }
    }
    return out;
}

void write_trec_run(const std::vector<RankedList>& runs, std::string_view tag,
                    const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        fail(ErrorKind::Io, "cannot write " + path.string());
    }
    out << format_trec_run(runs, tag);
}

std::vector<RankedList> read_trec_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open run file " + path.string());
    }
    std::vector<RankedList> runs;
    std::unordered_map<std::string, std::size_t> slot;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream fields(line);
        std::string qid, q0, docid, rank_text, score_text, tag;
        if (!(fields >> qid)) {
            continue;
        }
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (!(fields >> q0 >> docid >> rank_text >> score_text >> tag)) {
            fail(ErrorKind::Parse, where + ": expected \"qid Q0 docid rank score tag\"");
        }
        std::size_t rank = 0;
        double score = 0.0;
        const auto r = std::from_chars(rank_text.data(), rank_text.data() + rank_text.size(), rank);
        const auto s = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
        if (r.ec != std::errc() || s.ec != std::errc() || r.ptr != rank_text.data() + rank_text.size() ||
            s.ptr != score_text.data() + score_text.size()) {
            fail(ErrorKind::Parse, where + ": bad rank or score");
        }
        auto [it, inserted] = slot.emplace(qid, runs.size());
        if (inserted) {
            runs.push_back({qid, {}});
        }
        runs[it->second].entries.push_back({docid, score, rank});
    }
    for (auto& list : runs) {
        std::stable_sort(list.entries.begin(), list.entries.end(),
                         [](const RankedEntry& a, const RankedEntry& b) { return a.rank < b.rank; });
    }
    return runs;
}

// ---------------------------------------------------------------------------
// Metrics

namespace trec {

namespace {

struct Judged {
    const std::map<std::string, int, std::less<>>* grades;
    std::size_t relevant;
};

std::optional<Judged> judged(const RankedList& run, const QrelSet& qrels) {
    const auto* grades = qrels.judgments(run.query_id);
    if (grades == nullptr) {
        return std::nullopt;
    }
    const auto relevant = qrels.relevant_count(run.query_id);
    if (relevant == 0) {
        return std::nullopt;
    }
    return Judged{grades, relevant};
}

int grade_of(const Judged& j, const std::string& doc_id) {
    const auto it = j.grades->find(doc_id);
    return it == j.grades->end() ? 0 : it->second;
}

std::size_t hits_at(const Judged& j, const RankedList& run, std::size_t k) {
    std::size_t hits = 0;
    const auto depth = std::min(k, run.entries.size());
    for (std::size_t i = 0; i < depth; ++i) {
        hits += grade_of(j, run.entries[i].doc_id) > 0 ? 1 : 0;
    }
    return hits;
}

} // namespace

std::optional<double> ndcg_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k) {
    const auto j = judged(run, qrels);
    if (!j) {
        return std::nullopt;
    }
    double dcg = 0.0;
    const auto depth = std::min(k, run.entries.size());
    for (std::size_t i = 0; i < depth; ++i) {
        const int g = grade_of(*j, run.entries[i].doc_id);
        if (g > 0) {
            dcg += static_cast<double>(g) / std::log2(static_cast<double>(i + 2));
        }
    }
    std::vector<int> ideal;
    for (const auto& [_, g] : *j->grades) {
        if (g > 0) {
            ideal.push_back(g);
        }
    }
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
        idcg += static_cast<double>(ideal[i]) / std::log2(static_cast<double>(i + 2));
    }
    return dcg / idcg;
}

std::optional<double> map_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k) {
    const auto j = judged(run, qrels);
    if (!j) {
        return std::nullopt;
    }
    double sum = 0.0;
    std::size_t hits = 0;
    const auto depth = std::min(k, run.entries.size());
    for (std::size_t i = 0; i < depth; ++i) {
        if (grade_of(*j, run.entries[i].doc_id) > 0) {
            ++hits;
            sum += static_cast<double>(hits) / static_cast<double>(i + 1);
        }
    }
    return sum / static_cast<double>(j->relevant);
}

std::optional<double> precision_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k) {
    const auto j = judged(run, qrels);
    if (!j || k == 0) {
        return std::nullopt;
    }
    return static_cast<double>(hits_at(*j, run, k)) / static_cast<double>(k);
}

std::optional<double> recall_at_k(const RankedList& run, const QrelSet& qrels, std::size_t k) {
    const auto j = judged(run, qrels);
    if (!j) {
        return std::nullopt;
    }
    return static_cast<double>(hits_at(*j, run, k)) / static_cast<double>(j->relevant);
}

} // namespace trec

MetricSpec MetricSpec::parse(std::string_view text) {
    const auto at = text.find('@');
    if (at == std::string_view::npos) {
        fail(ErrorKind::InvalidArgument, "metric '" + std::string(text) + "' needs a cutoff, e.g. ndcg@10");
    }
    std::string name(text.substr(0, at));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto cut = text.substr(at + 1);
    MetricSpec spec;
    if (name == "ndcg" || name == "ndcg_cut") {
        spec.kind = MetricKind::NDCG;
    } else if (name == "map" || name == "map_cut") {
        spec.kind = MetricKind::MAP;
    } else if (name == "p" || name == "precision") {
        spec.kind = MetricKind::Precision;
    } else if (name == "recall" || name == "r") {
        spec.kind = MetricKind::Recall;
    } else {
        fail(ErrorKind::InvalidArgument, "unknown metric '" + std::string(text) + "'");
    }
    if (cut == "all") {
        spec.k = kTrecRunDepth;
    } else {
        const auto [ptr, ec] = std::from_chars(cut.data(), cut.data() + cut.size(), spec.k);
        if (ec != std::errc() || ptr != cut.data() + cut.size() || spec.k == 0) {
            fail(ErrorKind::InvalidArgument, "bad cutoff in metric '" + std::string(text) + "'");
        }
    }
    return spec;
}

std::string MetricSpec::name() const {
    switch (kind) {
    case MetricKind::NDCG:
        return "ndcg@" + std::to_string(k);
    case MetricKind::MAP:
        return "map@" + std::to_string(k);
    case MetricKind::Precision:
        return "P@" + std::to_string(k);
    case MetricKind::Recall:
        return "recall@" + std::to_string(k);
    }
    return "?";
}

std::vector<MetricSpec> parse_metric_list(std::string_view comma_separated) {
    std::vector<MetricSpec> specs;
    std::size_t start = 0;
    while (start <= comma_separated.size()) {
        auto end = comma_separated.find(',', start);
        if (end == std::string_view::npos) {
            end = comma_separated.size();
        }
        auto item = comma_separated.substr(start, end - start);
        while (!item.empty() && item.front() == ' ') {
            item.remove_prefix(1);
        }
        while (!item.empty() && item.back() == ' ') {
            item.remove_suffix(1);
        }
        if (!item.empty()) {
            specs.push_back(MetricSpec::parse(item));
        }
        start = end + 1;
    }
    return specs;
}

std::optional<double> evaluate_metric(const MetricSpec& metric, const RankedList& run,
                                      const QrelSet& qrels) {
    switch (metric.kind) {
    case MetricKind::NDCG:
        return trec::ndcg_at_k(run, qrels, metric.k);
    case MetricKind::MAP:
        return trec::map_at_k(run, qrels, metric.k);
    case MetricKind::Precision:
        return trec::precision_at_k(run, qrels, metric.k);
    case MetricKind::Recall:
        return trec::recall_at_k(run, qrels, metric.k);
    }
    return std::nullopt;
}

std::optional<double> MetricReport::mean_of(const MetricSpec& metric) const {
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        if (metrics[i] == metric) {
            return mean[i];
        }
    }
    return std::nullopt;
}

json MetricReport::to_json() const {
    json out;
    json names = json::array();
    for (const auto& m : metrics) {
        names.push_back(m.name());
    }
    out["metrics"] = names;
    json means = json::object();
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        means[metrics[i].name()] = mean[i];
    }
    out["mean"] = means;
    json per = json::object();
    for (const auto& [qid, values] : per_query) {
        json row = json::object();
        for (std::size_t i = 0; i < metrics.size(); ++i) {
            row[metrics[i].name()] = values[i];
        }
        per[qid] = row;
    }
    out["per_query"] = per;
    out["evaluated"] = evaluated();
    out["skipped_unjudged"] = skipped_unjudged;
    out["skipped_no_relevant"] = skipped_no_relevant;
    return out;
}

std::string MetricReport::to_text() const {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4);
    for (std::size_t i = 0; i < metrics.size(); ++i) {
        const auto name = metrics[i].name();
        for (const auto& [qid, values] : per_query) {
            os << std::left << std::setw(14) << name << '\t' << qid << '\t' << values[i] << '\n';
        }
        os << std::left << std::setw(14) << name << "\tall\t" << mean[i] << '\n';
    }
    os << "evaluated\t" << evaluated() << "\nskipped_unjudged\t" << skipped_unjudged.size()
       << "\nskipped_no_relevant\t" << skipped_no_relevant.size() << '\n';
    return os.str();
}

MetricReport evaluate(const std::vector<RankedList>& runs, const QrelSet& qrels,
                      const std::vector<MetricSpec>& metrics) {
    MetricReport report;
    report.metrics = metrics;
    report.mean.assign(metrics.size(), 0.0);
    std::set<std::string> seen;
    for (const auto& run : runs) {
        if (!seen.insert(run.query_id).second) {
            fail(ErrorKind::InvalidArgument, "query " + run.query_id + " appears twice in the run");
        }
        if (!qrels.contains(run.query_id)) {
            report.skipped_unjudged.push_back(run.query_id);
            continue;
        }
        if (qrels.relevant_count(run.query_id) == 0) {
            report.skipped_no_relevant.push_back(run.query_id);
            continue;
        }
        std::vector<double> values;
        values.reserve(metrics.size());
        for (const auto& m : metrics) {
            values.push_back(*evaluate_metric(m, run, qrels));
        }
        report.per_query.emplace(run.query_id, std::move(values));
    }
    if (!report.per_query.empty()) {
        for (const auto& [_, values] : report.per_query) {
            for (std::size_t i = 0; i < metrics.size(); ++i) {
                report.mean[i] += values[i];
            }
        }
        for (auto& m : report.mean) {
            m /= static_cast<double>(report.per_query.size());
        }
    }
    return report;
}

MetricReport proxy_evaluate(const std::filesystem::path& run_path,
                            const std::filesystem::path& qrels_path,
                            const std::vector<MetricSpec>& metrics) {
    std::ifstream probe(run_path);
    if (!probe) {
        fail(ErrorKind::Io, "cannot open run file " + run_path.string());
    }
    char first = 0;
    probe >> first;
    probe.close();
    const auto runs = first == '{' ? ranked_lists_from_records(read_run_jsonl(run_path))
                                   : read_trec_run(run_path);
    const auto qrels = QrelSet::load(qrels_path);
    return evaluate(runs, qrels, metrics);
}

} // namespace driftrank
