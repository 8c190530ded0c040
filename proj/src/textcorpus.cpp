#include "driftrank/textcorpus.hpp"

#include "driftrank/error.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace driftrank {

using nlohmann::json;

Corpus::Corpus(std::vector<Document> docs, std::string source_path)
    : docs_(std::move(docs)), source_path_(std::move(source_path)) {
    by_id_.reserve(docs_.size());
    for (std::size_t i = 0; i < docs_.size(); ++i) {
        if (docs_[i].id.empty()) {
            fail(ErrorKind::Parse, "document with empty id at position " + std::to_string(i + 1));
        }
        if (!by_id_.emplace(docs_[i].id, i).second) {
            fail(ErrorKind::Parse, "duplicate document id '" + docs_[i].id + "'");
        }
    }
}

const Document* Corpus::find(std::string_view id) const {
    const auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document& Corpus::at(std::string_view id) const {
    if (const auto* doc = find(id)) {
        return *doc;
    }
    fail(ErrorKind::InvalidArgument, "unknown document id '" + std::string(id) + "'");
}

std::string AnalyzerConfig::canonical() const {
    std::ostringstream os;
    os << "lc=" << lowercase << ";fold=" << ascii_fold << ";stem=" << (stem ? "porter" : "none")
       << ";stop=" << stopwords << ";max=";
    if (max_tokens) {
        os << *max_tokens;
    } else {
        os << "none";
    }
    return os.str();
}

std::uint64_t AnalyzerConfig::hash() const {
    // FNV-1a over the canonical form.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : canonical()) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

Corpus ingest_jsonl(const std::filesystem::path& path, bool apply_cleanup) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open corpus file " + path.string());
    }
    std::vector<Document> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                       ": malformed JSON (" + e.what() + ")");
        }
        if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() ||
            !obj.contains("text") || !obj["text"].is_string()) {
            fail(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) +
                                       ": expected string fields \"id\" and \"text\"");
        }
        Document doc;
        doc.id = obj["id"].get<std::string>();
        std::string raw = obj["text"].get<std::string>();
        doc.original_byte_len = raw.size();
        doc.original_char_len = utf8_length(raw);
        doc.text = apply_cleanup ? clean_text(raw) : std::move(raw);
        doc.byte_len = doc.text.size();
        doc.char_len = utf8_length(doc.text);
        docs.push_back(std::move(doc));
    }
    return Corpus(std::move(docs), path.string());
}

void write_jsonl(const Corpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        fail(ErrorKind::Io, "cannot write " + path.string());
    }
    for (const auto& doc : corpus) {
        out << json{{"id", doc.id}, {"text", doc.text}}.dump() << '\n';
    }
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        fail(ErrorKind::Io, "cannot open query file " + path.string());
    }
    std::vector<Query> queries;
    std::string line;
    std::size_t line_no = 0;
    std::optional<bool> jsonl;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (!jsonl) {
            jsonl = line.front() == '{';
        }
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (*jsonl) {
            json obj;
            try {
                obj = json::parse(line);
            } catch (const json::parse_error& e) {
                fail(ErrorKind::Parse, where + ": malformed JSON (" + e.what() + ")");
            }
            if (!obj.is_object() || !obj.contains("id") || !obj["id"].is_string() ||
                !obj.contains("text") || !obj["text"].is_string()) {
                fail(ErrorKind::Parse, where + ": expected string fields \"id\" and \"text\"");
            }
            queries.push_back({obj["id"].get<std::string>(), obj["text"].get<std::string>()});
        } else {
            const auto tab = line.find('\t');
            if (tab == std::string::npos || tab == 0) {
                fail(ErrorKind::Parse, where + ": expected \"qid<TAB>text\"");
            }
            queries.push_back({line.substr(0, tab), line.substr(tab + 1)});
        }
    }
    return queries;
}

CleanupReport cleanup_report(const Corpus& before, const Corpus& after) {
    if (before.size() != after.size()) {
        fail(ErrorKind::InvalidArgument, "cleanup report: corpora differ in size (" +
                                             std::to_string(before.size()) + " vs " +
                                             std::to_string(after.size()) + ")");
    }
    CleanupReport report;
    report.doc_count = before.size();
    for (const auto& doc : before) {
        const auto* other = after.find(doc.id);
        if (other == nullptr) {
            fail(ErrorKind::InvalidArgument,
                 "cleanup report: document '" + doc.id + "' missing from cleaned corpus");
        }
        report.bytes_before += doc.byte_len;
        report.chars_before += doc.char_len;
        report.bytes_after += other->byte_len;
        report.chars_after += other->char_len;
    }
    const auto percent = [](std::size_t b, std::size_t a) {
        return b == 0 ? 0.0 : 100.0 * (1.0 - static_cast<double>(a) / static_cast<double>(b));
    };
    report.byte_reduction_percent = percent(report.bytes_before, report.bytes_after);
    report.char_reduction_percent = percent(report.chars_before, report.chars_after);
    return report;
}

} // namespace driftrank
