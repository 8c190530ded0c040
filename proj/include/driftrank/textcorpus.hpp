#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace driftrank {

struct Document {
    std::string id;
    std::string text;
    std::size_t byte_len = 0;
    std::size_t char_len = 0;
    // Lengths of the text as read from disk, before any cleanup.
    std::size_t original_byte_len = 0;
    std::size_t original_char_len = 0;
};

struct Query {
    std::string id;
    std::string text;
};

/// Immutable after ingestion. Iteration order is file order.
class Corpus {
public:
    Corpus() = default;
    Corpus(std::vector<Document> docs, std::string source_path);

    const std::vector<Document>& documents() const noexcept { return docs_; }
    const std::string& source_path() const noexcept { return source_path_; }
    std::size_t size() const noexcept { return docs_.size(); }
    bool empty() const noexcept { return docs_.empty(); }

    const Document* find(std::string_view id) const;
    const Document& at(std::string_view id) const;

    auto begin() const { return docs_.begin(); }
    auto end() const { return docs_.end(); }

private:
    std::vector<Document> docs_;
    std::string source_path_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

struct AnalyzerConfig {
    bool lowercase = true;
    bool ascii_fold = true;
    bool stem = true;
    bool stopwords = false;
    std::optional<std::size_t> max_tokens;

    /// Canonical text form, e.g. "lc=1;fold=1;stem=porter;stop=0;max=none".
    std::string canonical() const;
    std::uint64_t hash() const;

    bool operator==(const AnalyzerConfig&) const = default;
};

struct CleanupReport {
    std::size_t doc_count = 0;
    std::size_t bytes_before = 0;
    std::size_t bytes_after = 0;
    std::size_t chars_before = 0;
    std::size_t chars_after = 0;
    double byte_reduction_percent = 0.0;
    double char_reduction_percent = 0.0;
};

/// Document cleanup: HTML tags, unicode repair and normalization, ASCII
/// transliteration, URL/email/phone removal, line-break and whitespace
/// collapsing. Total and idempotent.
std::string clean_text(std::string_view raw);

/// Replaces invalid UTF-8 sequences by dropping the offending bytes.
std::string repair_utf8(std::string_view raw);
std::size_t utf8_length(std::string_view text);

/// UTF-8 repair, NFKC and transliteration to printable ASCII (plus whitespace).
std::string fold_to_ascii(std::string_view text);

Corpus ingest_jsonl(const std::filesystem::path& path, bool apply_cleanup);
void write_jsonl(const Corpus& corpus, const std::filesystem::path& path);

/// TSV "qid<TAB>text" or JSONL with "id"/"text"; chosen by the first byte.
std::vector<Query> load_queries(const std::filesystem::path& path);

CleanupReport cleanup_report(const Corpus& before, const Corpus& after);

std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& cfg);

/// Porter (1980) suffix stripping on a lowercase ASCII word.
std::string porter_stem(std::string_view word);

bool is_stopword(std::string_view token);

} // namespace driftrank
