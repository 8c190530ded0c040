#include "driftrank/textcorpus.hpp"

#include <algorithm>
#include <array>

namespace driftrank {

namespace {

// Lucene's default English stop set.
constexpr std::array<std::string_view, 33> kStopwords = {
    "a",    "an",   "and",   "are",  "as",    "at",   "be",    "but",  "by",
    "for",  "if",   "in",    "into", "is",    "it",   "no",    "not",  "of",
    "on",   "or",   "such",  "that", "the",   "their", "then", "there", "these",
    "they", "this", "to",    "was",  "will",  "with",
};

bool is_word_byte(char c, bool allow_high) {
    const auto b = static_cast<unsigned char>(c);
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (allow_high && b >= 0x80);
}

bool all_lower_alpha(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
    }
    return out;
}

} // namespace

bool is_stopword(std::string_view token) {
    return std::find(kStopwords.begin(), kStopwords.end(), token) != kStopwords.end();
}

std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& cfg) {
    std::string folded;
    if (cfg.ascii_fold) {
        folded = fold_to_ascii(text);
        text = folded;
    }
    std::vector<std::string> tokens;
    const bool high = !cfg.ascii_fold;
    std::size_t i = 0;
    while (i < text.size()) {
        if (cfg.max_tokens && tokens.size() >= *cfg.max_tokens) {
            break;
        }
        if (!is_word_byte(text[i], high)) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && is_word_byte(text[j], high)) {
            ++j;
        }
        std::string token(text.substr(i, j - i));
        i = j;
        if (cfg.lowercase) {
            token = to_lower_ascii(token);
        }
        if (cfg.stopwords && is_stopword(to_lower_ascii(token))) {
            continue;
        }
        if (cfg.stem && all_lower_alpha(token)) {
            token = porter_stem(token);
        }
        tokens.push_back(std::move(token));
    }
    return tokens;
}

} // namespace driftrank
