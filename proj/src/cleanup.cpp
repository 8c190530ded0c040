#include "driftrank/textcorpus.hpp"

#include <unicode/normalizer2.h>
#include <unicode/translit.h>
#include <unicode/unistr.h>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <utility>

namespace driftrank {

namespace {

// ---------------------------------------------------------------------------
// UTF-8 helpers

struct Decoded {
    char32_t cp;
    std::size_t len; // 0 when the sequence is invalid
};

Decoded decode_one(std::string_view s, std::size_t i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        return {b0, 1};
    }
    std::size_t need;
    char32_t cp;
    char32_t min;
    if ((b0 & 0xE0) == 0xC0) {
        need = 2, cp = b0 & 0x1F, min = 0x80;
    } else if ((b0 & 0xF0) == 0xE0) {
        need = 3, cp = b0 & 0x0F, min = 0x800;
    } else if ((b0 & 0xF8) == 0xF0) {
        need = 4, cp = b0 & 0x07, min = 0x10000;
    } else {
        return {0, 0};
    }
    if (i + need > s.size()) {
        return {0, 0};
    }
    for (std::size_t k = 1; k < need; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) {
            return {0, 0};
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    if (cp < min || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
        return {0, 0};
    }
    return {cp, need};
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_valid_utf8(std::string_view s) {
    for (std::size_t i = 0; i < s.size();) {
        const auto d = decode_one(s, i);
        if (d.len == 0) {
            return false;
        }
        i += d.len;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Step 1: anything between a '<' and the next '>' goes.

std::string strip_tags(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto open = s.find('<', i);
        if (open == std::string_view::npos) {
            break;
        }
        const auto close = s.find('>', open + 1);
        if (close == std::string_view::npos) {
            break;
        }
        out.append(s.substr(i, open - i));
        i = close + 1;
    }
    out.append(s.substr(i));
    return out;
}

// ---------------------------------------------------------------------------
// Step 2: unicode repair and normalization.

// Windows-1252 bytes 0x80..0x9F that decode to something other than a C1 control.
constexpr std::array<std::pair<char32_t, unsigned char>, 27> kCp1252 = {{
    {0x20AC, 0x80}, {0x201A, 0x82}, {0x0192, 0x83}, {0x201E, 0x84}, {0x2026, 0x85},
    {0x2020, 0x86}, {0x2021, 0x87}, {0x02C6, 0x88}, {0x2030, 0x89}, {0x0160, 0x8A},
    {0x2039, 0x8B}, {0x0152, 0x8C}, {0x017D, 0x8E}, {0x2018, 0x91}, {0x2019, 0x92},
    {0x201C, 0x93}, {0x201D, 0x94}, {0x2022, 0x95}, {0x2013, 0x96}, {0x2014, 0x97},
    {0x02DC, 0x98}, {0x2122, 0x99}, {0x0161, 0x9A}, {0x203A, 0x9B}, {0x0153, 0x9C},
    {0x017E, 0x9E}, {0x0178, 0x9F},
}};

std::optional<unsigned char> to_cp1252_byte(char32_t cp) {
    if (cp <= 0xFF) {
        return static_cast<unsigned char>(cp);
    }
    for (const auto& [c, b] : kCp1252) {
        if (c == cp) {
            return b;
        }
    }
    return std::nullopt;
}

// UTF-8 text that was decoded as Latin-1/cp1252 and re-encoded ("cafÃ©").
// Each whitespace-delimited token is re-encoded to single bytes; if the bytes
// form valid UTF-8 with at least one multi-byte sequence, the token is replaced.
std::string fix_mojibake_token(std::string_view token) {
    std::string bytes;
    bool has_high = false;
    for (std::size_t i = 0; i < token.size();) {
        const auto d = decode_one(token, i);
        const auto b = to_cp1252_byte(d.cp);
        if (!b) {
            return std::string(token);
        }
        has_high = has_high || *b >= 0x80;
        bytes.push_back(static_cast<char>(*b));
        i += d.len;
    }
    if (!has_high || !is_valid_utf8(bytes)) {
        return std::string(token);
    }
    return bytes;
}

std::string fix_mojibake(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        if (static_cast<unsigned char>(s[i]) <= 0x20) {
            out.push_back(s[i++]);
            continue;
        }
        std::size_t j = i;
        bool high = false;
        while (j < s.size() && static_cast<unsigned char>(s[j]) > 0x20) {
            high = high || static_cast<unsigned char>(s[j]) >= 0x80;
            ++j;
        }
        const auto token = s.substr(i, j - i);
        out += high ? fix_mojibake_token(token) : std::string(token);
        i = j;
    }
    return out;
}

// Code points that either ICU would map to angle brackets or that are line
// separators; handled before handing text to ICU.
std::string premap(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size();) {
        const auto d = decode_one(s, i);
        switch (d.cp) {
        case 0x00AB:
        case 0x00BB:
            out.push_back('"');
            break;
        case 0x2039:
        case 0x203A:
            out.push_back('\'');
            break;
        case 0x0085:
        case 0x2028:
        case 0x2029:
            out.push_back('\n');
            break;
        default:
            out.append(s.substr(i, d.len));
        }
        i += d.len;
    }
    return out;
}

std::string normalize_nfkc(const std::string& s) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status)) {
        return s;
    }
    const auto in = icu::UnicodeString::fromUTF8(s);
    const auto normalized = nfkc->normalize(in, status);
    if (U_FAILURE(status)) {
        return s;
    }
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

// ---------------------------------------------------------------------------
// Step 3: transliteration to ASCII.

const icu::Transliterator* ascii_transliterator() {
    thread_local std::unique_ptr<icu::Transliterator> instance = [] {
        UErrorCode status = U_ZERO_ERROR;
        std::unique_ptr<icu::Transliterator> t(icu::Transliterator::createInstance(
            "Any-Latin; Latin-ASCII", UTRANS_FORWARD, status));
        if (U_FAILURE(status)) {
            t.reset();
        }
        return t;
    }();
    return instance.get();
}

bool is_line_break(char c) { return c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

std::string to_ascii(const std::string& s) {
    std::string transliterated = s;
    bool ascii = true;
    for (const char c : s) {
        ascii = ascii && static_cast<unsigned char>(c) < 0x80;
    }
    if (!ascii) {
        if (const auto* t = ascii_transliterator()) {
            auto text = icu::UnicodeString::fromUTF8(s);
            t->transliterate(text);
            transliterated.clear();
            text.toUTF8String(transliterated);
        }
    }
    std::string out;
    out.reserve(transliterated.size());
    for (const char c : transliterated) {
        const auto b = static_cast<unsigned char>(c);
        if ((b >= 0x20 && b < 0x7F) || c == '\t' || is_line_break(c)) {
            out.push_back(c);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Step 4: URLs, emails and phone numbers.

bool ascii_alnum(char c) {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}
bool ascii_digit(char c) { return c >= '0' && c <= '9'; }
bool ascii_space(char c) { return c == ' ' || c == '\t' || is_line_break(c); }
bool word_char(char c) { return ascii_alnum(c) || c == '_'; }

bool starts_with_ci(std::string_view s, std::size_t i, std::string_view prefix) {
    if (s.size() - i < prefix.size()) {
        return false;
    }
    for (std::size_t k = 0; k < prefix.size(); ++k) {
        char c = s[i + k];
        if (c >= 'A' && c <= 'Z') {
            c = static_cast<char>(c - 'A' + 'a');
        }
        if (c != prefix[k]) {
            return false;
        }
    }
    return true;
}

/// Removes every non-overlapping match found left to right. The matcher gets
/// the full text and a candidate start and returns the end of a match.
template <typename Matcher>
std::string remove_matches(std::string_view s, Matcher&& match) {
    std::string out;
    out.reserve(s.size());
    std::size_t i = 0;
    std::size_t copied = 0;
    while (i < s.size()) {
        if (const auto end = match(s, i, copied)) {
            out.append(s.substr(copied, i - copied));
            copied = *end;
            i = *end;
        } else {
            ++i;
        }
    }
    out.append(s.substr(copied));
    return out;
}

// URL: (http://|https://|ftp://|www.) followed by one or more non-space
// characters, case-insensitive, not preceded by an alphanumeric.
std::optional<std::size_t> match_url(std::string_view s, std::size_t i, std::size_t) {
    if (i > 0 && ascii_alnum(s[i - 1])) {
        return std::nullopt;
    }
    std::size_t j = i;
    for (const std::string_view p : {"https://", "http://", "ftp://", "www."}) {
        if (starts_with_ci(s, i, p)) {
            j = i + p.size();
            break;
        }
    }
    if (j == i || j >= s.size() || ascii_space(s[j])) {
        return std::nullopt;
    }
    while (j < s.size() && !ascii_space(s[j])) {
        ++j;
    }
    return j;
}

bool email_local_char(char c) {
    return ascii_alnum(c) || c == '.' || c == '_' || c == '%' || c == '+' || c == '-';
}
bool email_label_char(char c) { return ascii_alnum(c) || c == '-'; }

// Email: [A-Za-z0-9._%+-]+ @ label(.label)+ with labels over [A-Za-z0-9-].
// Matches start at the beginning of a run of local-part characters.
std::optional<std::size_t> match_email(std::string_view s, std::size_t i, std::size_t resume) {
    if (!email_local_char(s[i]) || (i > resume && email_local_char(s[i - 1]))) {
        return std::nullopt;
    }
    std::size_t j = i;
    while (j < s.size() && email_local_char(s[j])) {
        ++j;
    }
    if (j >= s.size() || s[j] != '@') {
        return std::nullopt;
    }
    ++j;
    const auto label = [&](std::size_t at) {
        std::size_t k = at;
        while (k < s.size() && email_label_char(s[k])) {
            ++k;
        }
        return k;
    };
    std::size_t end = label(j);
    if (end == j) {
        return std::nullopt;
    }
    int dotted = 0;
    while (end < s.size() && s[end] == '.') {
        const auto next = label(end + 1);
        if (next == end + 1) {
            break;
        }
        end = next;
        ++dotted;
    }
    if (dotted == 0) {
        return std::nullopt;
    }
    return end;
}

// Tiny continuation-passing backtracking matcher, used for the phone grammar.
// Alternatives are explored in ECMAScript priority order (greedy first) so the
// result is the same span a regex engine reports.
using Cont = std::function<bool(std::size_t)>;
using Pat = std::function<bool(std::string_view, std::size_t, const Cont&)>;

Pat chr(std::function<bool(char)> pred) {
    return [pred = std::move(pred)](std::string_view s, std::size_t i, const Cont& k) {
        return i < s.size() && pred(s[i]) && k(i + 1);
    };
}

Pat lit(char c) {
    return chr([c](char x) { return x == c; });
}

Pat seq(std::vector<Pat> parts) {
    return [parts = std::move(parts)](std::string_view s, std::size_t i, const Cont& k) {
        std::function<bool(std::size_t, std::size_t)> step = [&](std::size_t idx, std::size_t at) {
            if (idx == parts.size()) {
                return k(at);
            }
            return parts[idx](s, at, [&](std::size_t next) { return step(idx + 1, next); });
        };
        return step(0, i);
    };
}

// Greedy bounded repetition.
Pat rep(Pat p, int min, int max) {
    return [p = std::move(p), min, max](std::string_view s, std::size_t i, const Cont& k) {
        std::function<bool(int, std::size_t)> go = [&](int count, std::size_t at) {
            if (count < max && p(s, at, [&](std::size_t next) {
                    return next != at && go(count + 1, next);
                })) {
                return true;
            }
            return count >= min && k(at);
        };
        return go(0, i);
    };
}

Pat opt(Pat p) { return rep(std::move(p), 0, 1); }

Pat alt(Pat a, Pat b) {
    return [a = std::move(a), b = std::move(b)](std::string_view s, std::size_t i, const Cont& k) {
        return a(s, i, k) || b(s, i, k);
    };
}

const Pat& phone_pattern() {
    static const Pat pattern = [] {
        const auto digit = chr(ascii_digit);
        const auto sep = chr([](char c) { return c == ' ' || c == '.' || c == '-'; });
        const auto digits = [&](int n) { return rep(digit, n, n); };
        // (\+?1[ .-]?)?(\(?\d{3}\)?[ .-]?)?\d{3}[ .-]?\d{4}
        Pat na = seq({
            opt(seq({opt(lit('+')), lit('1'), opt(sep)})),
            opt(seq({opt(lit('(')), digits(3), opt(lit(')')), opt(sep)})),
            digits(3),
            opt(sep),
            digits(4),
        });
        // \+\d{1,3}([ .-]\(?\d{1,4}\)?){2,5}
        Pat intl = seq({
            lit('+'),
            rep(digit, 1, 3),
            rep(seq({sep, opt(lit('(')), rep(digit, 1, 4), opt(lit(')'))}), 2, 5),
        });
        return alt(std::move(na), std::move(intl));
    }();
    return pattern;
}

std::optional<std::size_t> match_phone(std::string_view s, std::size_t i, std::size_t) {
    if (i > 0 && (word_char(s[i - 1]) || s[i - 1] == ')')) {
        return std::nullopt;
    }
    const char c = s[i];
    if (!(ascii_digit(c) || c == '+' || c == '(')) {
        return std::nullopt;
    }
    std::optional<std::size_t> end;
    phone_pattern()(s, i, [&](std::size_t e) {
        if (e < s.size() && word_char(s[e])) {
            return false;
        }
        std::size_t ndigits = 0;
        for (std::size_t k = i; k < e; ++k) {
            ndigits += ascii_digit(s[k]) ? 1 : 0;
        }
        if (ndigits < 7) {
            return false;
        }
        end = e;
        return true;
    });
    return end;
}

// ---------------------------------------------------------------------------
// Steps 5 and 6.

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (const char c : s) {
        if (ascii_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) {
            out.push_back(' ');
            pending = false;
        }
        out.push_back(c);
    }
    return out;
}

std::string clean_once(std::string_view raw) {
    std::string s = strip_tags(raw);
    s = repair_utf8(s);
    s = fix_mojibake(s);
    s = normalize_nfkc(premap(s));
    s = to_ascii(s);
    s = remove_matches(s, match_url);
    s = remove_matches(s, match_email);
    s = remove_matches(s, match_phone);
    return collapse_whitespace(s);
}

} // namespace

std::string repair_utf8(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (std::size_t i = 0; i < raw.size();) {
        const auto d = decode_one(raw, i);
        if (d.len == 0) {
            ++i;
            continue;
        }
        if (d.cp >= 0x80) {
            append_utf8(out, d.cp);
        } else {
            out.push_back(raw[i]);
        }
        i += d.len;
    }
    return out;
}

std::size_t utf8_length(std::string_view text) {
    std::size_t n = 0;
    for (const char c : text) {
        n += (static_cast<unsigned char>(c) & 0xC0) != 0x80 ? 1 : 0;
    }
    return n;
}

std::string fold_to_ascii(std::string_view text) {
    bool ascii = true;
    for (const char c : text) {
        ascii = ascii && static_cast<unsigned char>(c) < 0x80;
    }
    if (ascii) {
        return to_ascii(std::string(text));
    }
    return to_ascii(normalize_nfkc(premap(repair_utf8(text))));
}

std::string clean_text(std::string_view raw) {
    // Removal can bring separated fragments together (a phone split by a URL),
    // so iterate to a fixpoint. After the first pass the text is ASCII and each
    // pass can only shrink it.
    std::string current = clean_once(raw);
    for (;;) {
        std::string next = clean_once(current);
        if (next == current) {
            return current;
        }
        current = std::move(next);
    }
}

} // namespace driftrank
