#include "fixtures.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

namespace fixtures {

using driftrank::Corpus;
using driftrank::Document;

namespace {

Document make_doc(std::string id, std::string text) {
    Document d;
    d.id = std::move(id);
    d.text = std::move(text);
    d.byte_len = d.original_byte_len = d.text.size();
    d.char_len = d.original_char_len = driftrank::utf8_length(d.text);
    return d;
}

std::string word(Rng& rng) {
    static const char* words[] = {"alpha", "beta", "gamma", "delta", "river", "stone", "Paris", "call",
                                  "visit", "mail", "price", "42", "2024", "x", "A1", "ok"};
    return words[pick(rng, std::size(words))];
}

std::string noise_piece(Rng& rng) {
    static const std::vector<std::string> pieces = {
        // markup
        "<p>", "</p>", "<a href=\"http://x.org/a?b=1\">", "</a>", "<br/>", "<div class='c'>", "<", ">",
        "a < b", "c > d", "<!-- note -->", "&lt;b&gt;", "<script>var x = 1;</script>", "< >",
        // links
        "https://example.com/path?q=1", "HTTP://EXAMPLE.ORG", "www.example.net/x", "ftp://files.example.com",
        "http://", "www.", "see:https://a.b", "xhttp://glued.example", "(https://paren.example)",
        // addresses
        "john.doe@example.com", "a+b@mail.co.uk", "bad@nodot", "@example.com", "user@", "x@y.z.w",
        "first.last@sub-domain.example.org.",
        // phones
        "+1 (555) 123-4567", "555-123-4567", "555.123.4567", "5551234567", "(555) 123 4567",
        "+44 20 7946 0958", "+33 1 23 45 67 89", "123-4567", "12-34", "+1-800-555-0199", "555 1234",
        "call 555-0100 now", "1234567890123",
        // unicode
        "caf\xc3\xa9", "na\xc3\xafve", "\xe2\x80\x9cquoted\xe2\x80\x9d", "\xef\xac\x81le",
        "\xef\xbc\xa1\xef\xbc\xa2\xef\xbc\xa3", "\xce\xa9mega", "\xe4\xb8\xad\xe6\x96\x87", "\xf0\x9f\x98\x80",
        "\xc2\xa0", "\xe2\x80\x8b", "e\xcc\x81", "caf\xc3\x83\xc2\xa9", "\xff\xfe", "\xc3", "\xe2\x80\xa8",
        "\xef\xbc\x9c" "b" "\xef\xbc\x9e", "\xc2\xab" "q" "\xc2\xbb", "\xe2\x80\x94", "\xe2\x84\xa2",
        "Stra\xc3\x9f" "e", "\xd0\x9c\xd0\xbe\xd1\x81\xd0\xba\xd0\xb2\xd0\xb0", "\xc2\xbd",
        // separators
        "\n", "\r\n", "\t", "   ", "\n\n\n", "\v", "\f",
    };
    return pieces[pick(rng, pieces.size())];
}

} // namespace

std::vector<std::string> adversarial_strings(std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::string> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::string s;
        const auto parts = 1 + pick(rng, 14);
        for (std::size_t p = 0; p < parts; ++p) {
            s += pick(rng, 3) == 0 ? word(rng) : noise_piece(rng);
            // Usually a separator; sometimes pieces are glued together.
            switch (pick(rng, 5)) {
            case 0:
                break;
            case 1:
                s += "\n";
                break;
            default:
                s += " ";
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

Corpus random_corpus(std::size_t docs, std::size_t vocab, std::size_t max_len, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Document> out;
    for (std::size_t d = 0; d < docs; ++d) {
        std::string text;
        const auto len = 1 + pick(rng, max_len);
        for (std::size_t t = 0; t < len; ++t) {
            // Skewed toward low word numbers so df varies.
            const auto w = std::min(pick(rng, vocab), pick(rng, vocab));
            text += (t ? " w" : "w") + std::to_string(w);
        }
        char id[16];
        std::snprintf(id, sizeof id, "d%04zu", d);
        out.push_back(make_doc(id, std::move(text)));
    }
    return Corpus(std::move(out), "random");
}

EvalFixture random_eval_fixture(const std::string& qid, std::uint64_t seed) {
    Rng rng(seed);
    EvalFixture f;
    f.run.query_id = qid;
    const auto pool = 20 + pick(rng, 180);
    const auto run_len = pick(rng, pool + 1);
    std::vector<std::string> ids(pool);
    for (std::size_t i = 0; i < pool; ++i) {
        ids[i] = "doc" + std::to_string(i);
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 0; i < run_len; ++i) {
        f.run.entries.push_back({ids[i], 1000.0 - static_cast<double>(i) - uniform(rng) * 0.5, i + 1});
    }
    // Judge a random subset; some judged docs may be outside the run.
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto judged = pick(rng, pool / 2 + 1);
    for (std::size_t i = 0; i < judged; ++i) {
        f.grades[ids[i]] = static_cast<int>(pick(rng, 4));
    }
    return f;
}

driftrank::Permutation PlantedListwise::rank(const driftrank::Query&, std::span<const driftrank::Passage> window) {
    ++calls;
    std::vector<std::size_t> idx(window.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return value_.at(window[a].doc_id) > value_.at(window[b].doc_id);
    });
    driftrank::Permutation p;
    for (const auto i : idx) {
        p.order.push_back(i + 1);
    }
    return p;
}

PlantedInstance planted_instance(std::size_t n, Rng& rng) {
    PlantedInstance inst;
    std::vector<double> values(n);
    std::iota(values.begin(), values.end(), 0.0);
    std::shuffle(values.begin(), values.end(), rng);
    std::vector<std::pair<double, std::string>> by_value;
    for (std::size_t i = 0; i < n; ++i) {
        char id[16];
        std::snprintf(id, sizeof id, "d%03zu", i);
        inst.value[id] = values[i];
        by_value.emplace_back(values[i], id);
        inst.candidates.entries.push_back({id, static_cast<double>(n - i), i + 1});
    }
    inst.candidates.query_id = "q";
    std::sort(by_value.rbegin(), by_value.rend());
    for (const auto& [_, id] : by_value) {
        inst.truth.push_back(id);
    }
    return inst;
}

DriftFixture drift_fixture(std::uint64_t seed) {
    Rng rng(seed);
    constexpr std::size_t kVocab = 400;
    constexpr std::size_t kDocs = 300;
    // Each document is a list of vocabulary slots; corpora differ only in the
    // word printed for a slot.
    std::vector<std::vector<std::size_t>> slots(kDocs);
    for (auto& doc : slots) {
        const auto len = 20 + pick(rng, 40);
        for (std::size_t t = 0; t < len; ++t) {
            doc.push_back(std::min(pick(rng, kVocab), pick(rng, kVocab)));
        }
    }
    std::vector<std::string> words_a(kVocab);
    for (std::size_t v = 0; v < kVocab; ++v) {
        words_a[v] = "t" + std::to_string(v);
    }
    const auto replace = [&](std::vector<std::string> words, double fraction, const std::string& prefix) {
        std::vector<std::size_t> order(kVocab);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        const auto count = static_cast<std::size_t>(fraction * kVocab);
        for (std::size_t i = 0; i < count; ++i) {
            words[order[i]] = prefix + std::to_string(order[i]);
        }
        return words;
    };
    const auto words_b = replace(words_a, 0.10, "u");
    const auto words_c = replace(words_b, 0.30, "v");
    const auto build = [&](const std::vector<std::string>& words, const std::string& label) {
        std::vector<Document> docs;
        for (std::size_t d = 0; d < kDocs; ++d) {
            std::string text;
            for (const auto s : slots[d]) {
                text += (text.empty() ? "" : " ") + words[s];
            }
            docs.push_back(make_doc(label + std::to_string(d), std::move(text)));
        }
        return Corpus(std::move(docs), label);
    };
    return {build(words_a, "a"), build(words_b, "b"), build(words_c, "c")};
}

std::filesystem::path temp_dir(const std::string& name) {
    static std::size_t counter = 0;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("driftrank-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot read " + path.string());
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

} // namespace fixtures
