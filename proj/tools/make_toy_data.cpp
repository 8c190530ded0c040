// Writes the bundled toy collection: 200 documents, 20 queries and graded
// qrels with planted relevant documents that share the query vocabulary.
//
//   make_toy_data <output-dir>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace {

constexpr int kTopics = 20;
constexpr int kTopicWords = 10;
constexpr int kBackgroundWords = 400;
constexpr int kDocs = 200;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

private:
    std::mt19937_64 gen_;
};

std::vector<std::string> make_words(Rng& rng, std::size_t count, std::set<std::string>& used) {
    static const char* onsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v", "z", "br", "tr", "gl"};
    static const char* vowels[] = {"a", "o", "u", "i"};
    std::vector<std::string> out;
    while (out.size() < count) {
        std::string w;
        const auto syllables = 2 + rng.below(2);
        for (std::size_t s = 0; s < syllables; ++s) {
            w += onsets[rng.below(std::size(onsets))];
            w += vowels[rng.below(std::size(vowels))];
        }
        w += "n";
        if (used.insert(w).second) {
            out.push_back(w);
        }
    }
    return out;
}

std::string noise(Rng& rng) {
    static const char* bits[] = {
        "<p>",      "</p>",       "<b>see</b>", "http://example.org/page?id=7", "www.example.com/a",
        "contact mail@example.org", "call (555) 123-4567", "\n\n", "café", "naïve",
        "“quoted”",       "»angled«",  "<br/>",   " ", "été",
    };
    return bits[rng.below(std::size(bits))];
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_toy_data <output-dir>\n";
        return 1;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    Rng rng(20240917);
    std::set<std::string> used;
    std::vector<std::vector<std::string>> topics;
    for (int t = 0; t < kTopics; ++t) {
        topics.push_back(make_words(rng, kTopicWords, used));
    }
    const auto background = make_words(rng, kBackgroundWords, used);

    struct Doc {
        std::string text;
        int topic = -1;
        int grade = -1;
    };
    std::vector<Doc> docs;
    const auto filler = [&](std::string& text, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            text += background[rng.below(background.size())] + ' ';
            if (rng.below(25) == 0) {
                text += noise(rng) + ' ';
            }
            // Query words also turn up off-topic, so stage one has distractors.
            if (rng.below(12) == 0) {
                text += topics[rng.below(topics.size())][rng.below(3)] + ' ';
            }
        }
    };
    for (int t = 0; t < kTopics; ++t) {
        const auto& w = topics[static_cast<std::size_t>(t)];
        // Two highly relevant, three partially relevant, one judged off-topic.
        for (int g = 0; g < 6; ++g) {
            Doc d;
            d.topic = t;
            std::string text;
            filler(text, 10 + rng.below(10));
            if (g < 2) {
                d.grade = 2;
                text += w[0] + ' ' + w[1] + ' ' + w[2] + ' ' + w[3] + ' ';
                filler(text, 10);
                text += w[0] + ' ' + w[2] + ' ' + w[4] + ' ';
            } else if (g < 5) {
                d.grade = 1;
                text += w[static_cast<std::size_t>(g - 2)] + ' ' + w[5] + ' ';
                filler(text, 10);
                text += w[6] + ' ';
            } else {
                d.grade = 0;
                text += w[7] + ' ' + w[8] + ' ' + w[9] + ' ';
            }
            filler(text, 20 + rng.below(20));
            d.text = text;
            docs.push_back(std::move(d));
        }
    }
    while (docs.size() < kDocs) {
        Doc d;
        filler(d.text, 40 + rng.below(40));
        docs.push_back(std::move(d));
    }
    for (std::size_t i = docs.size(); i > 1; --i) {
        std::swap(docs[i - 1], docs[rng.below(i)]);
    }

    std::ofstream corpus(dir / "corpus.jsonl");
    std::ofstream qrels(dir / "qrels.txt");
    std::ofstream queries(dir / "queries.tsv");
    std::vector<std::vector<std::pair<std::string, int>>> judged(kTopics);
    for (std::size_t i = 0; i < docs.size(); ++i) {
        char id[24];
        std::snprintf(id, sizeof id, "d%03zu", i + 1);
        corpus << nlohmann::json{{"id", id}, {"text", docs[i].text}}.dump() << '\n';
        if (docs[i].topic >= 0) {
            judged[static_cast<std::size_t>(docs[i].topic)].emplace_back(id, docs[i].grade);
        }
    }
    for (int t = 0; t < kTopics; ++t) {
        char qid[24];
        std::snprintf(qid, sizeof qid, "q%02d", t + 1);
        const auto& w = topics[static_cast<std::size_t>(t)];
        queries << qid << '\t' << "what about " << w[0] << ' ' << w[1] << ' ' << w[2] << '\n';
        auto& j = judged[static_cast<std::size_t>(t)];
        std::sort(j.begin(), j.end());
        for (const auto& [doc, grade] : j) {
            qrels << qid << " 0 " << doc << ' ' << grade << '\n';
        }
    }
    return 0;
}
