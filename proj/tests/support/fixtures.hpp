#pragma once

// Deterministic fixture generators shared by the unit tests and the
// acceptance binary.

#include "driftrank/rerank.hpp"
#include "driftrank/textcorpus.hpp"
#include "driftrank/treceval.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace fixtures {

using Rng = std::mt19937_64;

inline std::size_t pick(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }
inline double uniform(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Noisy strings mixing markup, links, addresses, phone numbers and unicode.
std::vector<std::string> adversarial_strings(std::size_t count, std::uint64_t seed);

/// Documents over the words w0..w{vocab-1}, lengths 1..max_len.
driftrank::Corpus random_corpus(std::size_t docs, std::size_t vocab, std::size_t max_len, std::uint64_t seed);

/// Random ranked run plus graded qrels for one query. Scores are distinct.
struct EvalFixture {
    driftrank::RankedList run;
    std::map<std::string, int> grades;
};
EvalFixture random_eval_fixture(const std::string& qid, std::uint64_t seed);

/// Listwise scorer that knows a planted total order (higher value ranks
/// first) and counts its calls.
class PlantedListwise final : public driftrank::ListwiseScorer {
public:
    explicit PlantedListwise(std::map<std::string, double> value) : value_(std::move(value)) {}
    driftrank::Permutation rank(const driftrank::Query& query, std::span<const driftrank::Passage> window) override;
    std::size_t calls = 0;

private:
    std::map<std::string, double> value_;
};

/// Candidates d000.. in a random order with a planted distinct value each.
struct PlantedInstance {
    driftrank::RankedList candidates;
    std::map<std::string, double> value;
    /// Ids by descending value.
    std::vector<std::string> truth;
};
PlantedInstance planted_instance(std::size_t n, Rng& rng);

/// Three corpora: B replaces 10% of A's vocabulary, C replaces 30% of B's.
struct DriftFixture {
    driftrank::Corpus a, b, c;
};
DriftFixture drift_fixture(std::uint64_t seed);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& name);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

} // namespace fixtures
