#include "driftrank/rerank.hpp"

#include "driftrank/error.hpp"
#include "driftrank/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace driftrank {

using nlohmann::json;

std::string pointwise_input(std::string_view query, std::string_view doc) {
    std::string s = "Query: ";
    s += query;
    s += " Document: ";
    s += doc;
    return s;
}

double WirePointwiseScorer::score(const Query& query, const Passage& passage) {
    const json request = {{"op", "score"},
                          {"query", query.text},
                          {"doc", passage.text},
                          {"input", pointwise_input(query.text, passage.text)},
                          {"qid", query.id},
                          {"doc_id", passage.doc_id}};
    const auto reply = endpoint_.call(request);
    const auto it = reply.find("prob");
    if (it == reply.end() || !it->is_number()) {
        fail(ErrorKind::Provider, endpoint_.describe() + ": score reply has no numeric \"prob\"");
    }
    const double p = it->get<double>();
    if (!(p >= 0.0 && p <= 1.0)) {
        fail(ErrorKind::Provider, endpoint_.describe() + ": probability " + std::to_string(p) +
                                      " for '" + passage.doc_id + "' is outside [0,1]");
    }
    return p;
}

Permutation WireListwiseScorer::rank(const Query& query, std::span<const Passage> window) {
    json passages = json::array();
    json ids = json::array();
    for (const auto& p : window) {
        passages.push_back(p.text);
        ids.push_back(p.doc_id);
    }
    const json request = {{"op", "rank"},
                          {"query", query.text},
                          {"passages", std::move(passages)},
                          {"prompt", build_listwise_prompt(query, window)},
                          {"qid", query.id},
                          {"doc_ids", std::move(ids)}};
    const auto reply = endpoint_.call(request);
    if (const auto it = reply.find("permutation"); it != reply.end()) {
        if (!it->is_array()) {
            fail(ErrorKind::Provider, endpoint_.describe() + ": \"permutation\" is not an array");
        }
        std::vector<long long> values;
        for (const auto& v : *it) {
            if (!v.is_number_integer()) {
                fail(ErrorKind::Provider, endpoint_.describe() + ": non-integer permutation entry");
            }
            values.push_back(v.get<long long>());
        }
        return repair_permutation(values, window.size());
    }
    if (const auto it = reply.find("raw"); it != reply.end() && it->is_string()) {
        return parse_permutation(it->get<std::string>(), window.size());
    }
    fail(ErrorKind::Provider, endpoint_.describe() + ": rank reply has neither \"permutation\" nor \"raw\"");
}

std::string build_listwise_prompt(const Query& query, std::span<const Passage> window) {
    if (window.empty()) {
        fail(ErrorKind::InvalidArgument, "listwise prompt needs at least one passage");
    }
    const auto n = std::to_string(window.size());
    std::string s;
    s += "I will provide you with " + n + " passages, each indicated by numerical identifier [].\n";
    s += "Rank the passages based on their relevance to the search query: " + query.text + ".\n\n";
    for (std::size_t i = 0; i < window.size(); ++i) {
        s += "[" + std::to_string(i + 1) + "] " + window[i].text + "\n";
    }
    s += "\nSearch Query: " + query.text + "\n\n";
    s += "Rank the " + n + " passages above based on their relevance to the search query.\n";
    s += "All the passages should be included and listed using identifiers, in descending order of "
         "relevance. The output format should be [] > [], e.g., [4] > [2].\n";
    s += "Only respond with the ranking results, do not say any word or explain.\n";
    return s;
}

Permutation repair_permutation(std::span<const long long> values, std::size_t n) {
    if (n == 0) {
        fail(ErrorKind::InvalidArgument, "permutation size must be at least 1");
    }
    if (values.empty()) {
        fail(ErrorKind::Parse, "no candidate indices in model output");
    }
    Permutation perm;
    std::vector<bool> seen(n + 1, false);
    for (const auto v : values) {
        if (v < 1 || static_cast<unsigned long long>(v) > n || seen[static_cast<std::size_t>(v)]) {
            continue;
        }
        seen[static_cast<std::size_t>(v)] = true;
        perm.order.push_back(static_cast<std::size_t>(v));
    }
    for (std::size_t i = 1; i <= n; ++i) {
        if (!seen[i]) {
            perm.order.push_back(i);
        }
    }
    return perm;
}

Permutation parse_permutation(std::string_view raw, std::size_t n) {
    std::vector<long long> values;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i] != '[') {
            continue;
        }
        std::size_t j = i + 1;
        while (j < raw.size() && raw[j] == ' ') {
            ++j;
        }
        bool negative = false;
        if (j < raw.size() && (raw[j] == '-' || raw[j] == '+')) {
            negative = raw[j] == '-';
            ++j;
        }
        const std::size_t digits_start = j;
        long long value = 0;
        bool overflow = false;
        while (j < raw.size() && raw[j] >= '0' && raw[j] <= '9') {
            if (value > (std::numeric_limits<long long>::max() - 9) / 10) {
                overflow = true;
            } else {
                value = value * 10 + (raw[j] - '0');
            }
            ++j;
        }
        while (j < raw.size() && raw[j] == ' ') {
            ++j;
        }
        if (j == digits_start || j >= raw.size() || raw[j] != ']') {
            continue;
        }
        // Out-of-range either way; keep it so the repair drops it.
        values.push_back(overflow ? -1 : (negative ? -value : value));
        i = j;
    }
    if (values.empty()) {
        fail(ErrorKind::Parse, "no bracketed indices in model output");
    }
    return repair_permutation(values, n);
}

void SlidingWindowConfig::validate() const {
    if (stride < 1 || stride >= window) {
        fail(ErrorKind::Config, "sliding window needs 1 <= stride < window (got stride " +
                                    std::to_string(stride) + ", window " + std::to_string(window) + ")");
    }
    if (passes < 1) {
        fail(ErrorKind::Config, "sliding window needs at least one pass");
    }
}

void TournamentConfig::validate() const {
    if (promote < 1 || promote >= match_size) {
        fail(ErrorKind::Config, "tournament needs 1 <= promote < match_size (got promote " +
                                    std::to_string(promote) + ", match_size " +
                                    std::to_string(match_size) + ")");
    }
    if (top_k < 1) {
        fail(ErrorKind::Config, "tournament top_k must be at least 1");
    }
}

namespace {

std::vector<Passage> gather_passages(const RankedList& candidates, const PassageText& text) {
    if (candidates.empty()) {
        fail(ErrorKind::InvalidArgument, "no candidates to rerank for query " + candidates.query_id);
    }
    std::vector<Passage> out;
    out.reserve(candidates.size());
    std::set<std::string_view> ids;
    for (const auto& e : candidates.entries) {
        if (!ids.insert(e.doc_id).second) {
            fail(ErrorKind::InvalidArgument, "duplicate candidate '" + e.doc_id + "'");
        }
        out.push_back({e.doc_id, text ? text(e.doc_id) : std::string()});
    }
    return out;
}

RankedList positional_list(const std::string& query_id, const std::vector<Passage>& passages,
                           const std::vector<std::size_t>& order) {
    RankedList list{query_id, {}};
    list.entries.reserve(order.size());
    for (const auto i : order) {
        list.entries.push_back({passages[i].doc_id, 0.0, 0});
    }
    assign_positional_scores(list);
    return list;
}

/// One listwise call over passages[members...]. Falls back to the given
/// order when the scorer fails.
std::vector<std::size_t> rank_members(ListwiseScorer& scorer, const Query& query,
                                      const std::vector<Passage>& passages,
                                      const std::vector<std::size_t>& members, RerankOutcome& stats,
                                      std::string_view what) {
    std::vector<Passage> window;
    window.reserve(members.size());
    for (const auto i : members) {
        window.push_back(passages[i]);
    }
    ++stats.scorer_calls;
    try {
        const auto perm = scorer.rank(query, window);
        if (perm.order.size() != members.size()) {
            fail(ErrorKind::Provider, "permutation has " + std::to_string(perm.order.size()) +
                                          " entries for " + std::to_string(members.size()) + " passages");
        }
        std::vector<std::size_t> ranked;
        ranked.reserve(members.size());
        for (const auto p : perm.order) {
            ranked.push_back(members.at(p - 1));
        }
        return ranked;
    } catch (const std::exception& e) {
        ++stats.failures;
        log_warning("query " + query.id + ": " + std::string(what) + " kept in input order: " + e.what());
        return members;
    }
}

constexpr std::size_t kEmpty = std::numeric_limits<std::size_t>::max();

/// Tournament bracket over a fixed candidate set. Level-0 matches hold
/// contiguous chunks of the input; a higher match holds slots, each slot
/// being one promotion position of a lower match. A match is re-run only
/// when the content of its slots changes.
class Bracket {
public:
    Bracket(ListwiseScorer& scorer, const Query& query, const std::vector<Passage>& passages,
            const std::vector<std::size_t>& items, const TournamentConfig& cfg, RerankOutcome& stats)
        : scorer_(scorer), query_(query), passages_(passages), cfg_(cfg), stats_(stats) {
        for (std::size_t i = 0; i < items.size(); i += cfg.match_size) {
            Match m;
            m.leaf_items.assign(items.begin() + static_cast<std::ptrdiff_t>(i),
                                items.begin() + static_cast<std::ptrdiff_t>(std::min(items.size(), i + cfg.match_size)));
            matches_.push_back(std::move(m));
        }
        std::size_t level_begin = 0;
        std::size_t level_end = matches_.size();
        while (level_end - level_begin > 1) {
            std::vector<Slot> slots;
            for (std::size_t c = level_begin; c < level_end; ++c) {
                const auto cap = std::min(cfg.promote, matches_[c].capacity());
                matches_[c].out.assign(cap, kEmpty);
                matches_[c].parent_of_slot.assign(cap, kEmpty);
                for (std::size_t j = 0; j < cap; ++j) {
                    slots.push_back({c, j});
                }
            }
            for (std::size_t i = 0; i < slots.size(); i += cfg.match_size) {
                Match m;
                m.slots.assign(slots.begin() + static_cast<std::ptrdiff_t>(i),
                               slots.begin() + static_cast<std::ptrdiff_t>(std::min(slots.size(), i + cfg.match_size)));
                for (const auto& s : m.slots) {
                    matches_[s.child].parent_of_slot[s.pos] = matches_.size();
                }
                matches_.push_back(std::move(m));
            }
            level_begin = level_end;
            level_end = matches_.size();
        }
        for (std::size_t i = 0; i < matches_.size(); ++i) {
            for (const auto item : matches_[i].leaf_items) {
                leaf_of_[item] = i;
            }
        }
        settle();
    }

    bool empty() const { return matches_.empty() || matches_.back().ranked.empty(); }

    /// Current best remaining candidate.
    std::size_t winner() const { return matches_.back().ranked.front(); }

    void remove(std::size_t item) {
        removed_.insert(item);
        matches_[leaf_of_.at(item)].dirty = true;
        settle();
    }

private:
    struct Slot {
        std::size_t child;
        std::size_t pos;
    };

    struct Match {
        std::vector<std::size_t> leaf_items;
        std::vector<Slot> slots;
        std::vector<std::size_t> members;
        std::vector<std::size_t> ranked;
        std::vector<std::size_t> out;
        std::vector<std::size_t> parent_of_slot;
        bool evaluated = false;
        bool dirty = true;

        std::size_t capacity() const { return leaf_items.empty() ? slots.size() : leaf_items.size(); }
    };

    // Matches are stored level by level, so index order is bottom-up.
    void settle() {
        for (std::size_t i = 0; i < matches_.size(); ++i) {
            if (matches_[i].dirty) {
                evaluate(i);
            }
        }
    }

    void evaluate(std::size_t index) {
        auto& m = matches_[index];
        m.dirty = false;
        std::vector<std::size_t> members;
        if (!m.leaf_items.empty()) {
            for (const auto item : m.leaf_items) {
                if (!removed_.contains(item)) {
                    members.push_back(item);
                }
            }
        } else {
            for (const auto& s : m.slots) {
                const auto item = matches_[s.child].out[s.pos];
                if (item != kEmpty) {
                    members.push_back(item);
                }
            }
        }
        if (m.evaluated && members == m.members) {
            return;
        }
        const bool is_root = index + 1 == matches_.size();
        const bool trivial = members.size() < 2 || (!is_root && members.size() <= cfg_.promote);
        std::vector<std::size_t> ranked =
            trivial ? members
                    : rank_members(scorer_, query_, passages_, members, stats_, "tournament match");
        m.members = std::move(members);
        m.ranked = std::move(ranked);
        m.evaluated = true;
        if (is_root) {
            return;
        }
        // Survivors keep their slot; freed slots take new entrants in rank order.
        const auto promoted = std::min(cfg_.promote, m.ranked.size());
        const std::vector<std::size_t> top(m.ranked.begin(), m.ranked.begin() + static_cast<std::ptrdiff_t>(promoted));
        std::vector<std::size_t> next(m.out.size(), kEmpty);
        std::vector<bool> placed(top.size(), false);
        for (std::size_t j = 0; j < m.out.size(); ++j) {
            const auto it = std::find(top.begin(), top.end(), m.out[j]);
            if (m.out[j] != kEmpty && it != top.end()) {
                next[j] = m.out[j];
                placed[static_cast<std::size_t>(it - top.begin())] = true;
            }
        }
        std::size_t k = 0;
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (next[j] != kEmpty) {
                continue;
            }
            while (k < top.size() && placed[k]) {
                ++k;
            }
            if (k < top.size()) {
                next[j] = top[k];
                placed[k] = true;
            }
        }
        for (std::size_t j = 0; j < next.size(); ++j) {
            if (next[j] != m.out[j]) {
                matches_[m.parent_of_slot[j]].dirty = true;
            }
        }
        m.out = std::move(next);
    }

    ListwiseScorer& scorer_;
    const Query& query_;
    const std::vector<Passage>& passages_;
    const TournamentConfig& cfg_;
    RerankOutcome& stats_;
    std::vector<Match> matches_;
    std::unordered_map<std::size_t, std::size_t> leaf_of_;
    std::set<std::size_t> removed_;
};

} // namespace

RerankOutcome pointwise_rerank(PointwiseScorer& scorer, const Query& query, const RankedList& candidates,
                               const PassageText& text, std::size_t k) {
    if (k == 0) {
        fail(ErrorKind::InvalidArgument, "pointwise k must be at least 1");
    }
    const auto passages = gather_passages(candidates, text);
    RerankOutcome outcome;
    const auto depth = std::min(k, passages.size());
    std::vector<double> prob(depth);
    for (std::size_t i = 0; i < depth; ++i) {
        ++outcome.scorer_calls;
        const double p = scorer.score(query, passages[i]);
        if (!(p >= 0.0 && p <= 1.0)) {
            fail(ErrorKind::Provider, "probability " + std::to_string(p) + " for '" + passages[i].doc_id +
                                          "' is outside [0,1]");
        }
        prob[i] = p;
        outcome.model_scores[passages[i].doc_id] = p;
    }
    std::vector<std::size_t> order(passages.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(depth), [&](std::size_t a, std::size_t b) {
        if (prob[a] != prob[b]) {
            return prob[a] > prob[b];
        }
        return passages[a].doc_id < passages[b].doc_id;
    });
    outcome.list = positional_list(candidates.query_id, passages, order);
    return outcome;
}

RerankOutcome sliding_window_rerank(ListwiseScorer& scorer, const Query& query,
                                    const RankedList& candidates, const PassageText& text,
                                    const SlidingWindowConfig& cfg) {
    cfg.validate();
    const auto passages = gather_passages(candidates, text);
    RerankOutcome outcome;
    const auto n = passages.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
        std::size_t start = n > cfg.window ? n - cfg.window : 0;
        for (;;) {
            const auto len = std::min(cfg.window, n - start);
            const std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                   order.begin() + static_cast<std::ptrdiff_t>(start + len));
            const auto ranked = rank_members(scorer, query, passages, members, outcome,
                                             "window at " + std::to_string(start));
            std::copy(ranked.begin(), ranked.end(), order.begin() + static_cast<std::ptrdiff_t>(start));
            if (start == 0) {
                break;
            }
            start = start > cfg.stride ? start - cfg.stride : 0;
        }
    }
    outcome.list = positional_list(candidates.query_id, passages, order);
    return outcome;
}

RerankOutcome tournament_rerank(ListwiseScorer& scorer, const Query& query, const RankedList& candidates,
                                const PassageText& text, const TournamentConfig& cfg) {
    cfg.validate();
    const auto passages = gather_passages(candidates, text);
    RerankOutcome outcome;
    const auto n = passages.size();
    const auto want = std::min(cfg.top_k, n);
    std::vector<std::size_t> extracted;
    std::vector<bool> taken(n, false);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), 0);
    if (cfg.use_cache) {
        Bracket bracket(scorer, query, passages, all, cfg, outcome);
        while (extracted.size() < want && !bracket.empty()) {
            const auto w = bracket.winner();
            extracted.push_back(w);
            taken[w] = true;
            if (extracted.size() < want) {
                bracket.remove(w);
            }
        }
    } else {
        while (extracted.size() < want) {
            std::vector<std::size_t> remaining;
            for (const auto i : all) {
                if (!taken[i]) {
                    remaining.push_back(i);
                }
            }
            Bracket bracket(scorer, query, passages, remaining, cfg, outcome);
            const auto w = bracket.winner();
            extracted.push_back(w);
            taken[w] = true;
        }
    }
    std::vector<std::size_t> order = extracted;
    for (const auto i : all) {
        if (!taken[i]) {
            order.push_back(i);
        }
    }
    outcome.list = positional_list(candidates.query_id, passages, order);
    return outcome;
}

BiasProbeReport positional_bias_probe(ListwiseScorer& scorer, const Query& query,
                                      std::span<const Passage> window, std::size_t trials,
                                      std::uint64_t seed) {
    if (trials < 1) {
        fail(ErrorKind::InvalidArgument, "bias probe needs at least one trial");
    }
    if (window.empty()) {
        fail(ErrorKind::InvalidArgument, "bias probe needs a non-empty window");
    }
    const auto n = window.size();
    std::mt19937_64 rng(seed);
    std::vector<double> sum(n, 0.0);
    std::vector<double> sum_sq(n, 0.0);
    std::vector<std::size_t> shown(n);
    std::vector<Passage> shuffled(n);
    for (std::size_t t = 0; t < trials; ++t) {
        std::iota(shown.begin(), shown.end(), 0);
        // Fisher-Yates with an explicit draw so results do not depend on the
        // standard library's shuffle.
        for (std::size_t i = n; i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng() % i);
            std::swap(shown[i - 1], shown[j]);
        }
        for (std::size_t i = 0; i < n; ++i) {
            shuffled[i] = window[shown[i]];
        }
        Permutation perm;
        try {
            perm = scorer.rank(query, shuffled);
        } catch (const std::exception& e) {
            log_warning("bias probe trial " + std::to_string(t) + " kept input order: " + e.what());
            perm = repair_permutation(std::vector<long long>{1}, n);
        }
        if (perm.order.size() != n) {
            perm = repair_permutation(std::vector<long long>{1}, n);
        }
        for (std::size_t r = 0; r < n; ++r) {
            const auto original = shown[perm.order[r] - 1];
            const auto rank = static_cast<double>(r + 1);
            sum[original] += rank;
            sum_sq[original] += rank * rank;
        }
    }
    BiasProbeReport report;
    report.trials = trials;
    const auto count = static_cast<double>(trials);
    for (std::size_t i = 0; i < n; ++i) {
        report.doc_ids.push_back(window[i].doc_id);
        const double mean = sum[i] / count;
        report.rank_variance.push_back(std::max(0.0, sum_sq[i] / count - mean * mean));
    }
    report.mean_variance =
        std::accumulate(report.rank_variance.begin(), report.rank_variance.end(), 0.0) / static_cast<double>(n);
    return report;
}

} // namespace driftrank
