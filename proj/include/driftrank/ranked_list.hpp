#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace driftrank {

struct RankedEntry {
    std::string doc_id;
    double score = 0.0;
    std::size_t rank = 0; // 1-based

    bool operator==(const RankedEntry&) const = default;
};

/// Ordered candidates for one query. Well-formed lists have scores
/// non-increasing with rank, score ties ordered by doc_id ascending, ranks
/// contiguous from 1 and unique doc ids.
struct RankedList {
    std::string query_id;
    std::vector<RankedEntry> entries;

    std::size_t size() const noexcept { return entries.size(); }
    bool empty() const noexcept { return entries.empty(); }

    std::vector<std::string> doc_ids() const;

    bool operator==(const RankedList&) const = default;
};

/// Score descending, then doc_id ascending.
inline bool ranks_before(const RankedEntry& a, const RankedEntry& b) {
    if (a.score != b.score) {
        return a.score > b.score;
    }
    return a.doc_id < b.doc_id;
}

/// Sorts by the tie rule, keeps the first k and renumbers ranks.
void sort_and_truncate(RankedList& list, std::size_t k);

/// Renumbers ranks 1..n in current order.
void renumber(RankedList& list);

/// Replaces scores with n - i so that any order is strictly decreasing.
void assign_positional_scores(RankedList& list);

bool is_well_formed(const RankedList& list);

} // namespace driftrank
