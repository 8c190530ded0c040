#include "driftrank/ranked_list.hpp"

#include <algorithm>
#include <unordered_set>

namespace driftrank {

std::vector<std::string> RankedList::doc_ids() const {
    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) {
        ids.push_back(e.doc_id);
    }
    return ids;
}

void sort_and_truncate(RankedList& list, std::size_t k) {
    auto& e = list.entries;
    if (k < e.size()) {
        std::partial_sort(e.begin(), e.begin() + static_cast<std::ptrdiff_t>(k), e.end(), ranks_before);
        e.resize(k);
    } else {
        std::sort(e.begin(), e.end(), ranks_before);
    }
    renumber(list);
}

void renumber(RankedList& list) {
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        list.entries[i].rank = i + 1;
    }
}

void assign_positional_scores(RankedList& list) {
    const auto n = list.entries.size();
    for (std::size_t i = 0; i < n; ++i) {
        list.entries[i].score = static_cast<double>(n - i);
        list.entries[i].rank = i + 1;
    }
}

bool is_well_formed(const RankedList& list) {
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
        const auto& e = list.entries[i];
        if (e.rank != i + 1 || !seen.insert(e.doc_id).second) {
            return false;
        }
        if (i > 0 && ranks_before(e, list.entries[i - 1])) {
            return false;
        }
    }
    return true;
}

} // namespace driftrank
