#pragma once

#include <string>
#include <vector>

#include "subcluster/errors.hpp"

namespace subcluster {

// Partition of every parent class into sub-class pseudo-labels.
//
// Pseudo ids are contiguous and grouped by parent: parent 0 owns ids
// [0, k_0), parent 1 owns [k_0, k_0 + k_1), and so on. Training treats each
// pseudo-label as an independent class; evaluation folds predictions back to
// parents through pseudo_to_parent.
struct SubClassMap {
    std::vector<std::vector<int>> parent_to_pseudo;  // per parent, global pseudo ids
    std::vector<int> sample_pseudo;                  // per training sample
    std::vector<int> pseudo_to_parent;               // size = total pseudo count

    int total_pseudo() const { return static_cast<int>(pseudo_to_parent.size()); }
    int num_parents() const { return static_cast<int>(parent_to_pseudo.size()); }
    int cluster_count(int parent) const {
        return static_cast<int>(parent_to_pseudo[parent].size());
    }

    std::vector<int> cluster_counts() const {
        std::vector<int> counts(parent_to_pseudo.size());
        for (std::size_t p = 0; p < parent_to_pseudo.size(); ++p)
            counts[p] = static_cast<int>(parent_to_pseudo[p].size());
        return counts;
    }

    // One pseudo-label per parent; the state every run starts from.
    static SubClassMap identity(int num_classes, const std::vector<int>& parent_labels) {
        SubClassMap map;
        map.parent_to_pseudo.resize(num_classes);
        map.pseudo_to_parent.resize(num_classes);
        for (int c = 0; c < num_classes; ++c) {
            map.parent_to_pseudo[c] = {c};
            map.pseudo_to_parent[c] = c;
        }
        map.sample_pseudo = parent_labels;
        return map;
    }

    void check() const {
        int next = 0;
        for (std::size_t p = 0; p < parent_to_pseudo.size(); ++p) {
            if (parent_to_pseudo[p].empty())
                throw DimensionError("SubClassMap: parent " + std::to_string(p) +
                                     " has no pseudo-label");
            for (int id : parent_to_pseudo[p]) {
                if (id != next++)
                    throw DimensionError("SubClassMap: pseudo ids not contiguous");
                if (pseudo_to_parent[id] != static_cast<int>(p))
                    throw DimensionError("SubClassMap: reverse map mismatch");
            }
        }
        if (next != total_pseudo())
            throw DimensionError("SubClassMap: reverse map size mismatch");
        for (int id : sample_pseudo)
            if (id < 0 || id >= next) throw LabelError("SubClassMap: sample pseudo out of range");
    }
};

}  // namespace subcluster
