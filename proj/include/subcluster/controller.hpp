#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "subcluster/errors.hpp"

namespace subcluster {

struct ControllerConfig {
    double confusion_threshold = 0.3;
    int max_clusters = 5;

    void check() const {
        if (!(confusion_threshold > 0.0 && confusion_threshold < 1.0))
            throw ParameterError("confusion_threshold must lie in (0,1)");
        if (max_clusters < 1) throw ParameterError("max_clusters must be at least 1");
    }

    friend bool operator==(const ControllerConfig&, const ControllerConfig&) = default;
};

// Per-class cluster budget with the hysteresis flag: 0 while growing toward
// the cap, 1 while shrinking back toward one cluster.
struct ClusterBudget {
    std::vector<int> num_allowed;
    std::vector<int> flag;

    static ClusterBudget initial(std::size_t num_classes) {
        ClusterBudget b;
        b.num_allowed.assign(num_classes, 1);
        b.flag.assign(num_classes, 0);
        return b;
    }

    std::size_t num_classes() const { return num_allowed.size(); }

    void check(int max_clusters) const {
        if (flag.size() != num_allowed.size())
            throw DimensionError("ClusterBudget: flag/num_allowed size mismatch");
        for (std::size_t c = 0; c < num_allowed.size(); ++c) {
            if (num_allowed[c] < 1 || num_allowed[c] > max_clusters)
                throw ParameterError("ClusterBudget: num_allowed out of range for class " +
                                     std::to_string(c));
            if (flag[c] != 0 && flag[c] != 1)
                throw ParameterError("ClusterBudget: flag must be 0 or 1 for class " +
                                     std::to_string(c));
        }
    }

    friend bool operator==(const ClusterBudget&, const ClusterBudget&) = default;
};

// One budget adjustment from per-class validation false-negative rates.
// A class whose fn exceeds the threshold grows its budget while its flag is
// 0 (raising the flag on hitting the cap) and shrinks it while the flag is
// 1 (clearing the flag on returning to one cluster). Classes at or below
// the threshold are left untouched.
inline ClusterBudget update_budgets(const ClusterBudget& budgets,
                                    const std::vector<double>& per_class_fn,
                                    const ControllerConfig& cfg) {
    cfg.check();
    budgets.check(cfg.max_clusters);
    if (per_class_fn.size() != budgets.num_classes())
        throw DimensionError("update_budgets: fn vector length != class count");

    ClusterBudget out = budgets;
    for (std::size_t c = 0; c < out.num_classes(); ++c) {
        if (!(per_class_fn[c] > cfg.confusion_threshold)) continue;
        if (out.flag[c] == 0) {
            if (out.num_allowed[c] < cfg.max_clusters) out.num_allowed[c] += 1;
            if (out.num_allowed[c] == cfg.max_clusters) out.flag[c] = 1;
        } else {
            if (out.num_allowed[c] > 1) out.num_allowed[c] -= 1;
            if (out.num_allowed[c] == 1) out.flag[c] = 0;
        }
    }
    return out;
}

struct BudgetTrace {
    std::vector<std::vector<int>> sequences;  // per class, one value per history entry
    std::vector<int> reversals;               // direction changes per class
    std::vector<int> final_values;
};

inline BudgetTrace budget_trace(const std::vector<ClusterBudget>& history) {
    if (history.empty()) throw EmptyInputError("budget_trace: empty history");
    const std::size_t num_classes = history.front().num_classes();
    for (const auto& b : history)
        if (b.num_classes() != num_classes)
            throw DimensionError("budget_trace: inconsistent class counts in history");

    BudgetTrace trace;
    trace.sequences.assign(num_classes, {});
    trace.reversals.assign(num_classes, 0);
    trace.final_values.resize(num_classes);
    for (std::size_t c = 0; c < num_classes; ++c) {
        auto& seq = trace.sequences[c];
        seq.reserve(history.size());
        for (const auto& b : history) seq.push_back(b.num_allowed[c]);
        int direction = 0;
        for (std::size_t i = 1; i < seq.size(); ++i) {
            const int step = seq[i] - seq[i - 1];
            if (step == 0) continue;
            const int sign = step > 0 ? 1 : -1;
            if (direction != 0 && sign != direction) ++trace.reversals[c];
            direction = sign;
        }
        trace.final_values[c] = seq.back();
    }
    return trace;
}

}  // namespace subcluster
