#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "subcluster/errors.hpp"
#include "subcluster/rng.hpp"

namespace subcluster {

// Parent-level confusion counts; rows index the true class, columns the
// predicted class.
struct ConfusionMatrix {
    std::vector<std::vector<long>> counts;
    std::vector<std::string> class_names;

    std::size_t num_classes() const { return counts.size(); }

    long total() const {
        long t = 0;
        for (const auto& row : counts)
            for (long v : row) t += v;
        return t;
    }

    long trace() const {
        long t = 0;
        for (std::size_t c = 0; c < counts.size(); ++c) t += counts[c][c];
        return t;
    }

    long row_sum(std::size_t c) const {
        long t = 0;
        for (long v : counts[c]) t += v;
        return t;
    }

    long col_sum(std::size_t c) const {
        long t = 0;
        for (const auto& row : counts) t += row[c];
        return t;
    }

    friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

inline ConfusionMatrix confusion(const std::vector<int>& true_labels,
                                 const std::vector<int>& pred_labels, std::size_t num_classes,
                                 std::vector<std::string> class_names = {}) {
    if (true_labels.size() != pred_labels.size())
        throw DimensionError("confusion: label vectors differ in length");
    ConfusionMatrix m;
    m.counts.assign(num_classes, std::vector<long>(num_classes, 0));
    m.class_names = std::move(class_names);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        const int t = true_labels[i], p = pred_labels[i];
        if (t < 0 || static_cast<std::size_t>(t) >= num_classes)
            throw LabelError("confusion: true label " + std::to_string(t) + " out of range");
        if (p < 0 || static_cast<std::size_t>(p) >= num_classes)
            throw LabelError("confusion: predicted label " + std::to_string(p) +
                             " out of range");
        m.counts[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)] += 1;
    }
    return m;
}

// Row-normalized matrix: rows with a positive sum divide through by it,
// all-zero rows stay zero.
inline std::vector<std::vector<double>> normalize_rows(const ConfusionMatrix& m) {
    std::vector<std::vector<double>> out(m.num_classes(),
                                         std::vector<double>(m.num_classes(), 0.0));
    for (std::size_t r = 0; r < m.num_classes(); ++r) {
        const long sum = m.row_sum(r);
        if (sum <= 0) continue;
        for (std::size_t c = 0; c < m.num_classes(); ++c)
            out[r][c] = static_cast<double>(m.counts[r][c]) / static_cast<double>(sum);
    }
    return out;
}

struct EvalReport {
    double accuracy = 0.0;
    double macro_recall = 0.0;
    double macro_precision = 0.0;
    double macro_f = 0.0;
    std::vector<double> per_class_fn;  // 1 - recall; 0 for classes absent from the split
    std::vector<double> per_class_fp;  // fall-out: false positives over negatives
    double var_fn = 0.0;
    double var_fp = 0.0;
    ConfusionMatrix confusion;
};

namespace detail {

inline double population_variance(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    return var / static_cast<double>(values.size());
}

}  // namespace detail

// Macro-averaged metrics over classes present in the split (positive row
// sum). Precision of a never-predicted class counts as 0, as does the
// F-score when precision and recall are both 0. The false-positive rate is
// fall-out, i.e. off-column mass over the class's negatives; classes
// covering every sample have no negatives and are skipped in var_fp.
inline EvalReport report(const ConfusionMatrix& m) {
    const long total = m.total();
    if (m.num_classes() == 0 || total == 0) throw EmptyInputError("report: empty confusion matrix");

    EvalReport rep;
    rep.confusion = m;
    rep.accuracy = static_cast<double>(m.trace()) / static_cast<double>(total);
    rep.per_class_fn.assign(m.num_classes(), 0.0);
    rep.per_class_fp.assign(m.num_classes(), 0.0);

    std::vector<double> fn_defined, fp_defined;
    double recall_sum = 0.0, precision_sum = 0.0, f_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < m.num_classes(); ++c) {
        const long row = m.row_sum(c);
        const long col = m.col_sum(c);
        const long diag = m.counts[c][c];

        const long negatives = total - row;
        if (negatives > 0) {
            rep.per_class_fp[c] =
                static_cast<double>(col - diag) / static_cast<double>(negatives);
            fp_defined.push_back(rep.per_class_fp[c]);
        }

        if (row == 0) continue;
        ++present;
        const double recall = static_cast<double>(diag) / static_cast<double>(row);
        const double precision =
            col > 0 ? static_cast<double>(diag) / static_cast<double>(col) : 0.0;
        recall_sum += recall;
        precision_sum += precision;
        if (precision + recall > 0.0)
            f_sum += 2.0 * precision * recall / (precision + recall);
        rep.per_class_fn[c] = 1.0 - recall;
        fn_defined.push_back(rep.per_class_fn[c]);
    }
    if (present > 0) {
        rep.macro_recall = recall_sum / static_cast<double>(present);
        rep.macro_precision = precision_sum / static_cast<double>(present);
        rep.macro_f = f_sum / static_cast<double>(present);
    }
    rep.var_fn = detail::population_variance(fn_defined);
    rep.var_fp = detail::population_variance(fp_defined);
    return rep;
}

// Stratified K-fold assignment. Indices are grouped by label, each stratum
// is shuffled and dealt round-robin; the dealing cursor carries across
// strata so small classes do not all land in fold 0.
inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k, Rng& rng,
                                                         const std::vector<int>& labels) {
    if (k < 2) throw ParameterError("kfold_split: need at least 2 folds");
    if (k > n) throw ParameterError("kfold_split: more folds than samples");
    if (labels.size() != n) throw DimensionError("kfold_split: labels length != n");

    int max_label = 0;
    for (int l : labels) {
        if (l < 0) throw LabelError("kfold_split: negative label");
        max_label = std::max(max_label, l);
    }
    std::vector<std::vector<std::size_t>> strata(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < n; ++i)
        strata[static_cast<std::size_t>(labels[i])].push_back(i);

    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t cursor = 0;
    for (auto& stratum : strata) {
        rng.shuffle(stratum);
        for (std::size_t idx : stratum) {
            folds[cursor % k].push_back(idx);
            ++cursor;
        }
    }
    for (auto& fold : folds) std::sort(fold.begin(), fold.end());
    return folds;
}

}  // namespace subcluster
