#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "subcluster/clustering.hpp"
#include "subcluster/controller.hpp"
#include "subcluster/dataset.hpp"
#include "subcluster/encoder.hpp"
#include "subcluster/errors.hpp"
#include "subcluster/matrix.hpp"
#include "subcluster/metrics.hpp"
#include "subcluster/rng.hpp"
#include "subcluster/subclass_map.hpp"

namespace subcluster {

enum class Mode { standard, triplet, clustering, clustering_triplet, fixed_k };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::standard: return "standard";
        case Mode::triplet: return "triplet";
        case Mode::clustering: return "clustering";
        case Mode::clustering_triplet: return "clustering_triplet";
        case Mode::fixed_k: return "fixed_k";
    }
    throw ParameterError("mode_name: unknown mode");
}

inline Mode mode_from_name(const std::string& name) {
    for (Mode m : {Mode::standard, Mode::triplet, Mode::clustering, Mode::clustering_triplet,
                   Mode::fixed_k})
        if (name == mode_name(m)) return m;
    throw ParameterError("unknown mode '" + name + "'");
}

inline bool mode_uses_triplet(Mode m) {
    return m == Mode::triplet || m == Mode::clustering_triplet || m == Mode::fixed_k;
}

inline bool mode_uses_controller(Mode m) {
    return m == Mode::clustering || m == Mode::clustering_triplet;
}

struct RunConfig {
    Mode mode = Mode::clustering_triplet;
    std::size_t fixed_k = 5;  // fixed_k mode only
    double learning_rate = 2e-4;
    std::size_t batch_size = 128;
    double alpha = 0.2;  // triplet margin
    ControllerConfig controller;
    EncoderConfig encoder;  // input_dim taken from the data at run time
    std::size_t epochs_max = 100;
    std::size_t patience = 10;
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    bool negatives_any_pseudo = false;
    bool frozen_features = false;  // cluster on raw inputs instead of embeddings

    void check() const {
        if (learning_rate < 0.0) throw ParameterError("learning_rate must be non-negative");
        if (batch_size == 0) throw ParameterError("batch_size must be positive");
        if (alpha < 0.0) throw ParameterError("alpha must be non-negative");
        if (epochs_max == 0) throw ParameterError("epochs_max must be positive");
        if (patience == 0) throw ParameterError("patience must be positive");
        if (folds < 2) throw ParameterError("folds must be at least 2");
        if (mode == Mode::fixed_k && fixed_k == 0)
            throw ParameterError("fixed_k must be positive");
        controller.check();
    }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

namespace detail {

// Group per-class cluster assignments into one contiguous pseudo-label map.
inline SubClassMap build_map(std::size_t num_classes, const std::vector<int>& parent_labels,
                             const std::vector<std::vector<std::size_t>>& class_indices,
                             const std::vector<std::vector<int>>& class_assignments,
                             const std::vector<std::size_t>& class_k) {
    SubClassMap map;
    map.sample_pseudo.assign(parent_labels.size(), -1);
    int next = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        std::vector<int> ids;
        for (std::size_t j = 0; j < class_k[c]; ++j) {
            ids.push_back(next);
            map.pseudo_to_parent.push_back(static_cast<int>(c));
            ++next;
        }
        for (std::size_t m = 0; m < class_indices[c].size(); ++m)
            map.sample_pseudo[class_indices[c][m]] = ids[static_cast<std::size_t>(
                class_assignments[c].empty() ? 0 : class_assignments[c][m])];
        map.parent_to_pseudo.push_back(std::move(ids));
    }
    map.check();
    return map;
}

inline std::vector<std::vector<std::size_t>> indices_by_class(
    const std::vector<int>& parent_labels, std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> out(num_classes);
    for (std::size_t i = 0; i < parent_labels.size(); ++i)
        out[static_cast<std::size_t>(parent_labels[i])].push_back(i);
    return out;
}

// Relabel clusters into centroid-lexicographic order. Cluster ids coming
// out of K-Means follow the random seeding order, so without this a
// reclustering pass would permute pseudo-labels between epochs even when
// the partition itself is unchanged, and the preserved head rows would
// point at the wrong sub-classes.
inline void canonicalize_clusters(ClusterResult& res) {
    std::vector<std::size_t> order(res.k);
    for (std::size_t j = 0; j < res.k; ++j) order[j] = j;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto ra = res.centroids.row(a);
        const auto rb = res.centroids.row(b);
        return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
    });
    std::vector<int> relabel(res.k);
    Matrix sorted(res.k, res.centroids.cols());
    for (std::size_t pos = 0; pos < res.k; ++pos) {
        relabel[order[pos]] = static_cast<int>(pos);
        sorted.set_row(pos, res.centroids.row(order[pos]));
    }
    res.centroids = std::move(sorted);
    for (int& a : res.assignment) a = relabel[static_cast<std::size_t>(a)];
}

}  // namespace detail

// Re-derive sub-class pseudo-labels: embed the training samples with the
// current encoder (or take raw features when frozen), then split each class
// with X-Means capped at its budget. Budget-1 classes and classes with
// fewer than two samples pass through unclustered.
inline SubClassMap recluster(const Dataset& train, const EncoderModel& model,
                             const ClusterBudget& budgets, Rng& rng,
                             bool frozen_features = false) {
    train.check();
    const std::size_t num_classes = train.num_classes();
    if (budgets.num_classes() != num_classes)
        throw DimensionError("recluster: budget count != class count");

    Matrix features;
    if (frozen_features) {
        features = train.features;
    } else {
        features = forward(model, train.features).first;
    }

    const auto by_class = detail::indices_by_class(train.parent_labels, num_classes);
    std::vector<std::vector<int>> assignments(num_classes);
    std::vector<std::size_t> ks(num_classes, 1);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto& idx = by_class[c];
        const auto budget = static_cast<std::size_t>(budgets.num_allowed[c]);
        if (budget <= 1 || idx.size() < 2) continue;
        const Matrix local = gather_rows(features, idx);
        ClusterResult res = xmeans_capped(local, std::min(budget, idx.size()), rng);
        detail::canonicalize_clusters(res);
        ks[c] = res.k;
        assignments[c] = std::move(res.assignment);
    }
    return detail::build_map(num_classes, train.parent_labels, by_class, assignments, ks);
}

// One-shot K-Means partition of every class into fixed_k sub-classes
// (capped by class size), used by the fixed_k comparator.
inline SubClassMap fixed_k_map(const Dataset& train, const EncoderModel& model,
                               std::size_t fixed_k, Rng& rng, bool frozen_features = false) {
    train.check();
    if (fixed_k == 0) throw ParameterError("fixed_k_map: fixed_k must be positive");
    const std::size_t num_classes = train.num_classes();

    Matrix features;
    if (frozen_features) {
        features = train.features;
    } else {
        features = forward(model, train.features).first;
    }

    const auto by_class = detail::indices_by_class(train.parent_labels, num_classes);
    std::vector<std::vector<int>> assignments(num_classes);
    std::vector<std::size_t> ks(num_classes, 1);
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto& idx = by_class[c];
        const std::size_t k = std::min(fixed_k, idx.size());
        if (k <= 1) continue;
        ClusterResult res = kmeans(gather_rows(features, idx), k, rng);
        detail::canonicalize_clusters(res);
        ks[c] = res.k;
        assignments[c] = std::move(res.assignment);
    }
    return detail::build_map(num_classes, train.parent_labels, by_class, assignments, ks);
}

// One pass over the shuffled training set in mini-batches. Returns the
// unweighted mean of the per-batch loss breakdowns.
inline LossBreakdown train_epoch(EncoderModel& model, const Dataset& train,
                                 const SubClassMap& map, const RunConfig& cfg, Rng& rng) {
    if (train.size() == 0) throw EmptyInputError("train_epoch: empty training set");
    if (static_cast<int>(model.head_classes) != map.total_pseudo())
        throw DimensionError("train_epoch: head size does not match pseudo-label count");
    if (map.sample_pseudo.size() != train.size())
        throw DimensionError("train_epoch: map does not cover the training set");

    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const bool use_triplet = mode_uses_triplet(cfg.mode);
    LossBreakdown sum;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + cfg.batch_size);
        std::vector<std::size_t> batch_idx(order.begin() + static_cast<long>(start),
                                           order.begin() + static_cast<long>(end));
        const Matrix batch = gather_rows(train.features, batch_idx);
        std::vector<int> pseudo(batch_idx.size()), parent(batch_idx.size());
        for (std::size_t i = 0; i < batch_idx.size(); ++i) {
            pseudo[i] = map.sample_pseudo[batch_idx[i]];
            parent[i] = train.parent_labels[batch_idx[i]];
        }
        const LossBreakdown b =
            backward_and_step(model, batch, pseudo, parent, cfg.alpha, cfg.learning_rate,
                              use_triplet, cfg.negatives_any_pseudo, batches);
        sum.cross_entropy += b.cross_entropy;
        sum.triplet += b.triplet;
        sum.total += b.total;
        ++batches;
    }
    LossBreakdown mean;
    mean.alpha = cfg.alpha;
    mean.cross_entropy = sum.cross_entropy / static_cast<double>(batches);
    mean.triplet = sum.triplet / static_cast<double>(batches);
    mean.total = sum.total / static_cast<double>(batches);
    return mean;
}

// Parent-level evaluation: argmax over pseudo-label logits, folded back to
// the parent class through the reverse map.
inline EvalReport validate(const EncoderModel& model, const Dataset& val,
                           const SubClassMap& map) {
    if (val.size() == 0) throw EmptyInputError("validate: empty validation set");
    if (static_cast<int>(model.head_classes) != map.total_pseudo())
        throw DimensionError("validate: head size does not match pseudo-label count");

    const Matrix logits = forward(model, val.features).second;
    std::vector<int> pred(val.size());
    for (std::size_t i = 0; i < val.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        pred[i] = map.pseudo_to_parent[best];
    }
    return report(confusion(val.parent_labels, pred, val.num_classes(), val.class_names));
}

struct EpochRecord {
    std::size_t epoch = 0;               // 1-based
    std::vector<int> budgets;            // caps in force for this epoch's map
    std::vector<int> cluster_counts;     // per class, from the map trained on
    LossBreakdown losses;
    EvalReport validation;
};

struct FoldResult {
    std::size_t fold = 0;
    std::vector<std::size_t> train_indices, val_indices;
    std::vector<EpochRecord> epochs;
    std::size_t best_epoch = 0;  // 1-based
    EvalReport best_report;
    EncoderModel best_model;
    SubClassMap best_map;
    std::vector<ClusterBudget> budget_history;  // initial state plus one entry per update
};

struct RunResult {
    RunConfig config;
    std::vector<std::string> class_names;
    std::vector<FoldResult> folds;
    double mean_accuracy = 0.0;
    double mean_macro_recall = 0.0;
    double mean_macro_precision = 0.0;
    double mean_macro_f = 0.0;
    double mean_var_fn = 0.0;
    double mean_var_fp = 0.0;
};

namespace detail {

inline Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
    Dataset out;
    out.features = gather_rows(data.features, indices);
    out.parent_labels.reserve(indices.size());
    for (std::size_t i : indices) out.parent_labels.push_back(data.parent_labels[i]);
    if (!data.mode_ids.empty()) {
        out.mode_ids.reserve(indices.size());
        for (std::size_t i : indices) out.mode_ids.push_back(data.mode_ids[i]);
    }
    out.class_names = data.class_names;
    return out;
}

// Fork tags for the per-fold random streams. Tags are disjoint across
// purposes so adding or removing a consumer never shifts another stream.
constexpr std::uint64_t kTagFolds = 0xF01D;
constexpr std::uint64_t kTagModelInit = 0;
constexpr std::uint64_t kTagFixedCluster = 9999;
constexpr std::uint64_t kTagFixedResize = 9998;
constexpr std::uint64_t kTagEpochBase = 100;
constexpr std::uint64_t kTagReclusterBase = 10000;
constexpr std::uint64_t kTagResizeBase = 20000;

inline FoldResult run_fold(const RunConfig& cfg, const Dataset& data,
                           const std::vector<std::vector<std::size_t>>& folds,
                           std::size_t fold_index, Rng& root) {
    const std::size_t num_classes = data.num_classes();
    FoldResult result;
    result.fold = fold_index;
    result.val_indices = folds[fold_index];
    for (std::size_t f = 0; f < folds.size(); ++f)
        if (f != fold_index)
            result.train_indices.insert(result.train_indices.end(), folds[f].begin(),
                                        folds[f].end());
    std::sort(result.train_indices.begin(), result.train_indices.end());

    const Dataset train = subset(data, result.train_indices);
    const Dataset val = subset(data, result.val_indices);

    Rng fold_rng = root.fork(fold_index + 1);
    EncoderConfig enc = cfg.encoder;
    enc.input_dim = data.dim();
    Rng init_rng = fold_rng.fork(kTagModelInit);
    EncoderModel model = init_encoder(enc, num_classes, init_rng);

    ClusterBudget budgets = ClusterBudget::initial(num_classes);
    SubClassMap map =
        SubClassMap::identity(static_cast<int>(num_classes), train.parent_labels);
    if (cfg.mode == Mode::fixed_k) {
        Rng cluster_rng = fold_rng.fork(kTagFixedCluster);
        SubClassMap fixed =
            fixed_k_map(train, model, cfg.fixed_k, cluster_rng, cfg.frozen_features);
        Rng resize_rng = fold_rng.fork(kTagFixedResize);
        model = resize_head(model, map, fixed, resize_rng);
        map = std::move(fixed);
        for (std::size_t c = 0; c < num_classes; ++c)
            budgets.num_allowed[c] = map.cluster_count(static_cast<int>(c));
    }
    result.budget_history.push_back(budgets);

    double best_f = -1.0;
    std::size_t since_best = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs_max; ++epoch) {
        Rng epoch_rng = fold_rng.fork(kTagEpochBase + epoch);
        const LossBreakdown losses = train_epoch(model, train, map, cfg, epoch_rng);
        const EvalReport rep = validate(model, val, map);

        EpochRecord record;
        record.epoch = epoch;
        record.budgets = budgets.num_allowed;
        record.cluster_counts = map.cluster_counts();
        record.losses = losses;
        record.validation = rep;
        result.epochs.push_back(record);

        if (rep.macro_f > best_f) {
            best_f = rep.macro_f;
            since_best = 0;
            result.best_epoch = epoch;
            result.best_report = rep;
            result.best_model = model;
            result.best_map = map;
        } else {
            ++since_best;
        }
        if (since_best >= cfg.patience) break;

        if (mode_uses_controller(cfg.mode)) {
            budgets = update_budgets(budgets, rep.per_class_fn, cfg.controller);
            result.budget_history.push_back(budgets);
            Rng recluster_rng = fold_rng.fork(kTagReclusterBase + epoch);
            SubClassMap next =
                recluster(train, model, budgets, recluster_rng, cfg.frozen_features);
            if (next.cluster_counts() != map.cluster_counts()) {
                Rng resize_rng = fold_rng.fork(kTagResizeBase + epoch);
                model = resize_head(model, map, next, resize_rng);
            }
            map = std::move(next);
        }
    }
    return result;
}

}  // namespace detail

// Full K-fold run of one training mode. All randomness derives from
// cfg.seed, so repeated calls are bit-identical and every mode sees the
// same fold split for a given seed.
inline RunResult run(const RunConfig& cfg, const Dataset& data) {
    cfg.check();
    data.check();
    if (data.size() < cfg.folds) throw ParameterError("run: fewer samples than folds");
    if (data.num_classes() < 2) throw ParameterError("run: need at least 2 classes");

    Rng root(cfg.seed);
    Rng fold_split_rng = root.fork(detail::kTagFolds);
    const auto folds =
        kfold_split(data.size(), cfg.folds, fold_split_rng, data.parent_labels);

    RunResult result;
    result.config = cfg;
    result.class_names = data.class_names;
    for (std::size_t f = 0; f < cfg.folds; ++f) {
        try {
            result.folds.push_back(detail::run_fold(cfg, data, folds, f, root));
        } catch (const std::exception& e) {
            throw std::runtime_error("fold " + std::to_string(f) + ": " + e.what());
        }
    }
    for (const auto& fold : result.folds) {
        result.mean_accuracy += fold.best_report.accuracy;
        result.mean_macro_recall += fold.best_report.macro_recall;
        result.mean_macro_precision += fold.best_report.macro_precision;
        result.mean_macro_f += fold.best_report.macro_f;
        result.mean_var_fn += fold.best_report.var_fn;
        result.mean_var_fp += fold.best_report.var_fp;
    }
    const double k = static_cast<double>(result.folds.size());
    result.mean_accuracy /= k;
    result.mean_macro_recall /= k;
    result.mean_macro_precision /= k;
    result.mean_macro_f /= k;
    result.mean_var_fn /= k;
    result.mean_var_fp /= k;
    return result;
}

}  // namespace subcluster
