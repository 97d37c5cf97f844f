#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>
#include <vector>

#include "subcluster/errors.hpp"
#include "subcluster/matrix.hpp"
#include "subcluster/rng.hpp"
#include "subcluster/subclass_map.hpp"

namespace subcluster {

struct EncoderConfig {
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden = {64, 64};  // ReLU layers
    std::size_t embed_dim = 16;                  // linear output layer
    bool normalize_embeddings = false;           // unit-norm embeddings before loss/head

    friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

// Moment buffers mirror the parameter layout one-to-one.
struct AdamState {
    std::vector<Matrix> m_weights, v_weights;
    std::vector<std::vector<double>> m_biases, v_biases;
    Matrix m_head_w, v_head_w;
    std::vector<double> m_head_b, v_head_b;
    long step = 0;

    friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Embedding network plus classifier head. weights[l] has shape (in_l, out_l);
// head_w has one row per pseudo-label so the head can be resized row-wise
// when the pseudo-label set changes between epochs.
struct EncoderModel {
    EncoderConfig config;
    std::size_t head_classes = 0;  // P
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    Matrix head_w;                 // (P, E)
    std::vector<double> head_b;    // P
    AdamState adam;

    bool all_finite() const {
        for (const auto& w : weights)
            if (!w.all_finite()) return false;
        for (const auto& b : biases)
            for (double v : b)
                if (!std::isfinite(v)) return false;
        if (!head_w.all_finite()) return false;
        for (double v : head_b)
            if (!std::isfinite(v)) return false;
        return true;
    }

    friend bool operator==(const EncoderModel&, const EncoderModel&) = default;
};

// Indices into one batch. anchor/positive share a pseudo-label; the negative
// comes from a different class.
struct Triplet {
    std::size_t anchor = 0;
    std::size_t positive = 0;
    std::size_t negative = 0;
};

struct LossBreakdown {
    double cross_entropy = 0.0;
    double triplet = 0.0;
    double total = 0.0;
    double alpha = 0.0;  // margin in effect
};

namespace detail {

inline double head_init_bound(std::size_t embed_dim) {
    return 1.0 / std::sqrt(static_cast<double>(embed_dim));
}

inline void init_head_row(Matrix& head_w, std::size_t row, Rng& rng) {
    const double bound = head_init_bound(head_w.cols());
    for (std::size_t j = 0; j < head_w.cols(); ++j)
        head_w(row, j) = (2.0 * rng.next_uniform() - 1.0) * bound;
}

}  // namespace detail

// He-initialized encoder layers, uniform head rows, zeroed Adam state.
inline EncoderModel init_encoder(const EncoderConfig& cfg, std::size_t head_classes, Rng& rng) {
    if (cfg.input_dim == 0) throw ParameterError("init_encoder: input_dim must be positive");
    if (cfg.embed_dim == 0) throw ParameterError("init_encoder: embed_dim must be positive");
    if (head_classes == 0) throw ParameterError("init_encoder: head_classes must be positive");

    std::vector<std::size_t> dims;
    dims.push_back(cfg.input_dim);
    dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
    dims.push_back(cfg.embed_dim);

    EncoderModel model;
    model.config = cfg;
    model.head_classes = head_classes;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t in = dims[l], out = dims[l + 1];
        Matrix w(in, out);
        const double scale = std::sqrt(2.0 / static_cast<double>(in));
        for (std::size_t i = 0; i < in; ++i)
            for (std::size_t j = 0; j < out; ++j) w(i, j) = scale * rng.next_gaussian();
        model.weights.push_back(std::move(w));
        model.biases.emplace_back(out, 0.0);
        model.adam.m_weights.emplace_back(in, out);
        model.adam.v_weights.emplace_back(in, out);
        model.adam.m_biases.emplace_back(out, 0.0);
        model.adam.v_biases.emplace_back(out, 0.0);
    }
    model.head_w = Matrix(head_classes, cfg.embed_dim);
    for (std::size_t r = 0; r < head_classes; ++r) detail::init_head_row(model.head_w, r, rng);
    model.head_b.assign(head_classes, 0.0);
    model.adam.m_head_w = Matrix(head_classes, cfg.embed_dim);
    model.adam.v_head_w = Matrix(head_classes, cfg.embed_dim);
    model.adam.m_head_b.assign(head_classes, 0.0);
    model.adam.v_head_b.assign(head_classes, 0.0);
    return model;
}

// Forward-pass activations kept for the backward pass. acts[0] is the input
// batch, acts[l] for l >= 1 the post-ReLU output of layer l-1, acts.back()
// the raw (pre-normalization) embedding.
struct ForwardCache {
    std::vector<Matrix> acts;
    std::vector<double> norms;  // per-row embedding norms; empty unless normalizing
    Matrix embeddings;          // after optional normalization
    Matrix logits;
};

inline ForwardCache forward_cached(const EncoderModel& model, const Matrix& batch) {
    if (batch.cols() != model.config.input_dim)
        throw DimensionError("forward: batch has " + std::to_string(batch.cols()) +
                             " columns, model expects " +
                             std::to_string(model.config.input_dim));
    ForwardCache cache;
    cache.acts.reserve(model.weights.size() + 1);
    cache.acts.push_back(batch);
    const std::size_t num_layers = model.weights.size();
    for (std::size_t l = 0; l < num_layers; ++l) {
        Matrix z = matmul(cache.acts.back(), model.weights[l]);
        add_row_inplace(z, model.biases[l]);
        if (l + 1 < num_layers) {  // embedding layer stays linear
            for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
        }
        cache.acts.push_back(std::move(z));
    }
    if (model.config.normalize_embeddings) {
        const Matrix& raw = cache.acts.back();
        cache.embeddings = raw;
        cache.norms.resize(raw.rows());
        for (std::size_t i = 0; i < raw.rows(); ++i) {
            double ss = 0.0;
            for (std::size_t j = 0; j < raw.cols(); ++j) ss += raw(i, j) * raw(i, j);
            const double n = std::sqrt(ss);
            cache.norms[i] = n;
            if (n > 1e-12)
                for (std::size_t j = 0; j < raw.cols(); ++j) cache.embeddings(i, j) /= n;
        }
    } else {
        cache.embeddings = cache.acts.back();
    }
    cache.logits = matmul_nt(cache.embeddings, model.head_w);
    add_row_inplace(cache.logits, model.head_b);
    return cache;
}

inline std::pair<Matrix, Matrix> forward(const EncoderModel& model, const Matrix& batch) {
    ForwardCache cache = forward_cached(model, batch);
    return {std::move(cache.embeddings), std::move(cache.logits)};
}

struct CrossEntropyResult {
    double loss = 0.0;
    Matrix grad_logits;  // d(mean loss)/d logits
};

// Mean softmax cross-entropy with log-sum-exp stabilization.
inline CrossEntropyResult cross_entropy_loss(const Matrix& logits,
                                             const std::vector<int>& labels) {
    const std::size_t batch = logits.rows(), num_classes = logits.cols();
    if (batch == 0) throw EmptyInputError("cross_entropy_loss: empty batch");
    if (labels.size() != batch)
        throw DimensionError("cross_entropy_loss: labels length != batch size");
    CrossEntropyResult result;
    result.grad_logits = Matrix(batch, num_classes);
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        const int y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
            throw LabelError("cross_entropy_loss: label " + std::to_string(y) +
                             " out of range [0, " + std::to_string(num_classes) + ")");
        double mx = logits(i, 0);
        for (std::size_t j = 1; j < num_classes; ++j) mx = std::max(mx, logits(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < num_classes; ++j) sum += std::exp(logits(i, j) - mx);
        loss += mx + std::log(sum) - logits(i, static_cast<std::size_t>(y));
        const double inv = 1.0 / (sum * static_cast<double>(batch));
        for (std::size_t j = 0; j < num_classes; ++j)
            result.grad_logits(i, j) = std::exp(logits(i, j) - mx) * inv;
        result.grad_logits(i, static_cast<std::size_t>(y)) -= 1.0 / static_cast<double>(batch);
    }
    result.loss = loss / static_cast<double>(batch);
    return result;
}

struct TripletLossResult {
    double loss = 0.0;
    Matrix grad_embeddings;  // d(mean loss)/d embeddings
};

// Mean over triplets of max(d(a,p) - d(a,n) + alpha, 0) with Euclidean
// distances. Inactive triplets (hinge at or below zero, including exact
// ties) contribute zero gradient; so do coincident embedding pairs.
inline TripletLossResult triplet_loss(const Matrix& embeddings,
                                      const std::vector<Triplet>& triplets, double alpha) {
    if (alpha < 0.0) throw ParameterError("triplet_loss: alpha must be non-negative");
    TripletLossResult result;
    result.grad_embeddings = Matrix(embeddings.rows(), embeddings.cols());
    if (triplets.empty()) return result;
    const std::size_t dim = embeddings.cols();
    const double inv = 1.0 / static_cast<double>(triplets.size());
    double loss = 0.0;
    for (const Triplet& t : triplets) {
        if (t.anchor >= embeddings.rows() || t.positive >= embeddings.rows() ||
            t.negative >= embeddings.rows())
            throw DimensionError("triplet_loss: triplet index out of range");
        const double d_ap = std::sqrt(sq_euclidean(embeddings.row(t.anchor),
                                                   embeddings.row(t.positive)));
        const double d_an = std::sqrt(sq_euclidean(embeddings.row(t.anchor),
                                                   embeddings.row(t.negative)));
        const double term = d_ap - d_an + alpha;
        if (term <= 0.0) continue;
        loss += term;
        if (d_ap > 0.0) {
            for (std::size_t j = 0; j < dim; ++j) {
                const double g = (embeddings(t.anchor, j) - embeddings(t.positive, j)) /
                                 d_ap * inv;
                result.grad_embeddings(t.anchor, j) += g;
                result.grad_embeddings(t.positive, j) -= g;
            }
        }
        if (d_an > 0.0) {
            for (std::size_t j = 0; j < dim; ++j) {
                const double g = (embeddings(t.anchor, j) - embeddings(t.negative, j)) /
                                 d_an * inv;
                result.grad_embeddings(t.anchor, j) -= g;
                result.grad_embeddings(t.negative, j) += g;
            }
        }
    }
    result.loss = loss * inv;
    return result;
}

// Batch-hard mining: for every anchor with at least one in-batch positive
// (same pseudo-label, different sample) and one in-batch negative, emit the
// farthest positive and nearest negative. Distance ties resolve to the
// lowest index. Negatives default to samples of a different parent class;
// with negatives_any_pseudo they may come from any other pseudo-label,
// including sibling sub-classes of the same parent.
inline std::vector<Triplet> mine_triplets(const Matrix& embeddings,
                                          const std::vector<int>& pseudo_labels,
                                          const std::vector<int>& parent_labels,
                                          bool negatives_any_pseudo = false) {
    const std::size_t batch = embeddings.rows();
    if (pseudo_labels.size() != batch || parent_labels.size() != batch)
        throw DimensionError("mine_triplets: label vectors must match batch size");
    std::vector<Triplet> out;
    for (std::size_t a = 0; a < batch; ++a) {
        long best_p = -1, best_n = -1;
        double far_p = -1.0, near_n = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < batch; ++j) {
            if (j == a) continue;
            const double d = sq_euclidean(embeddings.row(a), embeddings.row(j));
            if (pseudo_labels[j] == pseudo_labels[a]) {
                if (d > far_p) {
                    far_p = d;
                    best_p = static_cast<long>(j);
                }
            }
            const bool is_negative = negatives_any_pseudo
                                         ? pseudo_labels[j] != pseudo_labels[a]
                                         : parent_labels[j] != parent_labels[a];
            if (is_negative && d < near_n) {
                near_n = d;
                best_n = static_cast<long>(j);
            }
        }
        if (best_p >= 0 && best_n >= 0)
            out.push_back({a, static_cast<std::size_t>(best_p), static_cast<std::size_t>(best_n)});
    }
    return out;
}

// Parameter-shaped gradient accumulator.
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<std::vector<double>> biases;
    Matrix head_w;
    std::vector<double> head_b;

    static Gradients zeros_like(const EncoderModel& model) {
        Gradients g;
        for (const auto& w : model.weights) g.weights.emplace_back(w.rows(), w.cols());
        for (const auto& b : model.biases) g.biases.emplace_back(b.size(), 0.0);
        g.head_w = Matrix(model.head_w.rows(), model.head_w.cols());
        g.head_b.assign(model.head_b.size(), 0.0);
        return g;
    }
};

// Full backward pass for L_total = cross-entropy + (optional) triplet term.
// The triplet list is taken as given so callers (and the finite-difference
// oracle) can hold the mined selection fixed.
inline std::pair<LossBreakdown, Gradients> compute_gradients(
    const EncoderModel& model, const ForwardCache& cache,
    const std::vector<int>& pseudo_labels, const std::vector<Triplet>& triplets,
    double alpha, bool use_triplet) {
    CrossEntropyResult ce = cross_entropy_loss(cache.logits, pseudo_labels);

    LossBreakdown breakdown;
    breakdown.cross_entropy = ce.loss;
    breakdown.alpha = alpha;

    Gradients grads = Gradients::zeros_like(model);
    grads.head_w = matmul_tn(ce.grad_logits, cache.embeddings);
    grads.head_b = col_sums(ce.grad_logits);

    Matrix d_emb = matmul(ce.grad_logits, model.head_w);
    if (use_triplet) {
        TripletLossResult tl = triplet_loss(cache.embeddings, triplets, alpha);
        breakdown.triplet = tl.loss;
        for (std::size_t i = 0; i < d_emb.data().size(); ++i)
            d_emb.data()[i] += tl.grad_embeddings.data()[i];
    }
    breakdown.total = breakdown.cross_entropy + breakdown.triplet;

    // Through the optional unit-norm map: y = x / ||x||.
    Matrix delta;
    if (model.config.normalize_embeddings) {
        const Matrix& y = cache.embeddings;
        delta = Matrix(d_emb.rows(), d_emb.cols());
        for (std::size_t i = 0; i < d_emb.rows(); ++i) {
            const double n = cache.norms[i];
            if (n <= 1e-12) {  // zero embedding: pass gradient through unchanged
                for (std::size_t j = 0; j < d_emb.cols(); ++j) delta(i, j) = d_emb(i, j);
                continue;
            }
            double dot = 0.0;
            for (std::size_t j = 0; j < d_emb.cols(); ++j) dot += d_emb(i, j) * y(i, j);
            for (std::size_t j = 0; j < d_emb.cols(); ++j)
                delta(i, j) = (d_emb(i, j) - dot * y(i, j)) / n;
        }
    } else {
        delta = std::move(d_emb);
    }

    for (std::size_t li = model.weights.size(); li-- > 0;) {
        grads.weights[li] = matmul_tn(cache.acts[li], delta);
        grads.biases[li] = col_sums(delta);
        if (li > 0) {
            delta = matmul_nt(delta, model.weights[li]);
            // acts[li] is the post-ReLU output of layer li-1
            const Matrix& act = cache.acts[li];
            for (std::size_t i = 0; i < delta.data().size(); ++i)
                if (act.data()[i] <= 0.0) delta.data()[i] = 0.0;
        }
    }
    return {breakdown, std::move(grads)};
}

// One Adam update over every parameter tensor.
inline void adam_step(EncoderModel& model, const Gradients& grads, double lr,
                      double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8) {
    AdamState& adam = model.adam;
    adam.step += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam.step));
    auto update = [&](double& param, double g, double& m, double& v) {
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        param -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
    };
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        auto& w = model.weights[l].data();
        const auto& gw = grads.weights[l].data();
        auto& mw = adam.m_weights[l].data();
        auto& vw = adam.v_weights[l].data();
        for (std::size_t i = 0; i < w.size(); ++i) update(w[i], gw[i], mw[i], vw[i]);
        auto& b = model.biases[l];
        const auto& gb = grads.biases[l];
        for (std::size_t i = 0; i < b.size(); ++i)
            update(b[i], gb[i], adam.m_biases[l][i], adam.v_biases[l][i]);
    }
    {
        auto& w = model.head_w.data();
        const auto& gw = grads.head_w.data();
        auto& mw = adam.m_head_w.data();
        auto& vw = adam.v_head_w.data();
        for (std::size_t i = 0; i < w.size(); ++i) update(w[i], gw[i], mw[i], vw[i]);
        for (std::size_t i = 0; i < model.head_b.size(); ++i)
            update(model.head_b[i], grads.head_b[i], adam.m_head_b[i], adam.v_head_b[i]);
    }
}

// Mine, backpropagate, and apply one Adam step. Returns the loss breakdown
// for the batch; throws TrainingDivergenceError if the loss or any updated
// parameter goes non-finite.
inline LossBreakdown backward_and_step(EncoderModel& model, const Matrix& batch,
                                       const std::vector<int>& pseudo_labels,
                                       const std::vector<int>& parent_labels, double alpha,
                                       double lr, bool use_triplet,
                                       bool negatives_any_pseudo = false,
                                       std::size_t batch_index = 0) {
    ForwardCache cache = forward_cached(model, batch);
    std::vector<Triplet> triplets;
    if (use_triplet)
        triplets = mine_triplets(cache.embeddings, pseudo_labels, parent_labels,
                                 negatives_any_pseudo);
    auto [breakdown, grads] =
        compute_gradients(model, cache, pseudo_labels, triplets, alpha, use_triplet);
    if (!std::isfinite(breakdown.total))
        throw TrainingDivergenceError("non-finite training loss", batch_index);
    adam_step(model, grads, lr);
    if (!model.all_finite())
        throw TrainingDivergenceError("non-finite parameter after update", batch_index);
    return breakdown;
}

// Rebuild the classifier head for a new pseudo-label set. Parents whose
// cluster count is unchanged keep their rows (weights, bias, Adam moments)
// verbatim; parents whose count changed get freshly initialized rows with
// zeroed moments. Encoder layers are untouched.
inline EncoderModel resize_head(const EncoderModel& model, const SubClassMap& old_map,
                                const SubClassMap& new_map, Rng& rng) {
    if (old_map.num_parents() != new_map.num_parents())
        throw DimensionError("resize_head: maps cover different parent sets");
    if (static_cast<int>(model.head_classes) != old_map.total_pseudo())
        throw DimensionError("resize_head: model head does not match old map");

    EncoderModel out = model;
    const std::size_t embed_dim = model.config.embed_dim;
    const std::size_t new_total = static_cast<std::size_t>(new_map.total_pseudo());
    out.head_classes = new_total;
    out.head_w = Matrix(new_total, embed_dim);
    out.head_b.assign(new_total, 0.0);
    out.adam.m_head_w = Matrix(new_total, embed_dim);
    out.adam.v_head_w = Matrix(new_total, embed_dim);
    out.adam.m_head_b.assign(new_total, 0.0);
    out.adam.v_head_b.assign(new_total, 0.0);

    for (int p = 0; p < new_map.num_parents(); ++p) {
        const auto& old_ids = old_map.parent_to_pseudo[p];
        const auto& new_ids = new_map.parent_to_pseudo[p];
        if (old_ids.size() == new_ids.size()) {
            for (std::size_t i = 0; i < new_ids.size(); ++i) {
                const auto src = static_cast<std::size_t>(old_ids[i]);
                const auto dst = static_cast<std::size_t>(new_ids[i]);
                out.head_w.set_row(dst, model.head_w.row(src));
                out.head_b[dst] = model.head_b[src];
                out.adam.m_head_w.set_row(dst, model.adam.m_head_w.row(src));
                out.adam.v_head_w.set_row(dst, model.adam.v_head_w.row(src));
                out.adam.m_head_b[dst] = model.adam.m_head_b[src];
                out.adam.v_head_b[dst] = model.adam.v_head_b[src];
            }
        } else {
            for (int id : new_ids)
                detail::init_head_row(out.head_w, static_cast<std::size_t>(id), rng);
        }
    }
    return out;
}

}  // namespace subcluster
