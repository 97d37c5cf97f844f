#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <vector>

#include "subcluster/pipeline.hpp"
#include "subcluster/report_io.hpp"

using namespace subcluster;
namespace fs = std::filesystem;

namespace {

Dataset blob_dataset(std::size_t num_classes, std::size_t per_class, std::uint64_t seed) {
    GeneratorSpec spec;
    spec.dim = 4;
    spec.sigma = 1.0;
    spec.separation = 6.0;
    spec.class_separation = 12.0;
    spec.seed = seed;
    for (std::size_t c = 0; c < num_classes; ++c)
        spec.classes.push_back({.name = "", .num_modes = 1, .samples_per_mode = per_class});
    return generate(spec);
}

Dataset two_mode_dataset(std::uint64_t seed) {
    GeneratorSpec spec;
    spec.dim = 4;
    spec.sigma = 1.0;
    spec.separation = 20.0;
    spec.class_separation = 10.0;
    spec.seed = seed;
    spec.classes = {{.name = "", .num_modes = 2, .samples_per_mode = 20}};
    return generate(spec);
}

EncoderModel tiny_model(std::size_t input_dim, std::size_t head, std::uint64_t seed) {
    EncoderConfig cfg;
    cfg.input_dim = input_dim;
    cfg.hidden = {8};
    cfg.embed_dim = 4;
    Rng rng(seed);
    return init_encoder(cfg, head, rng);
}

RunConfig small_run_config(Mode mode) {
    RunConfig cfg;
    cfg.mode = mode;
    cfg.learning_rate = 1e-3;
    cfg.batch_size = 16;
    cfg.epochs_max = 4;
    cfg.patience = 4;
    cfg.folds = 3;
    cfg.seed = 11;
    cfg.encoder.hidden = {8};
    cfg.encoder.embed_dim = 4;
    return cfg;
}

double purity_against_modes(const SubClassMap& map, const std::vector<int>& mode_ids) {
    std::map<int, std::map<int, int>> votes;
    for (std::size_t i = 0; i < mode_ids.size(); ++i)
        ++votes[map.sample_pseudo[i]][mode_ids[i]];
    int agree = 0;
    for (const auto& [pseudo, counts] : votes) {
        int best = 0;
        for (const auto& [mode, n] : counts) best = std::max(best, n);
        agree += best;
    }
    return static_cast<double>(agree) / static_cast<double>(mode_ids.size());
}

}  // namespace

TEST_CASE("recluster with unit budgets returns the identity map") {
    const Dataset ds = blob_dataset(3, 8, 5);
    const EncoderModel model = tiny_model(ds.dim(), 3, 1);
    ClusterBudget budgets = ClusterBudget::initial(3);
    Rng rng(7);
    const SubClassMap map = recluster(ds, model, budgets, rng);
    CHECK(map.total_pseudo() == 3);
    CHECK(map.cluster_counts() == std::vector<int>{1, 1, 1});
    for (std::size_t i = 0; i < ds.size(); ++i)
        CHECK(map.pseudo_to_parent[map.sample_pseudo[i]] == ds.parent_labels[i]);
}

TEST_CASE("recluster recovers well separated modes on raw features") {
    const Dataset ds = two_mode_dataset(3);
    const EncoderModel model = tiny_model(ds.dim(), 1, 1);
    ClusterBudget budgets = ClusterBudget::initial(1);
    budgets.num_allowed[0] = 3;
    Rng rng(13);
    const SubClassMap map = recluster(ds, model, budgets, rng, /*frozen_features=*/true);
    CHECK(map.cluster_count(0) == 2);
    CHECK(purity_against_modes(map, ds.mode_ids) >= 0.95);
}

TEST_CASE("recluster is deterministic for a fixed generator") {
    const Dataset ds = two_mode_dataset(4);
    const EncoderModel model = tiny_model(ds.dim(), 1, 2);
    ClusterBudget budgets = ClusterBudget::initial(1);
    budgets.num_allowed[0] = 4;
    Rng a(99), b(99);
    const SubClassMap ma = recluster(ds, model, budgets, a);
    const SubClassMap mb = recluster(ds, model, budgets, b);
    CHECK(ma.sample_pseudo == mb.sample_pseudo);
    CHECK(ma.parent_to_pseudo == mb.parent_to_pseudo);
}

TEST_CASE("cluster counts never exceed budgets") {
    const Dataset ds = two_mode_dataset(5);
    const EncoderModel model = tiny_model(ds.dim(), 1, 2);
    for (int budget : {1, 2, 3}) {
        ClusterBudget budgets = ClusterBudget::initial(1);
        budgets.num_allowed[0] = budget;
        Rng rng(17);
        const SubClassMap map = recluster(ds, model, budgets, rng, true);
        CHECK(map.cluster_count(0) <= budget);
    }
}

TEST_CASE("standard mode reports a zero triplet component") {
    const Dataset ds = blob_dataset(2, 10, 6);
    EncoderModel model = tiny_model(ds.dim(), 2, 3);
    const SubClassMap map = SubClassMap::identity(2, ds.parent_labels);
    RunConfig cfg = small_run_config(Mode::standard);
    Rng rng(1);
    const LossBreakdown losses = train_epoch(model, ds, map, cfg, rng);
    CHECK(losses.triplet == 0.0);
    CHECK(losses.total == losses.cross_entropy);
}

TEST_CASE("zero learning rate leaves the model fixed") {
    const Dataset ds = blob_dataset(2, 10, 7);
    EncoderModel model = tiny_model(ds.dim(), 2, 4);
    const EncoderModel before = model;
    const SubClassMap map = SubClassMap::identity(2, ds.parent_labels);
    RunConfig cfg = small_run_config(Mode::standard);
    cfg.learning_rate = 0.0;
    Rng rng(1);
    const EvalReport first = validate(model, ds, map);
    train_epoch(model, ds, map, cfg, rng);
    for (std::size_t l = 0; l < model.weights.size(); ++l)
        CHECK(model.weights[l] == before.weights[l]);
    CHECK(model.head_w == before.head_w);
    const EvalReport second = validate(model, ds, map);
    CHECK(first.accuracy == second.accuracy);
    CHECK(first.macro_f == second.macro_f);
}

TEST_CASE("training loss falls on separable data") {
    const Dataset ds = blob_dataset(2, 20, 8);
    EncoderModel model = tiny_model(ds.dim(), 2, 5);
    const SubClassMap map = SubClassMap::identity(2, ds.parent_labels);
    RunConfig cfg = small_run_config(Mode::standard);
    cfg.learning_rate = 1e-2;
    Rng root(2);
    std::vector<double> losses;
    for (int epoch = 0; epoch < 5; ++epoch) {
        Rng rng = root.fork(static_cast<std::uint64_t>(epoch));
        losses.push_back(train_epoch(model, ds, map, cfg, rng).total);
    }
    CHECK(losses.back() < losses.front());
}

TEST_CASE("validate matches a hand-rolled argmax evaluation") {
    const Dataset ds = blob_dataset(3, 6, 9);
    const EncoderModel model = tiny_model(ds.dim(), 3, 6);
    const SubClassMap map = SubClassMap::identity(3, ds.parent_labels);
    const EvalReport rep = validate(model, ds, map);

    const Matrix logits = forward(model, ds.features).second;
    std::vector<int> pred(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        pred[i] = static_cast<int>(best);
    }
    const EvalReport direct = report(confusion(ds.parent_labels, pred, 3, ds.class_names));
    CHECK(rep.confusion.counts == direct.confusion.counts);
    CHECK(rep.accuracy == direct.accuracy);
    CHECK(rep.macro_f == direct.macro_f);
}

TEST_CASE("validation confusion rows count the class sizes") {
    const Dataset ds = blob_dataset(3, 7, 10);
    const EncoderModel model = tiny_model(ds.dim(), 3, 7);
    const SubClassMap map = SubClassMap::identity(3, ds.parent_labels);
    const EvalReport rep = validate(model, ds, map);
    for (std::size_t c = 0; c < 3; ++c) CHECK(rep.confusion.row_sum(c) == 7);
}

TEST_CASE("pseudo-label relabeling within a parent cannot change predictions") {
    const Dataset ds = blob_dataset(2, 10, 11);
    EncoderModel model = tiny_model(ds.dim(), 4, 8);

    SubClassMap map;
    map.parent_to_pseudo = {{0, 1}, {2, 3}};
    map.pseudo_to_parent = {0, 0, 1, 1};
    map.sample_pseudo.assign(ds.size(), 0);
    for (std::size_t i = 0; i < ds.size(); ++i)
        map.sample_pseudo[i] = ds.parent_labels[i] == 0 ? (i % 2 == 0 ? 0 : 1)
                                                        : (i % 2 == 0 ? 2 : 3);
    const EvalReport base = validate(model, ds, map);

    // Swap the two pseudo labels of parent 0 together with their head rows.
    EncoderModel swapped = model;
    for (std::size_t j = 0; j < swapped.head_w.cols(); ++j)
        std::swap(swapped.head_w(0, j), swapped.head_w(1, j));
    std::swap(swapped.head_b[0], swapped.head_b[1]);
    SubClassMap swapped_map = map;
    for (int& p : swapped_map.sample_pseudo)
        if (p == 0) p = 1; else if (p == 1) p = 0;
    const EvalReport renamed = validate(swapped, ds, swapped_map);
    CHECK(base.confusion.counts == renamed.confusion.counts);
}

TEST_CASE("budgets stay flat outside the controller modes") {
    const Dataset ds = blob_dataset(3, 12, 12);
    for (Mode mode : {Mode::standard, Mode::triplet, Mode::fixed_k}) {
        RunConfig cfg = small_run_config(mode);
        cfg.fixed_k = 2;
        const RunResult res = run(cfg, ds);
        for (const auto& fold : res.folds) {
            REQUIRE(fold.budget_history.size() == 1);
            for (const auto& rec : fold.epochs)
                CHECK(rec.budgets == fold.budget_history[0].num_allowed);
        }
    }
}

TEST_CASE("controller modes respect budget bounds and record history") {
    const Dataset ds = blob_dataset(3, 12, 13);
    RunConfig cfg = small_run_config(Mode::clustering_triplet);
    const RunResult res = run(cfg, ds);
    for (const auto& fold : res.folds) {
        CHECK(fold.budget_history.size() >= 1);
        for (const auto& state : fold.budget_history)
            for (std::size_t c = 0; c < 3; ++c) {
                CHECK(state.num_allowed[c] >= 1);
                CHECK(state.num_allowed[c] <= cfg.controller.max_clusters);
            }
        for (const auto& rec : fold.epochs)
            for (std::size_t c = 0; c < 3; ++c)
                CHECK(rec.cluster_counts[c] <= rec.budgets[c]);
    }
}

TEST_CASE("every fold keeps head size equal to the pseudo-label count") {
    const Dataset ds = blob_dataset(3, 12, 14);
    for (Mode mode : {Mode::standard, Mode::clustering_triplet, Mode::fixed_k}) {
        RunConfig cfg = small_run_config(mode);
        cfg.fixed_k = 2;
        const RunResult res = run(cfg, ds);
        for (const auto& fold : res.folds) {
            CHECK(static_cast<int>(fold.best_model.head_classes) ==
                  fold.best_map.total_pseudo());
            CHECK(fold.best_epoch >= 1);
            CHECK(fold.best_epoch <= cfg.epochs_max);
        }
    }
}

TEST_CASE("full runs are bit-deterministic") {
    const Dataset ds = blob_dataset(3, 10, 15);
    RunConfig cfg = small_run_config(Mode::clustering_triplet);
    cfg.epochs_max = 3;
    const RunResult a = run(cfg, ds);
    const RunResult b = run(cfg, ds);
    CHECK(run_result_to_json(a).dump(2) == run_result_to_json(b).dump(2));
}

TEST_CASE("smoke run fills every aggregate field") {
    const Dataset ds = blob_dataset(2, 10, 16);
    RunConfig cfg = small_run_config(Mode::clustering);
    cfg.epochs_max = 2;
    const RunResult res = run(cfg, ds);
    REQUIRE(res.folds.size() == 3);
    CHECK(res.class_names == ds.class_names);
    for (double v : {res.mean_accuracy, res.mean_macro_recall, res.mean_macro_precision,
                     res.mean_macro_f, res.mean_var_fn, res.mean_var_fp})
        CHECK(std::isfinite(v));
    for (const auto& fold : res.folds) {
        CHECK(fold.train_indices.size() + fold.val_indices.size() == ds.size());
        CHECK_FALSE(fold.epochs.empty());
    }
}

TEST_CASE("checkpoints reload to bit-equal predictions") {
    const Dataset ds = blob_dataset(3, 10, 17);
    RunConfig cfg = small_run_config(Mode::clustering_triplet);
    cfg.epochs_max = 3;
    const RunResult res = run(cfg, ds);
    const auto& fold = res.folds[0];

    const fs::path path = fs::temp_directory_path() / "subcluster_ckpt_test.json";
    save_checkpoint(path.string(), fold.best_model, fold.best_map, ds.class_names);
    const Checkpoint loaded = load_checkpoint(path.string());

    CHECK(loaded.class_names == ds.class_names);
    for (std::size_t l = 0; l < fold.best_model.weights.size(); ++l) {
        CHECK(loaded.model.weights[l] == fold.best_model.weights[l]);
        CHECK(loaded.model.biases[l] == fold.best_model.biases[l]);
    }
    CHECK(loaded.model.head_w == fold.best_model.head_w);
    CHECK(loaded.model.head_b == fold.best_model.head_b);
    CHECK(loaded.map.pseudo_to_parent == fold.best_map.pseudo_to_parent);

    const EvalReport before = validate(fold.best_model, ds, fold.best_map);
    const EvalReport after = validate(loaded.model, ds, loaded.map);
    CHECK(before.confusion.counts == after.confusion.counts);
}

TEST_CASE("run rejects impossible configurations") {
    const Dataset ds = blob_dataset(2, 3, 18);
    RunConfig cfg = small_run_config(Mode::standard);
    cfg.folds = 99;
    CHECK_THROWS_AS(run(cfg, ds), ParameterError);

    GeneratorSpec one;
    one.dim = 2;
    one.seed = 1;
    one.classes = {{.name = "", .num_modes = 1, .samples_per_mode = 10}};
    const Dataset single = generate(one);
    RunConfig cfg2 = small_run_config(Mode::standard);
    CHECK_THROWS_AS(run(cfg2, single), ParameterError);

    RunConfig bad = small_run_config(Mode::standard);
    bad.learning_rate = -1.0;
    CHECK_THROWS_AS(bad.check(), ParameterError);
}
