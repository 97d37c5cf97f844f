#pragma once

#include <algorithm>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "subcluster/controller.hpp"
#include "subcluster/dataset.hpp"
#include "subcluster/encoder.hpp"
#include "subcluster/errors.hpp"
#include "subcluster/matrix.hpp"
#include "subcluster/pipeline.hpp"

namespace subcluster {

using ordered_json = nlohmann::ordered_json;

constexpr int kSchemaVersion = 1;

namespace io {

inline ordered_json matrix_to_json(const Matrix& m) {
    ordered_json rows = ordered_json::array();
    for (std::size_t i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline Matrix matrix_from_json(const ordered_json& j) {
    std::vector<std::vector<double>> rows;
    for (const auto& row : j) rows.push_back(row.get<std::vector<double>>());
    if (rows.empty()) return Matrix();
    return Matrix::from_rows(rows);
}

inline ordered_json report_to_json(const EvalReport& rep, bool include_names = true) {
    ordered_json j;
    j["accuracy"] = rep.accuracy;
    j["macro_recall"] = rep.macro_recall;
    j["macro_precision"] = rep.macro_precision;
    j["macro_f"] = rep.macro_f;
    j["per_class_fn"] = rep.per_class_fn;
    j["per_class_fp"] = rep.per_class_fp;
    j["var_fn"] = rep.var_fn;
    j["var_fp"] = rep.var_fp;
    j["confusion"] = rep.confusion.counts;
    if (include_names && !rep.confusion.class_names.empty())
        j["class_names"] = rep.confusion.class_names;
    return j;
}

inline ordered_json controller_to_json(const ControllerConfig& cfg) {
    return ordered_json{{"confusion_threshold", cfg.confusion_threshold},
                        {"max_clusters", cfg.max_clusters}};
}

inline ordered_json encoder_config_to_json(const EncoderConfig& cfg) {
    ordered_json j;
    j["hidden"] = cfg.hidden;
    j["embed_dim"] = cfg.embed_dim;
    j["normalize_embeddings"] = cfg.normalize_embeddings;
    return j;
}

inline ordered_json run_config_to_json(const RunConfig& cfg) {
    ordered_json j;
    j["mode"] = mode_name(cfg.mode);
    if (cfg.mode == Mode::fixed_k) j["fixed_k"] = cfg.fixed_k;
    j["seed"] = cfg.seed;
    j["folds"] = cfg.folds;
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["alpha"] = cfg.alpha;
    j["epochs_max"] = cfg.epochs_max;
    j["patience"] = cfg.patience;
    j["negatives_any_pseudo"] = cfg.negatives_any_pseudo;
    j["frozen_features"] = cfg.frozen_features;
    j["controller"] = controller_to_json(cfg.controller);
    j["encoder"] = encoder_config_to_json(cfg.encoder);
    return j;
}

inline ordered_json map_to_json(const SubClassMap& map) {
    ordered_json j;
    j["parent_to_pseudo"] = map.parent_to_pseudo;
    j["pseudo_to_parent"] = map.pseudo_to_parent;
    return j;
}

inline SubClassMap map_from_json(const ordered_json& j) {
    SubClassMap map;
    map.parent_to_pseudo = j.at("parent_to_pseudo").get<std::vector<std::vector<int>>>();
    map.pseudo_to_parent = j.at("pseudo_to_parent").get<std::vector<int>>();
    map.check();
    return map;
}

inline ordered_json trace_to_json(const std::vector<ClusterBudget>& history) {
    const BudgetTrace trace = budget_trace(history);
    ordered_json j;
    j["sequences"] = trace.sequences;
    j["reversals"] = trace.reversals;
    j["final_values"] = trace.final_values;
    return j;
}

}  // namespace io

inline ordered_json run_result_to_json(const RunResult& result) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["config"] = io::run_config_to_json(result.config);
    j["class_names"] = result.class_names;

    ordered_json folds = ordered_json::array();
    for (const auto& fold : result.folds) {
        ordered_json fj;
        fj["fold"] = fold.fold;
        fj["train_size"] = fold.train_indices.size();
        fj["val_size"] = fold.val_indices.size();
        fj["best_epoch"] = fold.best_epoch;
        fj["best"] = io::report_to_json(fold.best_report, false);
        fj["budget_trace"] = io::trace_to_json(fold.budget_history);
        ordered_json epochs = ordered_json::array();
        for (const auto& rec : fold.epochs) {
            ordered_json ej;
            ej["epoch"] = rec.epoch;
            ej["budgets"] = rec.budgets;
            ej["cluster_counts"] = rec.cluster_counts;
            ej["losses"] = ordered_json{{"cross_entropy", rec.losses.cross_entropy},
                                        {"triplet", rec.losses.triplet},
                                        {"total", rec.losses.total}};
            ej["validation"] = io::report_to_json(rec.validation, false);
            epochs.push_back(std::move(ej));
        }
        fj["epochs"] = std::move(epochs);
        folds.push_back(std::move(fj));
    }
    j["folds"] = std::move(folds);

    j["aggregate"] = ordered_json{{"accuracy", result.mean_accuracy},
                                  {"macro_recall", result.mean_macro_recall},
                                  {"macro_precision", result.mean_macro_precision},
                                  {"macro_f", result.mean_macro_f},
                                  {"var_fn", result.mean_var_fn},
                                  {"var_fp", result.mean_var_fp}};
    return j;
}

inline void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open " + path + " for writing", 0);
    out << j.dump(2) << "\n";
    if (!out) throw ParseError("write failed for " + path, 0);
}

inline ordered_json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path, 0);
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON in ") + path + ": " + e.what(), 0);
    }
}

struct Checkpoint {
    EncoderConfig encoder;
    EncoderModel model;
    SubClassMap map;
    std::vector<std::string> class_names;
};

// Inference checkpoint: architecture, parameters, and the pseudo-to-parent
// map. Optimizer state is not persisted.
inline ordered_json checkpoint_to_json(const EncoderModel& model, const SubClassMap& map,
                                       const std::vector<std::string>& class_names) {
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["input_dim"] = model.config.input_dim;
    j["encoder"] = io::encoder_config_to_json(model.config);
    j["head_classes"] = model.head_classes;
    ordered_json weights = ordered_json::array();
    for (const auto& w : model.weights) weights.push_back(io::matrix_to_json(w));
    j["weights"] = std::move(weights);
    j["biases"] = model.biases;
    j["head_w"] = io::matrix_to_json(model.head_w);
    j["head_b"] = model.head_b;
    j["map"] = io::map_to_json(map);
    j["class_names"] = class_names;
    return j;
}

inline Checkpoint checkpoint_from_json(const ordered_json& j) {
    if (j.at("schema_version").get<int>() != kSchemaVersion)
        throw ParseError("unsupported checkpoint schema_version", 0);
    Checkpoint ck;
    ck.encoder.input_dim = j.at("input_dim").get<std::size_t>();
    ck.encoder.hidden = j.at("encoder").at("hidden").get<std::vector<std::size_t>>();
    ck.encoder.embed_dim = j.at("encoder").at("embed_dim").get<std::size_t>();
    ck.encoder.normalize_embeddings = j.at("encoder").at("normalize_embeddings").get<bool>();
    ck.model.config = ck.encoder;
    ck.model.head_classes = j.at("head_classes").get<std::size_t>();
    for (const auto& w : j.at("weights")) ck.model.weights.push_back(io::matrix_from_json(w));
    ck.model.biases = j.at("biases").get<std::vector<std::vector<double>>>();
    ck.model.head_w = io::matrix_from_json(j.at("head_w"));
    ck.model.head_b = j.at("head_b").get<std::vector<double>>();
    ck.map = io::map_from_json(j.at("map"));
    ck.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (ck.model.head_classes != static_cast<std::size_t>(ck.map.total_pseudo()))
        throw ParseError("checkpoint head size does not match map", 0);
    return ck;
}

inline void save_checkpoint(const std::string& path, const EncoderModel& model,
                            const SubClassMap& map,
                            const std::vector<std::string>& class_names) {
    write_json_file(path, checkpoint_to_json(model, map, class_names));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(read_json_file(path));
}

struct CompareRow {
    Mode mode = Mode::standard;
    double accuracy = 0.0;
    double macro_recall = 0.0;
    double macro_precision = 0.0;
    double macro_f = 0.0;
    double var_fn = 0.0;
    double var_fp = 0.0;
};

inline CompareRow compare_row(const RunResult& result) {
    CompareRow row;
    row.mode = result.config.mode;
    row.accuracy = result.mean_accuracy;
    row.macro_recall = result.mean_macro_recall;
    row.macro_precision = result.mean_macro_precision;
    row.macro_f = result.mean_macro_f;
    row.var_fn = result.mean_var_fn;
    row.var_fp = result.mean_var_fp;
    return row;
}

// Rows sorted by macro-F descending; ties break on mode name so output is
// reproducible byte for byte.
inline std::vector<CompareRow> sort_compare_rows(std::vector<CompareRow> rows) {
    std::sort(rows.begin(), rows.end(), [](const CompareRow& a, const CompareRow& b) {
        if (a.macro_f != b.macro_f) return a.macro_f > b.macro_f;
        return std::string(mode_name(a.mode)) < std::string(mode_name(b.mode));
    });
    return rows;
}

// CSV with a schema_version preamble. The ours_ge column reports, per row,
// whether the clustering_triplet run scored at least this row's macro-F;
// it is empty when clustering_triplet was not among the compared modes.
inline std::string compare_csv(const std::vector<CompareRow>& sorted_rows) {
    bool have_ours = false;
    double ours_f = 0.0;
    for (const auto& r : sorted_rows)
        if (r.mode == Mode::clustering_triplet) {
            have_ours = true;
            ours_f = r.macro_f;
        }
    std::string out = "schema_version," + std::to_string(kSchemaVersion) + "\n";
    out += "mode,accuracy,macro_recall,macro_precision,macro_f,var_fn,var_fp,ours_ge\n";
    for (const auto& r : sorted_rows) {
        out += mode_name(r.mode);
        for (double v : {r.accuracy, r.macro_recall, r.macro_precision, r.macro_f, r.var_fn,
                         r.var_fp})
            out += "," + detail::format_double(v);
        out += ",";
        if (have_ours) out += ours_f >= r.macro_f ? "1" : "0";
        out += "\n";
    }
    return out;
}

// Fixed-width text table carrying the exact serialized numbers.
inline std::string compare_table(const std::vector<CompareRow>& sorted_rows) {
    const std::vector<std::string> headers = {"mode",    "accuracy", "macro_recall",
                                              "macro_precision", "macro_f",  "var_fn",
                                              "var_fp"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& r : sorted_rows)
        cells.push_back({mode_name(r.mode), detail::format_double(r.accuracy),
                         detail::format_double(r.macro_recall),
                         detail::format_double(r.macro_precision),
                         detail::format_double(r.macro_f), detail::format_double(r.var_fn),
                         detail::format_double(r.var_fp)});
    std::vector<std::size_t> width(headers.size());
    for (std::size_t c = 0; c < headers.size(); ++c) {
        width[c] = headers[c].size();
        for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
    }
    auto emit_row = [&](const std::vector<std::string>& row) {
        std::string line;
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c > 0) line += "  ";
            line += row[c];
            line.append(width[c] - row[c].size(), ' ');
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        return line + "\n";
    };
    std::string out = emit_row(headers);
    std::string rule;
    for (std::size_t c = 0; c < headers.size(); ++c) {
        if (c > 0) rule += "  ";
        rule.append(width[c], '-');
    }
    out += rule + "\n";
    for (const auto& row : cells) out += emit_row(row);
    return out;
}

// ---- Config files ----------------------------------------------------------

struct FileConfig {
    RunConfig run;
    std::vector<Mode> modes;   // compare subcommand
    std::string dataset_path;  // resolved; empty when generating inline
    bool has_generator = false;
    GeneratorSpec generator;
};

namespace io {

inline void require_known_keys(const ordered_json& j, const std::vector<std::string>& known,
                               const std::string& where) {
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end())
            throw ParameterError("config: unknown field '" + item.key() + "' in " + where);
    }
}

inline GeneratorSpec generator_from_json(const ordered_json& j) {
    require_known_keys(j,
                       {"seed", "dim", "sigma", "separation", "class_separation",
                        "mode_subspace_dim", "classes"},
                       "generator");
    GeneratorSpec spec;
    if (j.contains("seed")) spec.seed = j.at("seed").get<std::uint64_t>();
    spec.dim = j.at("dim").get<std::size_t>();
    if (j.contains("sigma")) spec.sigma = j.at("sigma").get<double>();
    if (j.contains("separation")) spec.separation = j.at("separation").get<double>();
    if (j.contains("class_separation"))
        spec.class_separation = j.at("class_separation").get<double>();
    if (j.contains("mode_subspace_dim"))
        spec.mode_subspace_dim = j.at("mode_subspace_dim").get<std::size_t>();
    for (const auto& cj : j.at("classes")) {
        require_known_keys(cj, {"name", "num_modes", "samples_per_mode", "center_scale"},
                           "generator.classes");
        ClassSpec cls;
        if (cj.contains("name")) cls.name = cj.at("name").get<std::string>();
        if (cj.contains("num_modes")) cls.num_modes = cj.at("num_modes").get<std::size_t>();
        if (cj.contains("samples_per_mode"))
            cls.samples_per_mode = cj.at("samples_per_mode").get<std::size_t>();
        if (cj.contains("center_scale")) cls.center_scale = cj.at("center_scale").get<double>();
        spec.classes.push_back(std::move(cls));
    }
    spec.check();
    return spec;
}

inline ordered_json generator_to_json(const GeneratorSpec& spec) {
    ordered_json j;
    j["seed"] = spec.seed;
    j["dim"] = spec.dim;
    j["sigma"] = spec.sigma;
    j["separation"] = spec.separation;
    j["class_separation"] = spec.class_separation;
    j["mode_subspace_dim"] = spec.mode_subspace_dim;
    ordered_json classes = ordered_json::array();
    for (const auto& cls : spec.classes) {
        ordered_json cj;
        cj["name"] = cls.name;
        cj["num_modes"] = cls.num_modes;
        cj["samples_per_mode"] = cls.samples_per_mode;
        cj["center_scale"] = cls.center_scale;
        classes.push_back(std::move(cj));
    }
    j["classes"] = std::move(classes);
    return j;
}

}  // namespace io

// Parses a train/compare/generate config document. Relative dataset paths
// resolve against the config file's directory.
inline FileConfig parse_config_file(const std::string& path) {
    const ordered_json j = read_json_file(path);
    io::require_known_keys(
        j,
        {"schema_version", "mode", "modes", "seed", "folds", "learning_rate", "batch_size",
         "alpha", "epochs_max", "patience", "fixed_k", "negatives_any_pseudo",
         "frozen_features", "controller", "encoder", "dataset", "generator"},
        "top level");

    FileConfig fc;
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kSchemaVersion)
        throw ParameterError("config: unsupported schema_version");
    if (j.contains("mode")) fc.run.mode = mode_from_name(j.at("mode").get<std::string>());
    if (j.contains("modes"))
        for (const auto& m : j.at("modes"))
            fc.modes.push_back(mode_from_name(m.get<std::string>()));
    if (j.contains("seed")) fc.run.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("folds")) fc.run.folds = j.at("folds").get<std::size_t>();
    if (j.contains("learning_rate")) fc.run.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("batch_size")) fc.run.batch_size = j.at("batch_size").get<std::size_t>();
    if (j.contains("alpha")) fc.run.alpha = j.at("alpha").get<double>();
    if (j.contains("epochs_max")) fc.run.epochs_max = j.at("epochs_max").get<std::size_t>();
    if (j.contains("patience")) fc.run.patience = j.at("patience").get<std::size_t>();
    if (j.contains("fixed_k")) fc.run.fixed_k = j.at("fixed_k").get<std::size_t>();
    if (j.contains("negatives_any_pseudo"))
        fc.run.negatives_any_pseudo = j.at("negatives_any_pseudo").get<bool>();
    if (j.contains("frozen_features"))
        fc.run.frozen_features = j.at("frozen_features").get<bool>();
    if (j.contains("controller")) {
        const auto& cj = j.at("controller");
        io::require_known_keys(cj, {"confusion_threshold", "max_clusters"}, "controller");
        if (cj.contains("confusion_threshold"))
            fc.run.controller.confusion_threshold = cj.at("confusion_threshold").get<double>();
        if (cj.contains("max_clusters"))
            fc.run.controller.max_clusters = cj.at("max_clusters").get<int>();
    }
    if (j.contains("encoder")) {
        const auto& ej = j.at("encoder");
        io::require_known_keys(ej, {"hidden", "embed_dim", "normalize_embeddings"}, "encoder");
        if (ej.contains("hidden"))
            fc.run.encoder.hidden = ej.at("hidden").get<std::vector<std::size_t>>();
        if (ej.contains("embed_dim"))
            fc.run.encoder.embed_dim = ej.at("embed_dim").get<std::size_t>();
        if (ej.contains("normalize_embeddings"))
            fc.run.encoder.normalize_embeddings = ej.at("normalize_embeddings").get<bool>();
    }
    if (j.contains("dataset")) {
        std::filesystem::path p = j.at("dataset").get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(path).parent_path() / p;
        fc.dataset_path = p.string();
    }
    if (j.contains("generator")) {
        fc.has_generator = true;
        fc.generator = io::generator_from_json(j.at("generator"));
    }
    return fc;
}

}  // namespace subcluster
