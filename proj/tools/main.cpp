#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "subcluster/subcluster.hpp"

namespace fs = std::filesystem;
using namespace subcluster;

namespace {

Dataset resolve_dataset(const FileConfig& fc) {
    if (!fc.dataset_path.empty()) {
        if (!fs::exists(fc.dataset_path))
            throw ParseError("dataset file not found: " + fc.dataset_path, 0);
        return load_features(fc.dataset_path);
    }
    if (fc.has_generator) return generate(fc.generator);
    throw ParameterError("config: provide either 'dataset' or 'generator'");
}

int cmd_generate(const std::string& spec_path, const std::string& out_dir) {
    const ordered_json doc = read_json_file(spec_path);
    const GeneratorSpec spec = io::generator_from_json(
        doc.contains("generator") ? doc.at("generator") : doc);
    const Dataset ds = generate(spec);

    fs::create_directories(out_dir);
    const fs::path csv_path = fs::path(out_dir) / "dataset.csv";
    save_features(ds, csv_path.string());

    ordered_json meta;
    meta["schema_version"] = kSchemaVersion;
    meta["generator"] = io::generator_to_json(spec);
    meta["num_samples"] = ds.size();
    meta["dim"] = ds.dim();
    meta["class_names"] = ds.class_names;
    meta["mode_ids"] = ds.mode_ids;
    const fs::path meta_path = fs::path(out_dir) / "generator_meta.json";
    write_json_file(meta_path.string(), meta);

    std::cout << "wrote " << csv_path.string() << " (" << ds.size() << " samples, "
              << ds.num_classes() << " classes)\n";
    std::cout << "wrote " << meta_path.string() << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed_override) {
    FileConfig fc = parse_config_file(config_path);
    if (seed_override) fc.run.seed = *seed_override;
    const Dataset ds = resolve_dataset(fc);

    const RunResult result = run(fc.run, ds);

    fs::create_directories(out_dir);
    const fs::path report_path = fs::path(out_dir) / "report.json";
    write_json_file(report_path.string(), run_result_to_json(result));
    for (const auto& fold : result.folds) {
        const fs::path ck_path =
            fs::path(out_dir) / ("checkpoint_fold" + std::to_string(fold.fold) + ".json");
        save_checkpoint(ck_path.string(), fold.best_model, fold.best_map, result.class_names);
    }

    std::cout << compare_table({compare_row(result)});
    std::cout << "report: " << report_path.string() << "\n";
    return 0;
}

int cmd_evaluate(const std::string& checkpoint_path, const std::string& data_path) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    Dataset ds = load_features(data_path);
    if (ds.num_classes() > static_cast<std::size_t>(ck.map.num_parents()))
        throw LabelError("data contains labels beyond the checkpoint's " +
                         std::to_string(ck.map.num_parents()) + " classes");
    ds.class_names = ck.class_names;
    ds.check();

    const EvalReport rep = validate(ck.model, ds, ck.map);
    ordered_json out = io::report_to_json(rep);
    out["schema_version"] = kSchemaVersion;
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_compare(const std::string& config_path, const std::string& out_dir) {
    FileConfig fc = parse_config_file(config_path);
    if (fc.modes.size() < 2)
        throw ParameterError("compare: config must list at least 2 modes");
    const Dataset ds = resolve_dataset(fc);

    fs::create_directories(out_dir);
    std::vector<CompareRow> rows;
    for (Mode mode : fc.modes) {
        RunConfig cfg = fc.run;
        cfg.mode = mode;
        const RunResult result = run(cfg, ds);
        rows.push_back(compare_row(result));
        const fs::path report_path =
            fs::path(out_dir) / ("report_" + std::string(mode_name(mode)) + ".json");
        write_json_file(report_path.string(), run_result_to_json(result));
    }

    const std::vector<CompareRow> sorted = sort_compare_rows(rows);
    const fs::path csv_path = fs::path(out_dir) / "compare.csv";
    {
        std::ofstream out(csv_path.string());
        if (!out) throw ParseError("cannot open " + csv_path.string() + " for writing", 0);
        out << compare_csv(sorted);
    }
    std::cout << compare_table(sorted);
    for (const auto& r : sorted) {
        if (r.mode == Mode::clustering_triplet) continue;
        for (const auto& ours : sorted)
            if (ours.mode == Mode::clustering_triplet)
                std::cout << "clustering_triplet >= " << mode_name(r.mode) << ": "
                          << (ours.macro_f >= r.macro_f ? "yes" : "no") << "\n";
    }
    std::cout << "csv: " << csv_path.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sub-class pseudo-label training framework"};
    app.require_subcommand(1);

    std::string spec_path, config_path, out_dir, checkpoint_path, data_path;
    std::optional<std::uint64_t> seed_override;

    CLI::App* gen = app.add_subcommand("generate", "Generate a synthetic multi-modal dataset");
    gen->add_option("--spec", spec_path, "Generator spec JSON")->required();
    gen->add_option("--out", out_dir, "Output directory")->required();

    CLI::App* train = app.add_subcommand("train", "Train one mode with K-fold validation");
    train->add_option("--config", config_path, "Run config JSON")->required();
    train->add_option("--out", out_dir, "Output directory")->required();
    train->add_option("--seed", seed_override, "Override the config seed");

    CLI::App* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a CSV dataset");
    eval->add_option("--checkpoint", checkpoint_path, "Checkpoint JSON")->required();
    eval->add_option("--data", data_path, "Feature CSV")->required();

    CLI::App* cmp = app.add_subcommand("compare", "Run several modes on identical folds");
    cmp->add_option("--config", config_path, "Run config JSON listing 'modes'")->required();
    cmp->add_option("--out", out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(spec_path, out_dir);
        if (train->parsed()) return cmd_train(config_path, out_dir, seed_override);
        if (eval->parsed()) return cmd_evaluate(checkpoint_path, data_path);
        if (cmp->parsed()) return cmd_compare(config_path, out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
