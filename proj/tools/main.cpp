// prospect: batch CLI for prospective land-cover modelling over dated
// categorical rasters. Verbs: synth, calibrate, predict, compare, render.
// Every run is a pure function of (config file, input files, seed); a
// manifest.json with input/output hashes is written next to the outputs.

#include <CLI11.hpp>

#include <array>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "prospect/config.hpp"
#include "prospect/manifest.hpp"
#include "prospect/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prospect;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed_override;
};

ProjectConfig load_with_override(const CommonArgs& args) {
    ProjectConfig cfg = load_config(args.config_path);
    if (args.seed_override) cfg.seed = *args.seed_override;
    return cfg;
}

void finish_manifest(RunManifest& manifest, const std::vector<fs::path>& outputs, const fs::path& out_dir) {
    for (const auto& p : outputs) manifest.add_output(p);
    manifest.write(out_dir / "manifest.json");
}

int cmd_synth(const CommonArgs& args) {
    const ProjectConfig cfg = load_with_override(args);
    RunManifest manifest("synth", cfg.seed);
    manifest.set_config(args.config_path);
    const ScenarioSpec& sc = cfg.scenario;
    manifest.set_param("rows", std::to_string(sc.rows));
    manifest.set_param("cols", std::to_string(sc.cols));
    manifest.set_param("cell_size", detail::format_double(sc.cell_size));
    manifest.set_param("nodata_margin", std::to_string(sc.nodata_margin));
    manifest.set_param("dates", detail::join_values(sc.dates));
    manifest.set_param("suitability_influence", detail::format_double(sc.suitability_influence));
    manifest.set_param("contagion_radius", std::to_string(sc.contagion_radius));
    manifest.set_param("contagion_strength", detail::format_double(sc.contagion_strength));
    manifest.set_param("initial_smooth", std::to_string(sc.initial_smooth));
    const ScenarioBundle bundle = synth_scenario(sc, cfg.seed);
    const auto written = write_bundle(bundle, args.out_dir);
    finish_manifest(manifest, written, args.out_dir);
    std::cout << "synth: wrote " << written.size() << " layers to " << args.out_dir << "\n";
    return exit_code::ok;
}

int cmd_calibrate(const CommonArgs& args, const std::string& data_dir) {
    const ProjectConfig cfg = load_with_override(args);
    RunManifest manifest("calibrate", cfg.seed);
    manifest.set_config(args.config_path);
    const ScenarioBundle bundle = read_bundle(cfg, data_dir);
    for (int date : cfg.scenario.dates) manifest.add_input(fs::path(data_dir) / snapshot_filename(date));
    for (const auto& f : cfg.scenario.factors) manifest.add_input(fs::path(data_dir) / factor_filename(f.name));

    const GisArtifacts art = gis_knowledge_base(cfg, bundle);
    fs::create_directories(args.out_dir);
    std::vector<fs::path> written;
    for (const auto& table : art.calibrations) {
        const fs::path p = fs::path(args.out_dir) / ("calibration_" + table.factor_name + ".csv");
        write_calibration_csv(table, bundle.legend, p);
        written.push_back(p);
    }
    {
        const fs::path p = fs::path(args.out_dir) / "transition.csv";
        write_transition_csv(art.estimated, bundle.legend, p);
        written.push_back(p);
        const fs::path pr = fs::path(args.out_dir) / "transition_rescaled.csv";
        write_transition_csv(art.rescaled, bundle.legend, pr);
        written.push_back(pr);
    }
    {
        const fs::path p = fs::path(args.out_dir) / "factor_weights.csv";
        std::ofstream out(p);
        if (!out) throw IoError("cannot write " + p.string());
        out << "factor,weight\n";
        for (std::size_t i = 0; i < bundle.factors.size(); ++i)
            out << bundle.factors[i].name << ',' << detail::format_double(art.weights.weights[i]) << '\n';
        out << "# lambda_max=" << detail::format_double(art.weights.lambda_max)
            << " consistency_ratio=" << detail::format_double(art.weights.consistency_ratio) << '\n';
        written.push_back(p);
    }
    for (std::size_t i = 0; i < art.suitability.layers.size(); ++i) {
        const int code = art.suitability.codes[i];
        const fs::path p = fs::path(args.out_dir) / ("suitability_" + bundle.legend.category(code).name + ".grid");
        save_grid(art.suitability.layers[i], p);
        written.push_back(p);
    }
    if (art.weights.consistency_warning) {
        manifest.add_warning("saaty consistency ratio above 0.10");
        std::cerr << "warning: saaty consistency ratio " << art.weights.consistency_ratio << " above 0.10\n";
    }
    finish_manifest(manifest, written, args.out_dir);
    std::cout << "calibrate: wrote " << written.size() << " files to " << args.out_dir << "\n";
    return exit_code::ok;
}

int cmd_predict(const CommonArgs& args, const std::string& data_dir, const std::string& model) {
    const ProjectConfig cfg = load_with_override(args);
    RunManifest manifest("predict " + model, cfg.seed);
    manifest.set_config(args.config_path);
    const ScenarioBundle bundle = read_bundle(cfg, data_dir);
    for (int date : cfg.scenario.dates) manifest.add_input(fs::path(data_dir) / snapshot_filename(date));
    for (const auto& f : cfg.scenario.factors) manifest.add_input(fs::path(data_dir) / factor_filename(f.name));

    fs::create_directories(args.out_dir);
    PredictionReport report;
    std::vector<fs::path> written;
    if (model == "gis") {
        GisArtifacts art;
        report = predict_gis(cfg, bundle, &art);
        const fs::path p = fs::path(args.out_dir) / "transition.csv";
        write_transition_csv(art.rescaled, bundle.legend, p);
        written.push_back(p);
    } else if (model == "mlp") {
        MlpArtifacts art;
        report = predict_mlp(cfg, bundle, &art);
        const fs::path wpath = fs::path(args.out_dir) / "weights.txt";
        save_mlp_weights(art.training.weights, wpath);
        written.push_back(wpath);
        const fs::path cpath = fs::path(args.out_dir) / "training_curve.csv";
        write_training_curve_csv(art.training.curve, cpath);
        written.push_back(cpath);
    } else if (model == "glm") {
        GlmArtifacts art;
        report = predict_glm(cfg, bundle, &art);
        const fs::path gpath = fs::path(args.out_dir) / "grid_search.csv";
        write_grid_search_csv(art.grid, gpath);
        written.push_back(gpath);
        const fs::path ppath = fs::path(args.out_dir) / "params.csv";
        write_logit_params_csv(art.params, art.feature_names, bundle.legend, ppath);
        written.push_back(ppath);
    } else {
        throw ConfigError("unknown model '" + model + "' (expected gis|mlp|glm)");
    }

    const auto report_files = write_report(report, bundle.legend, args.out_dir);
    written.insert(written.end(), report_files.begin(), report_files.end());
    for (const auto& [key, value] : report.params) manifest.set_param(model + "." + key, value);
    for (const auto& w : report.warnings) manifest.add_warning(w);
    finish_manifest(manifest, written, args.out_dir);
    std::cout << "predict " << model << ": wrote " << written.size() << " files to " << args.out_dir << "\n";
    return exit_code::ok;
}

int cmd_compare(const CommonArgs& args, const std::string& real_path,
                const std::vector<std::string>& pred_specs, int scale) {
    const ProjectConfig cfg = load_with_override(args);
    RunManifest manifest("compare", cfg.seed);
    manifest.set_config(args.config_path);
    if (pred_specs.size() != 3) throw ConfigError("compare: exactly three --pred label=path arguments required");

    const Legend& legend = cfg.scenario.legend;
    const CategoricalRaster real = load_categorical(real_path, &legend);
    manifest.add_input(real_path);

    std::array<std::string, 3> labels;
    std::vector<CategoricalRaster> preds;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& spec = pred_specs[i];
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw ConfigError("compare: --pred expects label=path, got '" + spec + "'");
        labels[i] = spec.substr(0, eq);
        const std::string path = spec.substr(eq + 1);
        preds.push_back(load_categorical(path, &legend));
        manifest.add_input(path);
    }

    const std::array<const CategoricalRaster*, 3> pred_ptrs = {&preds[0], &preds[1], &preds[2]};
    const CompareProducts products = compare_models(real, pred_ptrs, labels, legend);
    const auto written = write_compare(products, real, pred_ptrs, legend, args.out_dir, scale);
    finish_manifest(manifest, written, args.out_dir);
    std::cout << "compare: wrote " << written.size() << " files to " << args.out_dir << "\n";
    return exit_code::ok;
}

int cmd_render(const CommonArgs& args, const std::string& grid_path, const std::string& out_file, int scale) {
    const ProjectConfig cfg = load_with_override(args);
    const Legend& legend = cfg.scenario.legend;
    const CategoricalRaster map = load_categorical(grid_path, &legend);
    bool used_default = false;
    const auto colors = legend_colors(legend, &used_default);
    if (used_default) std::cerr << "warning: legend has categories without colors; default palette used\n";
    render_map(map, colors, out_file, scale);
    std::cout << "render: wrote " << out_file << "\n";
    return exit_code::ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"prospective land-cover modelling toolkit"};
    app.set_version_flag("--version", version_string());
    app.require_subcommand(1);

    int threads = 1; // reserved knob: caps worker threads of future parallel paths
    app.add_option("--threads", threads, "maximum worker threads")->check(CLI::PositiveNumber);

    CommonArgs args;
    std::string data_dir, model, real_path, grid_path, out_file;
    std::vector<std::string> pred_specs;
    int scale = 4;
    std::uint64_t seed_value = 0;
    bool seed_given = false;

    auto add_common = [&](CLI::App* sub, bool with_out_dir = true) {
        sub->add_option("--config", args.config_path, "run configuration (json)")->required();
        if (with_out_dir) sub->add_option("--out", args.out_dir, "output directory")->required();
        sub->add_option("--seed", seed_value, "override the config seed")->each([&](const std::string&) {
            seed_given = true;
        });
    };

    CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scenario bundle");
    add_common(synth);

    CLI::App* calibrate = app.add_subcommand("calibrate", "build the multi-criteria knowledge base");
    add_common(calibrate);
    calibrate->add_option("--data", data_dir, "scenario bundle directory")->required();

    CLI::App* predict = app.add_subcommand("predict", "learn on the first two dates, predict the third");
    add_common(predict);
    predict->add_option("--model", model, "gis|mlp|glm")->required();
    predict->add_option("--data", data_dir, "scenario bundle directory")->required();

    CLI::App* compare = app.add_subcommand("compare", "cross-compare three predictions against reality");
    add_common(compare);
    compare->add_option("--real", real_path, "observed map at the target date")->required();
    compare->add_option("--pred", pred_specs, "label=path, three times")->required()->expected(3);
    compare->add_option("--scale", scale, "render upscale factor");

    CLI::App* render = app.add_subcommand("render", "render a grid to a ppm image");
    render->add_option("--config", args.config_path, "run configuration (json)")->required();
    render->add_option("--grid", grid_path, "grid file to render")->required();
    render->add_option("--out", out_file, "output image path")->required();
    render->add_option("--scale", scale, "render upscale factor");
    render->add_option("--seed", seed_value, "ignored; accepted for uniformity");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // prints help or the usage error
        return code == 0 ? exit_code::ok : exit_code::config;
    }
    if (seed_given) args.seed_override = seed_value;

    try {
        if (synth->parsed()) return cmd_synth(args);
        if (calibrate->parsed()) return cmd_calibrate(args, data_dir);
        if (predict->parsed()) return cmd_predict(args, data_dir, model);
        if (compare->parsed()) return cmd_compare(args, real_path, pred_specs, scale);
        if (render->parsed()) return cmd_render(args, grid_path, out_file, scale);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_code::config;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return exit_code::data;
    } catch (const ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return exit_code::convergence;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return exit_code::io;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::unexpected;
    }
    return exit_code::unexpected;
}
