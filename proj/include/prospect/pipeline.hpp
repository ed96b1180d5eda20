// End-to-end model pipelines shared by the CLI and the integration tests:
// scenario bundle I/O, the three prediction workflows (each learns on the
// first two dates and projects the third), and the comparison products.
#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "prospect/allocation.hpp"
#include "prospect/config.hpp"
#include "prospect/eval.hpp"
#include "prospect/features.hpp"
#include "prospect/glm.hpp"
#include "prospect/grid.hpp"
#include "prospect/markov.hpp"
#include "prospect/mce.hpp"
#include "prospect/mlp.hpp"
#include "prospect/render.hpp"
#include "prospect/report.hpp"
#include "prospect/synth.hpp"

namespace prospect {

inline std::string snapshot_filename(int date) { return "lc_" + std::to_string(date) + ".grid"; }
inline std::string factor_filename(const std::string& name) { return "factor_" + name + ".grid"; }

namespace detail {

template <typename T>
std::string join_values(const std::vector<T>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        if constexpr (std::is_same_v<T, double>)
            out += format_double(v[i]);
        else
            out += std::to_string(v[i]);
    }
    return out;
}

inline std::string decay_name(DecayFamily f) {
    switch (f) {
    case DecayFamily::inverse: return "inverse";
    case DecayFamily::inverse_square: return "inverse_square";
    case DecayFamily::gaussian: return "gaussian";
    }
    return "?";
}

} // namespace detail

inline std::vector<std::filesystem::path> write_bundle(const ScenarioBundle& bundle,
                                                       const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    for (const auto& snap : bundle.snapshots) {
        const auto p = dir / snapshot_filename(snap.date);
        save_grid(snap, p);
        written.push_back(p);
    }
    for (const auto& f : bundle.factors) {
        const auto p = dir / factor_filename(f.name);
        save_grid(f, p);
        written.push_back(p);
    }
    return written;
}

inline ScenarioBundle read_bundle(const ProjectConfig& cfg, const std::filesystem::path& dir) {
    ScenarioBundle bundle;
    bundle.legend = cfg.scenario.legend;
    bundle.seed = cfg.seed;
    for (int date : cfg.scenario.dates) {
        auto snap = load_categorical(dir / snapshot_filename(date), &bundle.legend);
        if (snap.date != date) throw DataError("bundle: snapshot date mismatch in " + snapshot_filename(date));
        bundle.snapshots.push_back(std::move(snap));
    }
    for (const auto& def : cfg.scenario.factors) {
        auto f = load_continuous(dir / factor_filename(def.name));
        f.name = def.name;
        bundle.factors.push_back(std::move(f));
    }
    std::vector<GridShape> shapes;
    for (const auto& s : bundle.snapshots) shapes.push_back(shape_of(s, "lc_" + std::to_string(s.date)));
    for (const auto& f : bundle.factors) shapes.push_back(shape_of(f));
    align_check(shapes);
    return bundle;
}

// Environmental input layers for the statistical models: azimuth factors
// are either kept as one linearized column or split into sin/cos.
inline std::vector<ContinuousRaster> model_env_layers(const ProjectConfig& cfg, const ScenarioBundle& bundle) {
    std::vector<ContinuousRaster> out;
    for (std::size_t i = 0; i < bundle.factors.size(); ++i) {
        const bool is_azimuth = cfg.scenario.factors[i].kind == FactorKind::aspect_of;
        if (is_azimuth && cfg.aspect_encoding == "sin_cos") {
            auto [s, c] = expand_azimuth(bundle.factors[i]);
            out.push_back(std::move(s));
            out.push_back(std::move(c));
        } else {
            out.push_back(bundle.factors[i]);
        }
    }
    return out;
}

// --- GIS pipeline ---

inline std::vector<BoolMask> build_constraint_masks(const GisConfig& gis, int category,
                                                    const std::vector<ContinuousRaster>& factors) {
    std::vector<BoolMask> masks;
    for (const auto& c : gis.constraints) {
        if (c.category != category) continue;
        const ContinuousRaster* factor = nullptr;
        for (const auto& f : factors)
            if (f.name == c.factor) factor = &f;
        if (!factor) throw ConfigError("gis constraint: unknown factor '" + c.factor + "'");
        BoolMask mask(factor->values.size(), 1);
        for (std::size_t i = 0; i < mask.size(); ++i) {
            const double v = factor->values[i];
            if (std::isnan(v)) continue; // nodata handled by the map mask
            if ((c.min && v < *c.min) || (c.max && v > *c.max)) mask[i] = 0;
        }
        masks.push_back(std::move(mask));
    }
    return masks;
}

struct GisArtifacts {
    TransitionMatrix estimated;
    TransitionMatrix rescaled;
    std::vector<CalibrationTable> calibrations; // one per factor
    SaatyResult weights;
    SuitabilityStack suitability;               // one layer per legend code
};

// MCE knowledge base: per-factor calibration against the latest training
// map and per-category suitability composition. Constant categories get an
// all-ones layer; their conditional probability row pins them anyway.
inline GisArtifacts gis_knowledge_base(const ProjectConfig& cfg, const ScenarioBundle& bundle) {
    const Legend& legend = bundle.legend;
    const CategoricalRaster& t0 = bundle.snapshots[0];
    const CategoricalRaster& t1 = bundle.snapshots[1];
    const int target_date = cfg.scenario.dates[2];

    GisArtifacts art;
    art.estimated = estimate_transition(t0, t1, legend.size());
    art.rescaled = rescale_transition(art.estimated, target_date - t1.date);

    for (const auto& f : bundle.factors)
        art.calibrations.push_back(calibrate_factor(t1, f, cfg.gis.bins, legend.size()));

    SaatyMatrix saaty = cfg.gis.saaty ? *cfg.gis.saaty
                                      : SaatyMatrix::from_weights(std::vector<double>(bundle.factors.size(), 1.0));
    art.weights = saaty_weights(saaty);

    std::vector<double> order = cfg.gis.order_weights.empty() ? conservative_order_weights(bundle.factors.size())
                                                              : cfg.gis.order_weights;

    for (const auto& cat : legend.categories) {
        ContinuousRaster layer;
        if (legend.is_constant(cat.code)) {
            layer = ContinuousRaster(t1.rows, t1.cols, t1.cell_size, "suitability_cat" + std::to_string(cat.code));
            for (std::size_t i = 0; i < layer.values.size(); ++i)
                if (t1.valid_index(i)) layer.values[i] = 1.0;
        } else {
            SuitabilityInputs in;
            in.factors = &bundle.factors;
            in.calibrations = art.calibrations;
            in.saaty = saaty;
            in.order_weights = order;
            auto ov = cfg.gis.fuzzy_overrides.find(cat.code);
            if (ov != cfg.gis.fuzzy_overrides.end()) in.fuzzy_overrides = ov->second;
            const auto masks = build_constraint_masks(cfg.gis, cat.code, bundle.factors);
            std::vector<const BoolMask*> mask_ptrs;
            for (const auto& m : masks) mask_ptrs.push_back(&m);
            in.constraints = mask_ptrs;
            layer = build_suitability(cat.code, in);
        }
        art.suitability.codes.push_back(cat.code);
        art.suitability.layers.push_back(std::move(layer));
    }
    return art;
}

inline PredictionReport predict_gis(const ProjectConfig& cfg, const ScenarioBundle& bundle,
                                    GisArtifacts* artifacts_out = nullptr) {
    const CategoricalRaster& t1 = bundle.snapshots[1];
    const int target_date = cfg.scenario.dates[2];
    GisArtifacts art = gis_knowledge_base(cfg, bundle);
    const int iterations = cfg.gis.iterations > 0 ? cfg.gis.iterations : target_date - t1.date;
    PredictionReport report = ca_markov(t1, art.rescaled, art.suitability, iterations, cfg.gis.contiguity_window);
    report.predicted.date = target_date;
    report.seed = cfg.seed;
    // Every resolved numeric choice lands in the manifest.
    report.params["bins"] = std::to_string(cfg.gis.bins);
    report.params["iterations"] = std::to_string(iterations);
    report.params["target_dt"] = std::to_string(target_date - t1.date);
    report.params["contiguity_window"] = std::to_string(cfg.gis.contiguity_window);
    report.params["order_weights"] = detail::join_values(
        cfg.gis.order_weights.empty() ? conservative_order_weights(bundle.factors.size()) : cfg.gis.order_weights);
    report.params["factor_weights"] = detail::join_values(art.weights.weights);
    report.params["consistency_ratio"] = detail::format_double(art.weights.consistency_ratio);
    if (artifacts_out) *artifacts_out = std::move(art);
    return report;
}

// --- MLP pipeline ---

struct MlpArtifacts {
    MlpTrainResult training;
    std::vector<std::string> feature_names;
};

inline PredictionReport predict_mlp(const ProjectConfig& cfg, const ScenarioBundle& bundle,
                                    MlpArtifacts* artifacts_out = nullptr) {
    const Legend& legend = bundle.legend;
    NeighborhoodSpec spec{cfg.mlp.radius, cfg.mlp.decay, cfg.mlp.gaussian_sigma};
    const auto env = model_env_layers(cfg, bundle);
    const FeatureBuilder builder(legend, env, spec);

    Dataset train = assemble_dataset(bundle.snapshots[0], bundle.snapshots[1], builder, /*frontier_only=*/true);
    if (cfg.mlp.train_all_pairs && bundle.snapshots.size() >= 3) {
        const Dataset extra = assemble_dataset(bundle.snapshots[1], bundle.snapshots[2], builder, true);
        train.x.insert(train.x.end(), extra.x.begin(), extra.x.end());
        train.target_code.insert(train.target_code.end(), extra.target_code.begin(), extra.target_code.end());
        train.pixel.insert(train.pixel.end(), extra.pixel.begin(), extra.pixel.end());
        train.n += extra.n;
    }

    const auto modelled = builder.modelled_codes();
    std::vector<int> target_idx(train.n);
    for (std::size_t i = 0; i < train.n; ++i) {
        const auto it = std::find(modelled.begin(), modelled.end(), train.target_code[i]);
        target_idx[i] = static_cast<int>(it - modelled.begin());
    }

    TrainConfig tc = cfg.mlp.train;
    tc.seed = cfg.seed + 1; // model-specific stream
    MlpArtifacts art;
    art.training = mlp_train(train.x, target_idx, static_cast<int>(builder.dim()), cfg.mlp.hidden,
                             static_cast<int>(modelled.size()), tc);
    art.feature_names = builder.columns();

    PredictionReport report = mlp_predict_map(art.training.weights, bundle.snapshots[1], builder);
    report.predicted.date = cfg.scenario.dates[2];
    report.seed = cfg.seed;
    report.params["radius"] = std::to_string(cfg.mlp.radius);
    report.params["decay"] = detail::decay_name(cfg.mlp.decay);
    report.params["hidden"] = std::to_string(cfg.mlp.hidden);
    report.params["inputs"] = std::to_string(builder.dim());
    report.params["outputs"] = std::to_string(modelled.size());
    report.params["epochs"] = std::to_string(tc.max_epochs);
    report.params["best_epoch"] = std::to_string(art.training.best_epoch);
    report.params["learning_rate"] = detail::format_double(tc.learning_rate);
    report.params["lr_decay"] = detail::format_double(tc.lr_decay);
    report.params["momentum"] = detail::format_double(tc.momentum);
    report.params["batch_size"] = std::to_string(tc.batch_size);
    report.params["val_fraction"] = detail::format_double(tc.val_fraction);
    report.params["patience"] = std::to_string(tc.patience);
    report.params["init_scale"] = detail::format_double(tc.init_scale);
    report.params["squash_output"] = tc.squash_output ? "true" : "false";
    report.params["train_all_pairs"] = cfg.mlp.train_all_pairs ? "true" : "false";
    report.params["train_rows"] = std::to_string(train.n);
    report.params["train_seed"] = std::to_string(tc.seed);
    if (artifacts_out) *artifacts_out = std::move(art);
    return report;
}

// --- GLM pipeline ---

struct GlmArtifacts {
    GridSearchResult grid;
    LogitParams params;
    std::vector<std::string> feature_names;
};

inline PredictionReport predict_glm(const ProjectConfig& cfg, const ScenarioBundle& bundle,
                                    GlmArtifacts* artifacts_out = nullptr) {
    const Legend& legend = bundle.legend;
    const auto env = model_env_layers(cfg, bundle);

    GlmArtifacts art;
    art.grid = grid_search(bundle.snapshots[0], bundle.snapshots[1], bundle.snapshots[2], env, legend,
                           cfg.glm.radii, cfg.glm.epsilons, cfg.glm.decay, cfg.glm.fit);

    NeighborhoodSpec spec{art.grid.best_radius, cfg.glm.decay, cfg.glm.gaussian_sigma};
    const FeatureBuilder builder(legend, env, spec);
    const Dataset train = assemble_dataset(bundle.snapshots[0], bundle.snapshots[1], builder, true);
    art.params = fit_penalized(train, legend.modelled_codes(), art.grid.best_epsilon, nullptr, cfg.glm.fit);
    art.feature_names = builder.columns();

    PredictionReport report = glm_predict_map(art.params, bundle.snapshots[1], builder);
    report.predicted.date = cfg.scenario.dates[2];
    report.seed = cfg.seed;
    report.params["radius"] = std::to_string(art.grid.best_radius);
    report.params["epsilon"] = detail::format_double(art.grid.best_epsilon);
    report.params["radii_grid"] = detail::join_values(cfg.glm.radii);
    report.params["epsilon_grid"] = detail::join_values(cfg.glm.epsilons);
    report.params["decay"] = detail::decay_name(cfg.glm.decay);
    report.params["max_iterations"] = std::to_string(cfg.glm.fit.max_iterations);
    report.params["best_mispredicted"] = std::to_string(art.grid.best_mispredicted);
    report.params["reference_code"] = std::to_string(art.params.reference_code());
    report.params["train_rows"] = std::to_string(train.n);
    if (artifacts_out) *artifacts_out = std::move(art);
    return report;
}

inline std::vector<std::filesystem::path> write_report(const PredictionReport& report, const Legend& legend,
                                                       const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    const auto grid_path = dir / "predicted.grid";
    save_grid(report.predicted, grid_path);
    written.push_back(grid_path);
    for (std::size_t i = 0; i < report.probabilities.layers.size(); ++i) {
        const int code = report.probabilities.codes[i];
        const auto p = dir / ("prob_" + legend.category(code).name + ".grid");
        save_grid(report.probabilities.layers[i], p);
        written.push_back(p);
    }
    return written;
}

// --- comparison products ---

struct CompareProducts {
    std::vector<double> real_surface;
    std::vector<std::pair<std::string, std::vector<double>>> surfaces; // real + per model
    std::vector<std::pair<std::string, ResidualReport>> residuals;
    std::vector<std::pair<std::string, OrdinalHistogram>> ordinal;
    AgreementResult agreement;
    std::vector<std::pair<std::string, ConfusionMatrix>> confusion;
};

inline CompareProducts compare_models(const CategoricalRaster& real,
                                      const std::array<const CategoricalRaster*, 3>& preds,
                                      const std::array<std::string, 3>& labels, const Legend& legend) {
    CompareProducts out;
    const int k = legend.size();
    out.real_surface = surface_percentages(real, k);
    out.surfaces.emplace_back("real", out.real_surface);
    for (std::size_t i = 0; i < 3; ++i) {
        out.surfaces.emplace_back(labels[i], surface_percentages(*preds[i], k));
        out.residuals.emplace_back(labels[i], residuals_by_category(real, *preds[i], k));
        out.ordinal.emplace_back(labels[i], ordinal_residual_histogram(real, *preds[i], legend));
        out.confusion.emplace_back(labels[i], confusion_matrix(real, *preds[i], k));
    }
    out.agreement = cross_model_agreement(real, *preds[0], *preds[1], *preds[2], legend, labels);
    return out;
}

inline std::vector<std::filesystem::path> write_compare(const CompareProducts& p, const CategoricalRaster& real,
                                                        const std::array<const CategoricalRaster*, 3>& preds,
                                                        const Legend& legend, const std::filesystem::path& dir,
                                                        int render_scale = 4) {
    std::filesystem::create_directories(dir);
    std::vector<std::filesystem::path> written;
    auto add = [&](const std::filesystem::path& path) { written.push_back(path); };

    write_surface_table(p.surfaces, legend, dir / "table1_surface.csv");
    add(dir / "table1_surface.csv");
    write_residual_table(p.residuals, p.real_surface, legend, dir / "table2_residuals.csv");
    add(dir / "table2_residuals.csv");
    write_ordinal_table(p.ordinal, dir / "table3_ordinal.csv");
    add(dir / "table3_ordinal.csv");
    write_agreement_table(p.agreement.decomposition, legend, dir / "table4_agreement.csv");
    add(dir / "table4_agreement.csv");

    const auto colors = legend_colors(legend);
    render_map(real, colors, dir / "map_real.ppm", render_scale);
    add(dir / "map_real.ppm");
    for (std::size_t i = 0; i < 3; ++i) {
        const auto path = dir / ("map_" + p.agreement.decomposition.labels[i] + ".ppm");
        render_map(*preds[i], colors, path, render_scale);
        add(path);
    }
    render_map(p.agreement.class_map, agreement_palette(), dir / "map_agreement.ppm", render_scale);
    add(dir / "map_agreement.ppm");
    save_grid(p.agreement.class_map, dir / "agreement_classes.grid");
    add(dir / "agreement_classes.grid");
    return written;
}

// Expected accuracy of a quota-matched random assignment: sum of squared
// category fractions of the reference map. The baseline every model must
// clear.
inline double proportional_random_baseline(const CategoricalRaster& real, int k) {
    const auto pct = surface_percentages(real, k);
    double acc = 0.0;
    for (double v : pct) acc += (v / 100.0) * (v / 100.0);
    return 100.0 * acc;
}

} // namespace prospect
