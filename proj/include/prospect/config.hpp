// Run configuration: one self-contained JSON file drives scenario
// generation and all three model pipelines. No hidden defaults affect the
// numerics; everything resolved here is echoed into the run manifest.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "prospect/errors.hpp"
#include "prospect/features.hpp"
#include "prospect/glm.hpp"
#include "prospect/grid.hpp"
#include "prospect/mce.hpp"
#include "prospect/mlp.hpp"
#include "prospect/synth.hpp"

namespace prospect {

struct GisConstraint {
    int category = 0;
    std::string factor;
    std::optional<double> min;
    std::optional<double> max;
};

struct GisConfig {
    int bins = 6;
    std::vector<double> order_weights;              // empty: conservative default
    std::optional<SaatyMatrix> saaty;               // absent: equal factor weights
    int contiguity_window = 5;
    int iterations = 0;                             // 0: one per projected year
    std::vector<GisConstraint> constraints;
    std::map<int, std::map<std::string, FuzzySpec>> fuzzy_overrides; // category -> factor -> spec
};

struct MlpConfig {
    int radius = 3;
    DecayFamily decay = DecayFamily::inverse;
    double gaussian_sigma = 1.5;
    int hidden = 8;
    TrainConfig train;
    bool train_all_pairs = false; // also stack (t1 -> t2) training rows
};

struct GlmConfig {
    std::vector<int> radii = {3};
    std::vector<double> epsilons = {0.1};
    DecayFamily decay = DecayFamily::inverse;
    double gaussian_sigma = 1.5;
    FitOptions fit;
};

struct ProjectConfig {
    std::uint64_t seed = 0;
    ScenarioSpec scenario;
    std::string aspect_encoding = "linear"; // or "sin_cos" for the statistical models
    GisConfig gis;
    MlpConfig mlp;
    GlmConfig glm;
};

// Risk-averse order-weight profile (skewed toward the minimum), adjusted to
// the factor count and normalized.
inline std::vector<double> conservative_order_weights(std::size_t n) {
    if (n == 0) throw ConfigError("order weights: no factors");
    const double base[] = {0.5, 0.3, 0.2};
    std::vector<double> w(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n && i < 3; ++i) {
        w[i] = base[i];
        total += base[i];
    }
    for (auto& x : w) x /= total;
    return w;
}

namespace detail {

using nlohmann::json;

inline const json& require(const json& j, const std::string& key, const std::string& ctx) {
    auto it = j.find(key);
    if (it == j.end()) throw ConfigError(ctx + ": missing key '" + key + "'");
    return *it;
}

inline FuzzySpec parse_fuzzy(const json& j, const std::string& ctx) {
    FuzzySpec f;
    const std::string shape = require(j, "shape", ctx).get<std::string>();
    if (shape == "increasing")
        f.shape = FuzzySpec::Shape::increasing;
    else if (shape == "decreasing")
        f.shape = FuzzySpec::Shape::decreasing;
    else if (shape == "symmetric")
        f.shape = FuzzySpec::Shape::symmetric;
    else
        throw ConfigError(ctx + ": unknown fuzzy shape '" + shape + "'");
    const std::string family = j.value("family", "sigmoidal");
    if (family == "sigmoidal")
        f.family = FuzzySpec::Family::sigmoidal;
    else if (family == "linear")
        f.family = FuzzySpec::Family::linear;
    else
        throw ConfigError(ctx + ": unknown fuzzy family '" + family + "'");
    f.a = require(j, "a", ctx).get<double>();
    f.b = require(j, "b", ctx).get<double>();
    f.c = j.value("c", f.b);
    f.d = j.value("d", f.c);
    f.validate();
    return f;
}

inline Legend parse_legend(const json& j) {
    Legend legend;
    for (const auto& cj : require(j, "categories", "legend")) {
        LegendCategory cat;
        cat.code = require(cj, "code", "legend category").get<int>();
        cat.name = require(cj, "name", "legend category").get<std::string>();
        cat.openness_rank = require(cj, "openness_rank", "legend category").get<int>();
        cat.color = cj.value("color", "");
        legend.categories.push_back(cat);
    }
    std::sort(legend.categories.begin(), legend.categories.end(),
              [](const LegendCategory& a, const LegendCategory& b) { return a.code < b.code; });
    if (j.contains("constant_codes"))
        for (const auto& c : j["constant_codes"]) legend.constant_codes.insert(c.get<int>());
    legend.validate();
    return legend;
}

inline FactorKind parse_factor_kind(const std::string& s) {
    if (s == "gradient_noise") return FactorKind::gradient_noise;
    if (s == "slope_of") return FactorKind::slope_of;
    if (s == "aspect_of") return FactorKind::aspect_of;
    if (s == "radial") return FactorKind::radial;
    if (s == "uniform_noise") return FactorKind::uniform_noise;
    throw ConfigError("unknown factor kind '" + s + "'");
}

inline FactorResponse parse_response(const std::string& s) {
    if (s == "high") return FactorResponse::high;
    if (s == "low") return FactorResponse::low;
    if (s == "mid") return FactorResponse::mid;
    throw ConfigError("unknown factor response '" + s + "' (use high|low|mid)");
}

} // namespace detail

inline ProjectConfig parse_config(const nlohmann::json& j) {
    using detail::require;
    ProjectConfig cfg;
    if (!j.contains("seed")) throw ConfigError("config: missing mandatory 'seed' key");
    cfg.seed = j["seed"].get<std::uint64_t>();

    ScenarioSpec& sc = cfg.scenario;
    const auto& grid = require(j, "grid", "config");
    sc.rows = require(grid, "rows", "grid").get<int>();
    sc.cols = require(grid, "cols", "grid").get<int>();
    sc.cell_size = grid.value("cell_size", 18.0);
    sc.nodata_margin = grid.value("nodata_margin", 0);
    sc.legend = detail::parse_legend(require(j, "legend", "config"));
    for (const auto& d : require(j, "dates", "config")) sc.dates.push_back(d.get<int>());

    for (const auto& fj : require(j, "factors", "config")) {
        FactorDef def;
        def.name = require(fj, "name", "factor").get<std::string>();
        def.kind = detail::parse_factor_kind(require(fj, "kind", "factor " + def.name).get<std::string>());
        def.base = fj.value("base", 0.0);
        def.range = fj.value("range", 1.0);
        def.noise = fj.value("noise", 0.2);
        def.smooth = fj.value("smooth", 2);
        def.source = fj.value("source", "");
        sc.factors.push_back(def);
    }

    const auto& dyn = require(j, "dynamics", "config");
    for (const auto& row : require(dyn, "transitions", "dynamics")) {
        std::vector<double> r;
        for (const auto& v : row) r.push_back(v.get<double>());
        sc.transitions.push_back(std::move(r));
    }
    sc.suitability_influence = dyn.value("suitability_influence", 0.0);
    if (dyn.contains("contagion")) {
        sc.contagion_radius = dyn["contagion"].value("radius", 0);
        sc.contagion_strength = dyn["contagion"].value("strength", 0.0);
    }
    if (dyn.contains("initial_shares"))
        for (const auto& v : dyn["initial_shares"]) sc.initial_shares.push_back(v.get<double>());
    sc.initial_smooth = dyn.value("initial_smooth", 3);
    if (dyn.contains("preferences")) {
        for (const auto& [codestr, prefs] : dyn["preferences"].items()) {
            const int code = std::stoi(codestr);
            for (const auto& [factor, resp] : prefs.items())
                sc.preferences[code][factor] = detail::parse_response(resp.get<std::string>());
        }
    }
    sc.validate();

    const nlohmann::json models = j.value("models", nlohmann::json::object());
    cfg.aspect_encoding = models.value("aspect_encoding", "linear");
    if (cfg.aspect_encoding != "linear" && cfg.aspect_encoding != "sin_cos")
        throw ConfigError("models.aspect_encoding must be 'linear' or 'sin_cos'");

    if (models.contains("gis")) {
        const auto& g = models["gis"];
        cfg.gis.bins = g.value("bins", 6);
        if (g.contains("order_weights"))
            for (const auto& v : g["order_weights"]) cfg.gis.order_weights.push_back(v.get<double>());
        if (g.contains("saaty_matrix")) {
            SaatyMatrix m;
            for (const auto& row : g["saaty_matrix"]) {
                m.n += 1;
                for (const auto& v : row) m.m.push_back(v.get<double>());
            }
            m.validate();
            cfg.gis.saaty = m;
        } else if (g.contains("saaty_weights")) {
            std::vector<double> w;
            for (const auto& v : g["saaty_weights"]) w.push_back(v.get<double>());
            cfg.gis.saaty = SaatyMatrix::from_weights(w);
        }
        cfg.gis.contiguity_window = g.value("contiguity_window", 5);
        cfg.gis.iterations = g.value("iterations", 0);
        if (g.contains("constraints")) {
            for (const auto& cj : g["constraints"]) {
                GisConstraint c;
                c.category = require(cj, "category", "gis constraint").get<int>();
                c.factor = require(cj, "factor", "gis constraint").get<std::string>();
                if (cj.contains("min")) c.min = cj["min"].get<double>();
                if (cj.contains("max")) c.max = cj["max"].get<double>();
                cfg.gis.constraints.push_back(c);
            }
        }
        if (g.contains("fuzzy_overrides")) {
            for (const auto& [codestr, byfactor] : g["fuzzy_overrides"].items()) {
                const int code = std::stoi(codestr);
                for (const auto& [factor, spec] : byfactor.items())
                    cfg.gis.fuzzy_overrides[code][factor] =
                        detail::parse_fuzzy(spec, "gis fuzzy override " + codestr + "/" + factor);
            }
        }
    }

    if (models.contains("mlp")) {
        const auto& m = models["mlp"];
        cfg.mlp.radius = m.value("radius", 3);
        cfg.mlp.decay = decay_from_string(m.value("decay", "inverse"));
        cfg.mlp.gaussian_sigma = m.value("gaussian_sigma", 1.5);
        cfg.mlp.hidden = m.value("hidden", 8);
        cfg.mlp.train.learning_rate = m.value("learning_rate", 0.2);
        cfg.mlp.train.lr_decay = m.value("lr_decay", 1.0);
        cfg.mlp.train.momentum = m.value("momentum", 0.9);
        cfg.mlp.train.max_epochs = m.value("epochs", 1000);
        cfg.mlp.train.batch_size = m.value("batch_size", 0);
        cfg.mlp.train.val_fraction = m.value("val_fraction", 0.2);
        cfg.mlp.train.patience = m.value("patience", 0);
        cfg.mlp.train.init_scale = m.value("init_scale", 0.5);
        cfg.mlp.train.squash_output = m.value("squash_output", true);
        cfg.mlp.train_all_pairs = m.value("train_all_pairs", false);
        cfg.mlp.train.validate();
    }

    if (models.contains("glm")) {
        const auto& g = models["glm"];
        if (g.contains("radii")) {
            cfg.glm.radii.clear();
            for (const auto& v : g["radii"]) cfg.glm.radii.push_back(v.get<int>());
        }
        if (g.contains("epsilons")) {
            cfg.glm.epsilons.clear();
            for (const auto& v : g["epsilons"]) cfg.glm.epsilons.push_back(v.get<double>());
        }
        cfg.glm.decay = decay_from_string(g.value("decay", "inverse"));
        cfg.glm.gaussian_sigma = g.value("gaussian_sigma", 1.5);
        cfg.glm.fit.max_iterations = g.value("max_iterations", 100);
        if (cfg.glm.radii.empty() || cfg.glm.epsilons.empty())
            throw ConfigError("glm: radii and epsilons must be non-empty");
    }
    return cfg;
}

inline ProjectConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

} // namespace prospect
