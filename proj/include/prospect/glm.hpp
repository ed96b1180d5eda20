// Penalized multinomial logistic regression against a reference category.
// The log-odds of every non-reference category are affine in the feature
// vector; fitting maximizes log-likelihood minus epsilon * ||params||^2 by
// damped Newton-Raphson (step halving keeps the objective monotone, which
// the loop asserts). Prediction assigns each pixel the category with the
// largest posterior probability.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/features.hpp"
#include "prospect/grid.hpp"
#include "prospect/report.hpp"

namespace prospect {

struct LogitParams {
    std::vector<int> codes;      // modelled category codes, ascending; the last one is the reference
    int d = 0;                   // feature dimension
    double epsilon = 0.0;
    std::vector<double> theta;   // (K-1) x (d+1): [intercept, coefficients...] per non-reference category

    int k() const { return static_cast<int>(codes.size()); }
    int reference_code() const { return codes.back(); }
    std::size_t n_params() const { return static_cast<std::size_t>(k() - 1) * (d + 1); }
    double intercept(int v) const { return theta[static_cast<std::size_t>(v) * (d + 1)]; }
    double coef(int v, int j) const { return theta[static_cast<std::size_t>(v) * (d + 1) + 1 + j]; }
};

// Posterior probabilities over the modelled categories, aligned with
// params.codes. Log-sum-exp stabilization keeps the result finite for any
// parameter magnitude; the components sum to 1.
inline std::vector<double> logit_probabilities(const LogitParams& params, std::span<const double> x) {
    if (static_cast<int>(x.size()) != params.d)
        throw DataError("logit_probabilities: expected " + std::to_string(params.d) + " features, got " +
                        std::to_string(x.size()));
    const int k = params.k();
    std::vector<double> score(static_cast<std::size_t>(k), 0.0); // reference score is 0
    for (int v = 0; v + 1 < k; ++v) {
        double s = params.intercept(v);
        for (int j = 0; j < params.d; ++j) s += params.coef(v, j) * x[static_cast<std::size_t>(j)];
        score[static_cast<std::size_t>(v)] = s;
    }
    const double m = *std::max_element(score.begin(), score.end());
    double total = 0.0;
    for (auto& s : score) {
        s = std::exp(s - m);
        total += s;
    }
    for (auto& s : score) s /= total;
    return score;
}

struct FitDiagnostics {
    int iterations = 0;
    double gradient_norm = 0.0; // infinity norm at exit
    double objective = 0.0;     // penalized log-likelihood at exit
    bool converged = false;
    bool monotone = true;       // damped objective never decreased
    std::vector<double> objective_trace;
};

struct FitOptions {
    int max_iterations = 100;
    double gradient_tol = 1e-8;
    double objective_tol = 1e-12;  // relative change
    double blowup_norm = 1e4;      // parameter norm signalling separation at epsilon 0
};

namespace detail {

inline double penalized_loglik(const LogitParams& params, const Dataset& ds,
                               const std::vector<int>& target_slot) {
    double ll = 0.0;
    for (std::size_t i = 0; i < ds.n; ++i) {
        const auto p = logit_probabilities(params, ds.row(i));
        ll += std::log(std::max(p[static_cast<std::size_t>(target_slot[i])], 1e-300));
    }
    double norm2 = 0.0;
    for (double t : params.theta) norm2 += t * t;
    return ll - params.epsilon * norm2;
}

} // namespace detail

// Fits the model on a dataset whose targets are legend codes drawn from
// `codes` (ascending; last = reference). Every category should appear in
// the targets; absent categories are tolerated only with epsilon > 0, since
// their likelihood optimum is otherwise at infinity.
inline LogitParams fit_penalized(const Dataset& ds, const std::vector<int>& codes, double epsilon,
                                 FitDiagnostics* diag = nullptr, const FitOptions& opt = {}) {
    if (ds.n == 0) throw DataError("fit_penalized: empty dataset");
    if (codes.size() < 2) throw ConfigError("fit_penalized: need at least two categories");
    if (epsilon < 0.0) throw ConfigError("fit_penalized: epsilon must be >= 0");

    const int k = static_cast<int>(codes.size());
    const int d = static_cast<int>(ds.dim);
    std::vector<int> slot_of_code(1 + *std::max_element(codes.begin(), codes.end()), -1);
    for (int v = 0; v < k; ++v) slot_of_code[static_cast<std::size_t>(codes[static_cast<std::size_t>(v)])] = v;

    std::vector<int> target_slot(ds.n);
    std::vector<long> present(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < ds.n; ++i) {
        const int code = ds.target_code[i];
        if (code < 0 || code >= static_cast<int>(slot_of_code.size()) || slot_of_code[static_cast<std::size_t>(code)] < 0)
            throw DataError("fit_penalized: target code " + std::to_string(code) + " not among the modelled categories");
        target_slot[i] = slot_of_code[static_cast<std::size_t>(code)];
        ++present[static_cast<std::size_t>(target_slot[i])];
    }
    if (epsilon == 0.0) {
        for (int v = 0; v < k; ++v)
            if (present[static_cast<std::size_t>(v)] == 0)
                throw DataError("fit_penalized: category " + std::to_string(codes[static_cast<std::size_t>(v)]) +
                                " absent from the targets; use epsilon > 0 or drop it");
    }

    LogitParams params;
    params.codes = codes;
    params.d = d;
    params.epsilon = epsilon;
    params.theta.assign(static_cast<std::size_t>(k - 1) * (d + 1), 0.0);

    const int m = static_cast<int>(params.n_params());
    const int dp1 = d + 1;
    FitDiagnostics local;
    FitDiagnostics& dg = diag ? *diag : local;
    dg = FitDiagnostics{};

    double obj = detail::penalized_loglik(params, ds, target_slot);
    dg.objective_trace.push_back(obj);

    Eigen::VectorXd grad(m);
    Eigen::MatrixXd hess(m, m);
    std::vector<double> probs;
    std::vector<double> xt(static_cast<std::size_t>(dp1));
    Eigen::MatrixXd outer(dp1, dp1);

    for (int iter = 1; iter <= opt.max_iterations; ++iter) {
        grad.setZero();
        hess.setZero();
        for (std::size_t i = 0; i < ds.n; ++i) {
            const auto xrow = ds.row(i);
            xt[0] = 1.0;
            for (int j = 0; j < d; ++j) xt[static_cast<std::size_t>(j + 1)] = xrow[static_cast<std::size_t>(j)];
            probs = logit_probabilities(params, xrow);
            for (int a = 0; a < dp1; ++a)
                for (int b = 0; b < dp1; ++b) outer(a, b) = xt[static_cast<std::size_t>(a)] * xt[static_cast<std::size_t>(b)];
            for (int v = 0; v + 1 < k; ++v) {
                const double pv = probs[static_cast<std::size_t>(v)];
                const double resid = ((target_slot[i] == v) ? 1.0 : 0.0) - pv;
                for (int a = 0; a < dp1; ++a) grad(v * dp1 + a) += resid * xt[static_cast<std::size_t>(a)];
                for (int u = 0; u + 1 < k; ++u) {
                    const double pu = probs[static_cast<std::size_t>(u)];
                    const double wuv = pv * (((u == v) ? 1.0 : 0.0) - pu); // Fisher weight
                    if (wuv == 0.0) continue;
                    hess.block(v * dp1, u * dp1, dp1, dp1) -= wuv * outer;
                }
            }
        }
        for (int j = 0; j < m; ++j) {
            grad(j) -= 2.0 * epsilon * params.theta[static_cast<std::size_t>(j)];
            hess(j, j) -= 2.0 * epsilon;
        }

        dg.gradient_norm = grad.cwiseAbs().maxCoeff();
        if (dg.gradient_norm < opt.gradient_tol) {
            dg.converged = true;
            break;
        }

        // Newton ascent direction; -hess is positive definite for the
        // penalized concave objective.
        Eigen::LDLT<Eigen::MatrixXd> ldlt(-hess);
        Eigen::VectorXd step = ldlt.solve(grad);
        if (!step.allFinite())
            throw ConvergenceError("fit_penalized: Newton system is singular; increase epsilon");

        // Step halving: never accept a decrease of the objective.
        const std::vector<double> theta0 = params.theta;
        double t = 1.0;
        double new_obj = -std::numeric_limits<double>::infinity();
        for (int half = 0; half < 60; ++half) {
            for (int j = 0; j < m; ++j) params.theta[static_cast<std::size_t>(j)] = theta0[static_cast<std::size_t>(j)] + t * step(j);
            new_obj = detail::penalized_loglik(params, ds, target_slot);
            if (new_obj >= obj) break;
            t *= 0.5;
        }
        if (new_obj < obj) { // stalled at float noise: keep the old point and stop
            params.theta = theta0;
            dg.iterations = iter;
            dg.converged = true;
            break;
        }
        obj = new_obj;
        dg.objective_trace.push_back(obj);
        dg.iterations = iter;

        double norm2 = 0.0;
        for (double th : params.theta) norm2 += th * th;
        if (std::sqrt(norm2) > opt.blowup_norm)
            throw ConvergenceError("fit_penalized: parameter norm exceeded " +
                                   std::to_string(opt.blowup_norm) +
                                   " (separable data?); use epsilon > 0");

        const double rel = std::abs(new_obj - dg.objective_trace[dg.objective_trace.size() - 2]) /
                           (1.0 + std::abs(new_obj));
        if (rel < opt.objective_tol) {
            dg.converged = true;
            break;
        }
    }
    dg.objective = obj;
    if (!dg.converged)
        throw ConvergenceError("fit_penalized: no convergence after " + std::to_string(opt.max_iterations) +
                               " iterations (gradient norm " + std::to_string(dg.gradient_norm) + ")");
    // Complete separation drives the unpenalized likelihood to its supremum
    // of zero along a divergent parameter ray; the iteration then stalls at
    // perfect in-sample certainty instead of a finite optimum.
    if (epsilon == 0.0 && obj > -1e-8 * static_cast<double>(ds.n))
        throw ConvergenceError("fit_penalized: perfect in-sample certainty with epsilon 0 (separable data); "
                               "use epsilon > 0");
    return params;
}

// Whole-map Bayes-rule prediction: every valid modelled pixel takes the
// argmax posterior category (ties to the lower code); constant codes
// persist. The probability stack retains the full posterior.
inline PredictionReport glm_predict_map(const LogitParams& params, const CategoricalRaster& map_t,
                                        const FeatureBuilder& builder) {
    const Legend& legend = builder.legend();
    if (builder.modelled_codes() != params.codes)
        throw DataError("glm_predict_map: parameter categories do not match the legend");
    if (static_cast<int>(builder.dim()) != params.d)
        throw DataError("glm_predict_map: feature dimension mismatch");

    PredictionReport report;
    report.model = "glm";
    report.predicted = map_t;
    for (int code : params.codes) {
        report.probabilities.codes.push_back(code);
        report.probabilities.layers.emplace_back(map_t.rows, map_t.cols, map_t.cell_size,
                                                 "p_" + legend.category(code).name);
    }

    std::vector<double> feat(builder.dim());
    for (int r = 0; r < map_t.rows; ++r) {
        for (int c = 0; c < map_t.cols; ++c) {
            if (!map_t.valid(r, c)) continue;
            const std::size_t idx = map_t.index(r, c);
            if (legend.is_constant(map_t.at(r, c))) continue;
            builder.row(map_t, r, c, feat.data());
            const auto probs = logit_probabilities(params, feat);
            int best = 0;
            for (std::size_t v = 0; v < probs.size(); ++v) {
                report.probabilities.layers[v].values[idx] = probs[v];
                if (probs[v] > probs[static_cast<std::size_t>(best)]) best = static_cast<int>(v);
            }
            report.predicted.values[idx] = params.codes[static_cast<std::size_t>(best)];
        }
    }
    return report;
}

struct GridSearchCell {
    int radius = 0;
    double epsilon = 0.0;
    long mispredicted = -1;
    bool ok = false;
    std::string error;
};

struct GridSearchResult {
    std::vector<GridSearchCell> tried;
    int best_radius = 0;
    double best_epsilon = 0.0;
    long best_mispredicted = -1;
};

// Validation grid over neighborhood radius and penalty: each cell trains on
// (t0 -> t1) frontier pixels, predicts t2 from t1, and counts mispredicted
// valid pixels; the best cell minimizes that count, ties going to the
// smaller radius and then the smaller epsilon. Failed cells are recorded
// and excluded from the choice.
inline GridSearchResult grid_search(const CategoricalRaster& map_t0, const CategoricalRaster& map_t1,
                                    const CategoricalRaster& map_t2, const std::vector<ContinuousRaster>& factors,
                                    const Legend& legend, const std::vector<int>& radii,
                                    const std::vector<double>& epsilons, DecayFamily decay = DecayFamily::inverse,
                                    const FitOptions& opt = {}) {
    if (radii.empty() || epsilons.empty()) throw ConfigError("grid_search: empty grid");
    const auto codes = legend.modelled_codes();
    GridSearchResult result;
    for (int radius : radii) {
        NeighborhoodSpec spec{radius, decay};
        const FeatureBuilder builder(legend, factors, spec);
        Dataset train;
        bool built = false;
        std::string build_error;
        try {
            train = assemble_dataset(map_t0, map_t1, builder, /*frontier_only=*/true);
            built = true;
        } catch (const Error& e) {
            build_error = e.what();
        }
        for (double eps : epsilons) {
            GridSearchCell cell;
            cell.radius = radius;
            cell.epsilon = eps;
            if (!built) {
                cell.error = build_error;
                result.tried.push_back(cell);
                continue;
            }
            try {
                const LogitParams params = fit_penalized(train, codes, eps, nullptr, opt);
                const PredictionReport rep = glm_predict_map(params, map_t1, builder);
                long wrong = 0;
                for (std::size_t i = 0; i < map_t2.cell_count(); ++i) {
                    if (!map_t2.valid_index(i) || !rep.predicted.valid_index(i)) continue;
                    if (rep.predicted.values[i] != map_t2.values[i]) ++wrong;
                }
                cell.mispredicted = wrong;
                cell.ok = true;
            } catch (const Error& e) {
                cell.error = e.what();
            }
            result.tried.push_back(cell);
        }
    }
    result.best_mispredicted = -1;
    for (const auto& cell : result.tried) {
        if (!cell.ok) continue;
        const bool better = result.best_mispredicted < 0 || cell.mispredicted < result.best_mispredicted ||
                            (cell.mispredicted == result.best_mispredicted &&
                             (cell.radius < result.best_radius ||
                              (cell.radius == result.best_radius && cell.epsilon < result.best_epsilon)));
        if (better) {
            result.best_mispredicted = cell.mispredicted;
            result.best_radius = cell.radius;
            result.best_epsilon = cell.epsilon;
        }
    }
    if (result.best_mispredicted < 0) throw ConvergenceError("grid_search: every grid cell failed");
    return result;
}

inline void write_logit_params_csv(const LogitParams& params, const std::vector<std::string>& feature_names,
                                   const Legend& legend, const std::filesystem::path& path) {
    if (static_cast<int>(feature_names.size()) != params.d)
        throw DataError("write_logit_params_csv: feature name count mismatch");
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "category,term,value\n";
    out << "reference," << legend.category(params.reference_code()).name << ",0\n";
    for (int v = 0; v + 1 < params.k(); ++v) {
        const std::string cat = legend.category(params.codes[static_cast<std::size_t>(v)]).name;
        out << cat << ",intercept," << detail::format_double(params.intercept(v)) << '\n';
        for (int j = 0; j < params.d; ++j)
            out << cat << ',' << feature_names[static_cast<std::size_t>(j)] << ','
                << detail::format_double(params.coef(v, j)) << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void write_grid_search_csv(const GridSearchResult& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "radius,epsilon,mispredicted,status\n";
    for (const auto& c : r.tried) {
        out << c.radius << ',' << detail::format_double(c.epsilon) << ',';
        if (c.ok)
            out << c.mispredicted << ",ok";
        else
            out << "NA,failed: " << c.error;
        out << '\n';
    }
    out << "# best radius=" << r.best_radius << " epsilon=" << detail::format_double(r.best_epsilon) << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace prospect
