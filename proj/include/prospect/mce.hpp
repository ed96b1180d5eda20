// Multi-criteria evaluation: diachronic calibration of factors against the
// homogeneous-space expectation, fuzzy standardization of factor layers,
// pairwise-comparison weights via the principal eigenvector, and ordered
// weighted averaging under boolean constraints. The per-category output is
// a [0,1] suitability layer.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"

namespace prospect {

// Two-sided normal quantiles for the 99% / 99.9% significance screens.
inline constexpr double kZ99 = 2.5758293035489004;
inline constexpr double kZ999 = 3.2905267314919255;

struct FuzzySpec {
    enum class Shape { increasing, decreasing, symmetric };
    enum class Family { sigmoidal, linear };

    Shape shape = Shape::increasing;
    Family family = Family::sigmoidal;
    double a = 0.0, b = 1.0, c = 1.0, d = 1.0; // monotone shapes use (a, b) only

    void validate() const {
        if (shape == Shape::symmetric) {
            if (!(a <= b && b <= c && c <= d)) throw ConfigError("fuzzy: control points must satisfy a<=b<=c<=d");
        } else if (!(a <= b)) {
            throw ConfigError("fuzzy: control points must satisfy a<=b");
        }
    }

    double eval(double v) const {
        auto ramp_up = [this](double x, double lo, double hi) {
            if (x <= lo) return 0.0;
            if (x >= hi) return 1.0;
            const double t = (x - lo) / (hi - lo);
            if (family == Family::linear) return t;
            const double s = std::cos((1.0 - t) * 1.5707963267948966);
            return s * s;
        };
        switch (shape) {
        case Shape::increasing: return ramp_up(v, a, b);
        case Shape::decreasing: return 1.0 - ramp_up(v, a, b);
        case Shape::symmetric:
            if (v < b) return ramp_up(v, a, b);
            if (v <= c) return 1.0;
            return 1.0 - ramp_up(v, c, d);
        }
        return 0.0;
    }
};

inline ContinuousRaster fuzzy_standardize(const ContinuousRaster& factor, const FuzzySpec& spec) {
    spec.validate();
    ContinuousRaster out = factor;
    out.name = factor.name + "_fuzzy";
    for (auto& v : out.values)
        if (!std::isnan(v)) v = spec.eval(v);
    return out;
}

// Reciprocal pairwise-comparison matrix.
struct SaatyMatrix {
    int n = 0;
    std::vector<double> m; // n x n

    double at(int i, int j) const { return m[static_cast<std::size_t>(i) * n + j]; }

    void validate() const {
        if (n < 1 || static_cast<int>(m.size()) != n * n) throw ConfigError("saaty: matrix shape mismatch");
        for (int i = 0; i < n; ++i) {
            if (std::abs(at(i, i) - 1.0) > 1e-9) throw ConfigError("saaty: diagonal entries must be 1");
            for (int j = 0; j < n; ++j) {
                if (at(i, j) <= 0.0) throw ConfigError("saaty: entries must be positive");
                if (std::abs(at(j, i) - 1.0 / at(i, j)) > 1e-9 * std::max(1.0, 1.0 / at(i, j)))
                    throw ConfigError("saaty: matrix is not reciprocal at (" + std::to_string(i + 1) + "," +
                                      std::to_string(j + 1) + ")");
            }
        }
    }

    // Consistent matrix m[i][j] = w[i]/w[j] built from a weight vector.
    static SaatyMatrix from_weights(const std::vector<double>& w) {
        SaatyMatrix s;
        s.n = static_cast<int>(w.size());
        s.m.resize(static_cast<std::size_t>(s.n) * s.n);
        for (int i = 0; i < s.n; ++i)
            for (int j = 0; j < s.n; ++j) {
                if (w[static_cast<std::size_t>(j)] <= 0.0) throw ConfigError("saaty: weights must be positive");
                s.m[static_cast<std::size_t>(i) * s.n + j] = w[static_cast<std::size_t>(i)] / w[static_cast<std::size_t>(j)];
            }
        return s;
    }
};

struct SaatyResult {
    std::vector<double> weights; // normalized to sum 1
    double lambda_max = 0.0;
    double consistency_index = 0.0;
    double consistency_ratio = 0.0;
    int iterations = 0;
    bool consistency_warning = false; // CR > 0.10
};

namespace detail {

// Power iteration on a positive matrix, normalized to sum 1 each round.
// Invariant under positive rescaling of the matrix.
inline std::pair<std::vector<double>, int> principal_eigenvector(int n, const std::vector<double>& m,
                                                                 double tol = 1e-12, int max_iter = 10000) {
    std::vector<double> v(static_cast<std::size_t>(n), 1.0 / n), next(static_cast<std::size_t>(n));
    int it = 0;
    for (; it < max_iter; ++it) {
        for (int i = 0; i < n; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += m[static_cast<std::size_t>(i) * n + j] * v[static_cast<std::size_t>(j)];
            next[static_cast<std::size_t>(i)] = s;
        }
        const double total = std::accumulate(next.begin(), next.end(), 0.0);
        for (auto& x : next) x /= total;
        double delta = 0.0;
        for (int i = 0; i < n; ++i) delta = std::max(delta, std::abs(next[static_cast<std::size_t>(i)] - v[static_cast<std::size_t>(i)]));
        v = next;
        if (delta < tol) break;
    }
    if (it == max_iter)
        throw ConvergenceError("principal_eigenvector: no convergence in " + std::to_string(max_iter) +
                               " rounds (last iterate change above tolerance)");
    return {v, it + 1};
}

} // namespace detail

// Principal eigenvector by power iteration (tolerance 1e-12 on the iterate,
// at most 10000 rounds). The consistency ratio uses the standard random
// index table.
inline SaatyResult saaty_weights(const SaatyMatrix& m) {
    m.validate();
    const int n = m.n;
    SaatyResult res;
    auto [v, iterations] = detail::principal_eigenvector(n, m.m);
    res.weights = v;
    res.iterations = iterations;
    // Rayleigh estimate of the principal eigenvalue.
    double lambda = 0.0;
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += m.at(i, j) * v[static_cast<std::size_t>(j)];
        lambda += s / v[static_cast<std::size_t>(i)];
    }
    res.lambda_max = lambda / n;
    res.consistency_index = (n > 1) ? (res.lambda_max - n) / (n - 1) : 0.0;
    static const double random_index[] = {0.0, 0.0, 0.0, 0.58, 0.90, 1.12, 1.24, 1.32, 1.41, 1.45, 1.49};
    const double ri = (n <= 10) ? random_index[n] : 1.49;
    res.consistency_ratio = (ri > 0.0) ? res.consistency_index / ri : 0.0;
    res.consistency_warning = res.consistency_ratio > 0.10;
    return res;
}

struct OwaSpec {
    std::vector<double> factor_weights;
    std::vector<double> order_weights;

    void validate() const {
        auto check = [](const std::vector<double>& w, const char* label) {
            if (w.empty()) throw ConfigError(std::string("owa: empty ") + label);
            double sum = 0.0;
            for (double x : w) {
                if (x < 0.0) throw ConfigError(std::string("owa: negative ") + label);
                sum += x;
            }
            if (std::abs(sum - 1.0) > 1e-12) throw ConfigError(std::string("owa: ") + label + " must sum to 1");
        };
        check(factor_weights, "factor weights");
        check(order_weights, "order weights");
        if (factor_weights.size() != order_weights.size())
            throw ConfigError("owa: factor and order weight vectors must have the same length");
    }
};

using BoolMask = std::vector<std::uint8_t>;

// Per pixel: factor values are scaled by n * factor_weight, sorted
// ascending, and combined with the order weights; the result is a convex
// combination of the weighted values, so it stays between their minimum and
// maximum. Constraint masks zero the output where any of them is false.
inline ContinuousRaster owa_combine(const std::vector<ContinuousRaster>& factors, const OwaSpec& spec,
                                    const std::vector<const BoolMask*>& constraints = {}) {
    spec.validate();
    if (factors.empty()) throw ConfigError("owa_combine: no factor layers");
    if (factors.size() != spec.order_weights.size())
        throw ConfigError("owa_combine: got " + std::to_string(factors.size()) + " layers for " +
                          std::to_string(spec.order_weights.size()) + " order weights");
    std::vector<GridShape> shapes;
    for (const auto& f : factors) shapes.push_back(shape_of(f));
    align_check(shapes);
    const std::size_t cells = factors.front().values.size();
    for (const auto* m : constraints)
        if (m->size() != cells) throw DataError("owa_combine: constraint mask size mismatch");

    const std::size_t n = factors.size();
    ContinuousRaster out(factors.front().rows, factors.front().cols, factors.front().cell_size, "owa");
    std::vector<double> u(n);
    for (std::size_t i = 0; i < cells; ++i) {
        bool masked = false;
        for (const auto* mks : constraints)
            if (!(*mks)[i]) {
                masked = true;
                break;
            }
        bool nodata = false;
        for (std::size_t f = 0; f < n; ++f) {
            const double v = factors[f].values[i];
            if (std::isnan(v)) {
                nodata = true;
                break;
            }
            u[f] = v * spec.factor_weights[f] * static_cast<double>(n);
        }
        if (nodata) continue;
        if (masked) {
            out.values[i] = 0.0;
            continue;
        }
        std::sort(u.begin(), u.end());
        double acc = 0.0;
        for (std::size_t f = 0; f < n; ++f) acc += u[f] * spec.order_weights[f];
        out.values[i] = acc;
    }
    return out;
}

// Diachronic calibration of one factor against one land-cover map: the
// factor is quantile-binned, observed per-category counts are compared to
// the homogeneous-space expectation with a normal screen at 99% / 99.9%,
// and a [0,1] propensity profile is derived per category.
struct CalibrationCell {
    long observed = 0;
    double expected = 0.0;
    double z = 0.0;
    bool flag99 = false;
    bool flag999 = false;
    double propensity = 0.5;
};

struct CalibrationTable {
    std::string factor_name;
    int bins = 0;
    std::vector<double> bin_lo, bin_hi;   // value range per bin
    std::vector<long> bin_total;          // valid pixels per bin
    std::vector<int> codes;               // all legend codes
    std::vector<CalibrationCell> cells;   // codes.size() x bins
    std::vector<std::string> notes;

    const CalibrationCell& cell(int code, int bin) const {
        for (std::size_t i = 0; i < codes.size(); ++i)
            if (codes[i] == code) return cells[i * static_cast<std::size_t>(bins) + static_cast<std::size_t>(bin)];
        throw DataError("calibration: no row for code " + std::to_string(code));
    }
};

inline CalibrationTable calibrate_factor(const CategoricalRaster& category_map, const ContinuousRaster& factor,
                                         int bins, int k) {
    align_check({shape_of(category_map, "category_map"), shape_of(factor)});
    if (bins < 2) throw ConfigError("calibrate_factor: need at least 2 bins");

    // Cells valid in both layers enter the tally.
    std::vector<std::pair<double, int>> samples; // (factor value, code)
    for (std::size_t i = 0; i < category_map.cell_count(); ++i) {
        if (!category_map.valid_index(i) || !factor.valid_index(i)) continue;
        samples.emplace_back(factor.values[i], category_map.values[i]);
    }
    if (samples.size() < static_cast<std::size_t>(bins))
        throw DataError("calibrate_factor: fewer valid cells than bins");

    std::vector<double> values(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) values[i] = samples[i].first;
    std::sort(values.begin(), values.end());

    CalibrationTable table;
    table.factor_name = factor.name;

    // Quantile edges; duplicates from heavy ties merge into the neighbor bin.
    std::vector<double> edges; // internal upper edges, ascending
    for (int b = 1; b < bins; ++b) {
        const std::size_t pos = static_cast<std::size_t>(static_cast<double>(b) * static_cast<double>(values.size()) / bins);
        const double e = values[std::min(pos, values.size() - 1)];
        if (edges.empty() || e > edges.back()) {
            edges.push_back(e);
        } else {
            table.notes.push_back("empty quantile bin merged at edge " + detail::format_double(e));
        }
    }
    table.bins = static_cast<int>(edges.size()) + 1;

    auto bin_of = [&edges](double v) {
        return static_cast<int>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
    };

    table.bin_lo.assign(static_cast<std::size_t>(table.bins), values.front());
    table.bin_hi.assign(static_cast<std::size_t>(table.bins), values.back());
    for (int b = 0; b < table.bins; ++b) {
        if (b > 0) table.bin_lo[static_cast<std::size_t>(b)] = edges[static_cast<std::size_t>(b - 1)];
        if (b < table.bins - 1) table.bin_hi[static_cast<std::size_t>(b)] = edges[static_cast<std::size_t>(b)];
    }

    table.bin_total.assign(static_cast<std::size_t>(table.bins), 0);
    for (int c = 1; c <= k; ++c) table.codes.push_back(c);
    std::vector<long> cat_total(static_cast<std::size_t>(k), 0);
    std::vector<long> obs(static_cast<std::size_t>(k) * table.bins, 0);
    for (const auto& [v, code] : samples) {
        const int b = bin_of(v);
        ++table.bin_total[static_cast<std::size_t>(b)];
        ++cat_total[static_cast<std::size_t>(code - 1)];
        ++obs[static_cast<std::size_t>(code - 1) * table.bins + static_cast<std::size_t>(b)];
    }

    const double total = static_cast<double>(samples.size());
    table.cells.assign(static_cast<std::size_t>(k) * table.bins, {});
    for (int c = 0; c < k; ++c) {
        std::vector<double> raw(static_cast<std::size_t>(table.bins), 0.5);
        for (int b = 0; b < table.bins; ++b) {
            CalibrationCell& cell = table.cells[static_cast<std::size_t>(c) * table.bins + static_cast<std::size_t>(b)];
            cell.observed = obs[static_cast<std::size_t>(c) * table.bins + static_cast<std::size_t>(b)];
            const double frac = static_cast<double>(table.bin_total[static_cast<std::size_t>(b)]) / total;
            cell.expected = static_cast<double>(cat_total[static_cast<std::size_t>(c)]) * frac;
            if (cell.expected > 0.0) {
                cell.z = (static_cast<double>(cell.observed) - cell.expected) / std::sqrt(cell.expected);
                cell.flag99 = std::abs(cell.z) > kZ99;
                cell.flag999 = std::abs(cell.z) > kZ999;
            }
            const double denom = static_cast<double>(cell.observed) + cell.expected;
            raw[static_cast<std::size_t>(b)] = (denom > 0.0) ? static_cast<double>(cell.observed) / denom : 0.5;
        }
        // Min-max rescale of the propensity profile within the category;
        // a flat profile stays at its raw value (0.5 when obs == exp).
        const auto [mn, mx] = std::minmax_element(raw.begin(), raw.end());
        for (int b = 0; b < table.bins; ++b) {
            CalibrationCell& cell = table.cells[static_cast<std::size_t>(c) * table.bins + static_cast<std::size_t>(b)];
            cell.propensity = (*mx - *mn > 1e-12) ? (raw[static_cast<std::size_t>(b)] - *mn) / (*mx - *mn)
                                                  : raw[static_cast<std::size_t>(b)];
        }
    }
    return table;
}

// Turns a calibration profile into monotone fuzzy control points: the ramp
// spans the 5th..95th propensity-weighted percentiles of the bin centers,
// rising or falling with the sign of the propensity/value covariance.
// Returns nullopt (meaning "no preference, constant 1") when the profile
// carries no signal.
inline std::optional<FuzzySpec> fuzzy_from_calibration(const CalibrationTable& table, int code) {
    std::vector<double> centers, prop;
    for (int b = 0; b < table.bins; ++b) {
        centers.push_back(0.5 * (table.bin_lo[static_cast<std::size_t>(b)] + table.bin_hi[static_cast<std::size_t>(b)]));
        prop.push_back(table.cell(code, b).propensity);
    }
    const double wsum = std::accumulate(prop.begin(), prop.end(), 0.0);
    const auto [mn, mx] = std::minmax_element(prop.begin(), prop.end());
    if (wsum <= 0.0 || *mx - *mn < 1e-9) return std::nullopt;

    // Direction from the propensity-weighted covariance with the bin center.
    const double cmean = std::accumulate(centers.begin(), centers.end(), 0.0) / centers.size();
    const double pmean = wsum / prop.size();
    double cov = 0.0;
    for (std::size_t b = 0; b < centers.size(); ++b) cov += (centers[b] - cmean) * (prop[b] - pmean);

    auto weighted_percentile = [&](double q) {
        double acc = 0.0;
        for (std::size_t b = 0; b < centers.size(); ++b) {
            acc += prop[b] / wsum;
            if (acc >= q) return centers[b];
        }
        return centers.back();
    };
    double lo = weighted_percentile(0.05);
    double hi = weighted_percentile(0.95);
    if (lo > hi) std::swap(lo, hi);
    if (hi - lo < 1e-12) { // single informative bin: ramp across it
        const double half = 0.5 * std::max(1e-12, centers.back() - centers.front()) / table.bins;
        lo -= half;
        hi += half;
    }
    FuzzySpec spec;
    spec.family = FuzzySpec::Family::sigmoidal;
    spec.shape = (cov >= 0.0) ? FuzzySpec::Shape::increasing : FuzzySpec::Shape::decreasing;
    spec.a = lo;
    spec.b = hi;
    return spec;
}

// Full per-category composition: calibrated fuzzy layers, eigenvector
// factor weights, OWA under constraints, clamped into [0,1].
struct SuitabilityInputs {
    const std::vector<ContinuousRaster>* factors = nullptr;
    std::vector<CalibrationTable> calibrations;              // one per factor
    std::map<std::string, FuzzySpec> fuzzy_overrides;        // by factor name
    SaatyMatrix saaty;
    std::vector<double> order_weights;                       // |factors|, sums to 1
    std::vector<const BoolMask*> constraints;
};

inline ContinuousRaster build_suitability(int code, const SuitabilityInputs& in) {
    if (!in.factors || in.factors->empty()) throw ConfigError("build_suitability: no factors");
    if (in.calibrations.size() != in.factors->size())
        throw ConfigError("build_suitability: one calibration table per factor required");

    std::vector<ContinuousRaster> layers;
    for (std::size_t f = 0; f < in.factors->size(); ++f) {
        const ContinuousRaster& factor = (*in.factors)[f];
        auto ov = in.fuzzy_overrides.find(factor.name);
        if (ov != in.fuzzy_overrides.end()) {
            layers.push_back(fuzzy_standardize(factor, ov->second));
            continue;
        }
        const auto spec = fuzzy_from_calibration(in.calibrations[f], code);
        if (spec) {
            layers.push_back(fuzzy_standardize(factor, *spec));
        } else {
            ContinuousRaster ones = factor; // uninformative factor imposes no preference
            for (auto& v : ones.values)
                if (!std::isnan(v)) v = 1.0;
            layers.push_back(std::move(ones));
        }
    }

    const SaatyResult weights = saaty_weights(in.saaty);
    OwaSpec owa;
    owa.factor_weights = weights.weights;
    owa.order_weights = in.order_weights;
    ContinuousRaster out = owa_combine(layers, owa, in.constraints);
    out.name = "suitability_cat" + std::to_string(code);
    for (auto& v : out.values)
        if (!std::isnan(v)) v = std::clamp(v, 0.0, 1.0);
    return out;
}

inline void write_calibration_csv(const CalibrationTable& t, const Legend& legend, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "factor,category,bin,lo,hi,observed,expected,z,flag99,flag999,propensity\n";
    for (std::size_t c = 0; c < t.codes.size(); ++c) {
        for (int b = 0; b < t.bins; ++b) {
            const auto& cell = t.cells[c * static_cast<std::size_t>(t.bins) + static_cast<std::size_t>(b)];
            out << t.factor_name << ',' << legend.category(t.codes[c]).name << ',' << b << ','
                << detail::format_double(t.bin_lo[static_cast<std::size_t>(b)]) << ','
                << detail::format_double(t.bin_hi[static_cast<std::size_t>(b)]) << ',' << cell.observed << ','
                << detail::format_double(cell.expected) << ',' << detail::format_double(cell.z) << ','
                << (cell.flag99 ? 1 : 0) << ',' << (cell.flag999 ? 1 : 0) << ','
                << detail::format_double(cell.propensity) << '\n';
        }
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace prospect
