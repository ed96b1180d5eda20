// Deterministic synthetic-landscape generator. Produces a bundle of dated
// land-cover snapshots plus smooth environmental factor layers with a known
// ground-truth dynamic: a fixed per-interval transition matrix, optionally
// modulated by factor-driven suitability and by local contagion. The same
// (spec, seed) pair always yields byte-identical bundles.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"
#include "prospect/rng.hpp"

namespace prospect {

enum class FactorKind { gradient_noise, slope_of, aspect_of, radial, uniform_noise };

struct FactorDef {
    std::string name;
    FactorKind kind = FactorKind::gradient_noise;
    double base = 0.0;   // gradient_noise: value at the low edge
    double range = 1.0;  // gradient_noise: rise across the grid
    double noise = 0.2;  // additive noise amplitude as a fraction of range
    int smooth = 2;      // box-blur passes applied to the noise field
    std::string source;  // slope_of / aspect_of: name of the source factor
};

// Per-category response to a factor, used to tilt the ground-truth dynamic.
enum class FactorResponse { high, low, mid };

struct ScenarioSpec {
    int rows = 64;
    int cols = 64;
    double cell_size = 18.0;
    Legend legend = default_legend();
    std::vector<int> dates;                       // >= 3, strictly increasing
    std::vector<FactorDef> factors;
    std::vector<std::vector<double>> transitions; // K x K, applied once per interval
    double suitability_influence = 0.0;            // 0 = pure Markov dynamic
    int contagion_radius = 0;                      // 0 = no neighborhood feedback
    double contagion_strength = 0.0;
    std::vector<double> initial_shares;            // per code, optional (uniform over modelled otherwise)
    int initial_smooth = 3;                        // majority-filter passes on the seed map
    int nodata_margin = 0;                         // border cells masked out in every layer
    std::map<int, std::map<std::string, FactorResponse>> preferences; // code -> factor -> response

    void validate() const {
        legend.validate();
        if (rows <= 0 || cols <= 0) throw ConfigError("scenario: grid dimensions must be positive");
        if (dates.size() < 3) throw ConfigError("scenario: need at least 3 dates");
        for (std::size_t i = 1; i < dates.size(); ++i)
            if (dates[i] <= dates[i - 1]) throw ConfigError("scenario: dates must be strictly increasing");
        const int k = legend.size();
        if (static_cast<int>(transitions.size()) != k)
            throw ConfigError("scenario: transition matrix must be " + std::to_string(k) + "x" + std::to_string(k));
        for (int i = 0; i < k; ++i) {
            if (static_cast<int>(transitions[static_cast<std::size_t>(i)].size()) != k)
                throw ConfigError("scenario: transition row " + std::to_string(i + 1) + " has wrong length");
            double sum = 0.0;
            for (double v : transitions[static_cast<std::size_t>(i)]) {
                if (v < 0.0) throw ConfigError("scenario: negative transition probability");
                sum += v;
            }
            if (sum <= 0.0)
                throw ConfigError("scenario: transition row " + std::to_string(i + 1) + " is all zeros");
        }
        if (!initial_shares.empty() && static_cast<int>(initial_shares.size()) != k)
            throw ConfigError("scenario: initial_shares must have one entry per category");
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (factors[i].name.empty()) throw ConfigError("scenario: factor without a name");
            for (std::size_t j = i + 1; j < factors.size(); ++j)
                if (factors[i].name == factors[j].name)
                    throw ConfigError("scenario: duplicate factor name '" + factors[i].name + "'");
        }
        if (suitability_influence < 0.0 || suitability_influence > 1.0)
            throw ConfigError("scenario: suitability_influence must be in [0,1]");
        if (contagion_strength < 0.0 || contagion_strength > 1.0)
            throw ConfigError("scenario: contagion_strength must be in [0,1]");
        if (2 * nodata_margin >= std::min(rows, cols))
            throw ConfigError("scenario: nodata_margin leaves no valid cells");
    }
};

struct ScenarioBundle {
    Legend legend;
    std::vector<CategoricalRaster> snapshots; // one per date, increasing
    std::vector<ContinuousRaster> factors;
    std::uint64_t seed = 0;
};

namespace detail {

inline void box_blur(std::vector<double>& v, int rows, int cols, int passes) {
    std::vector<double> tmp(v.size());
    for (int p = 0; p < passes; ++p) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                double sum = 0.0;
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) continue;
                        sum += v[static_cast<std::size_t>(rr) * cols + cc];
                        ++n;
                    }
                tmp[static_cast<std::size_t>(r) * cols + c] = sum / n;
            }
        }
        std::swap(v, tmp);
    }
}

inline ContinuousRaster make_factor(const ScenarioSpec& spec, const FactorDef& def, Rng& rng,
                                    const std::vector<ContinuousRaster>& built) {
    ContinuousRaster f(spec.rows, spec.cols, spec.cell_size, def.name);
    auto find_source = [&]() -> const ContinuousRaster& {
        for (const auto& b : built)
            if (b.name == def.source) return b;
        throw ConfigError("factor '" + def.name + "': unknown source '" + def.source + "'");
    };
    switch (def.kind) {
    case FactorKind::gradient_noise: {
        std::vector<double> noise(f.values.size());
        for (auto& x : noise) x = rng.uniform(-1.0, 1.0);
        box_blur(noise, spec.rows, spec.cols, def.smooth);
        for (int r = 0; r < spec.rows; ++r)
            for (int c = 0; c < spec.cols; ++c) {
                const double t = (spec.rows > 1) ? static_cast<double>(spec.rows - 1 - r) / (spec.rows - 1) : 0.0;
                f.at(r, c) = def.base + def.range * t + def.noise * def.range * noise[f.index(r, c)];
            }
        break;
    }
    case FactorKind::slope_of: {
        const ContinuousRaster& src = find_source();
        for (int r = 0; r < spec.rows; ++r)
            for (int c = 0; c < spec.cols; ++c) {
                const int r0 = std::max(0, r - 1), r1 = std::min(spec.rows - 1, r + 1);
                const int c0 = std::max(0, c - 1), c1 = std::min(spec.cols - 1, c + 1);
                const double dz_dr = (src.at(r1, c) - src.at(r0, c)) / ((r1 - r0) * spec.cell_size);
                const double dz_dc = (src.at(r, c1) - src.at(r, c0)) / ((c1 - c0) * spec.cell_size);
                f.at(r, c) = std::hypot(dz_dr, dz_dc);
            }
        break;
    }
    case FactorKind::aspect_of: {
        const ContinuousRaster& src = find_source();
        for (int r = 0; r < spec.rows; ++r)
            for (int c = 0; c < spec.cols; ++c) {
                const int r0 = std::max(0, r - 1), r1 = std::min(spec.rows - 1, r + 1);
                const int c0 = std::max(0, c - 1), c1 = std::min(spec.cols - 1, c + 1);
                const double dz_dr = src.at(r1, c) - src.at(r0, c);
                const double dz_dc = src.at(r, c1) - src.at(r, c0);
                double az = std::atan2(dz_dc, -dz_dr) * 180.0 / 3.14159265358979323846;
                if (az < 0.0) az += 360.0;
                f.at(r, c) = az;
            }
        break;
    }
    case FactorKind::radial: {
        // Distance-cost proxy from a deterministic anchor point.
        const int ar = rng.int_range(spec.rows / 4, 3 * spec.rows / 4);
        const int ac = rng.int_range(spec.cols / 4, 3 * spec.cols / 4);
        std::vector<double> noise(f.values.size());
        for (auto& x : noise) x = rng.uniform(-1.0, 1.0);
        box_blur(noise, spec.rows, spec.cols, def.smooth);
        const double dmax = std::hypot(static_cast<double>(spec.rows), static_cast<double>(spec.cols));
        for (int r = 0; r < spec.rows; ++r)
            for (int c = 0; c < spec.cols; ++c)
                f.at(r, c) = std::hypot(static_cast<double>(r - ar), static_cast<double>(c - ac)) / dmax +
                             def.noise * noise[f.index(r, c)];
        break;
    }
    case FactorKind::uniform_noise: {
        for (auto& x : f.values) x = rng.uniform01();
        break;
    }
    }
    return f;
}

// Percentile of v within the valid cells of the layer (precomputed sorted values).
inline double percentile_of(const std::vector<double>& sorted, double v) {
    if (sorted.empty()) return 0.5;
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), v);
    return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

} // namespace detail

// Generates the bundle declared by `spec`. Snapshot 0 is sampled from the
// initial shares (optionally tilted by factor preferences) and smoothed into
// patches; each later snapshot applies the ground-truth transition matrix
// once per interval, with per-pixel modulation by suitability and contagion.
inline ScenarioBundle synth_scenario(const ScenarioSpec& spec, std::uint64_t seed) {
    spec.validate();
    const int k = spec.legend.size();
    const int rows = spec.rows, cols = spec.cols;
    Rng rng(seed);

    ScenarioBundle bundle;
    bundle.legend = spec.legend;
    bundle.seed = seed;

    for (const auto& def : spec.factors)
        bundle.factors.push_back(detail::make_factor(spec, def, rng, bundle.factors));

    // Sorted copies for percentile lookups in the preference responses.
    std::vector<std::vector<double>> sorted_factors;
    for (const auto& f : bundle.factors) {
        std::vector<double> s;
        s.reserve(f.values.size());
        for (double v : f.values)
            if (!std::isnan(v)) s.push_back(v);
        std::sort(s.begin(), s.end());
        sorted_factors.push_back(std::move(s));
    }

    auto suitability = [&](int code, std::size_t idx) -> double {
        auto it = spec.preferences.find(code);
        if (it == spec.preferences.end()) return 1.0;
        double s = 1.0;
        for (const auto& [fname, resp] : it->second) {
            double pct = 0.5;
            bool found = false;
            for (std::size_t fi = 0; fi < bundle.factors.size(); ++fi) {
                if (bundle.factors[fi].name == fname) {
                    pct = detail::percentile_of(sorted_factors[fi], bundle.factors[fi].values[idx]);
                    found = true;
                    break;
                }
            }
            if (!found) throw ConfigError("preference for unknown factor '" + fname + "'");
            switch (resp) {
            case FactorResponse::high: s *= pct; break;
            case FactorResponse::low: s *= 1.0 - pct; break;
            case FactorResponse::mid: s *= 1.0 - std::abs(2.0 * pct - 1.0); break;
            }
        }
        return s;
    };

    // --- initial snapshot ---
    CategoricalRaster seed_map(rows, cols, spec.cell_size, spec.dates.front());
    std::vector<double> shares = spec.initial_shares;
    if (shares.empty()) {
        shares.assign(static_cast<std::size_t>(k), 0.0);
        const auto modelled = spec.legend.modelled_codes();
        for (int code : modelled) shares[static_cast<std::size_t>(code - 1)] = 1.0 / modelled.size();
    }
    const double alpha = spec.suitability_influence;
    std::vector<double> w(static_cast<std::size_t>(k));
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const std::size_t idx = seed_map.index(r, c);
            for (int j = 0; j < k; ++j) {
                const int code = j + 1;
                const double mod = spec.legend.is_constant(code) ? 0.0 : 1.0; // constants placed afterwards
                w[static_cast<std::size_t>(j)] =
                    shares[static_cast<std::size_t>(j)] * mod * (1.0 - alpha + alpha * suitability(code, idx));
            }
            const int pick = rng.weighted_index(w);
            seed_map.values[idx] = (pick < 0) ? 1 : pick + 1;
        }
    }

    // Majority filter builds contiguous patches out of the speckle.
    for (int pass = 0; pass < spec.initial_smooth; ++pass) {
        CategoricalRaster next = seed_map;
        std::vector<int> tally(static_cast<std::size_t>(k));
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                std::fill(tally.begin(), tally.end(), 0);
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int rr = r + dr, cc = c + dc;
                        if (!seed_map.in_bounds(rr, cc)) continue;
                        ++tally[static_cast<std::size_t>(seed_map.at(rr, cc) - 1)];
                    }
                int best = seed_map.at(r, c);
                for (int j = 0; j < k; ++j)
                    if (tally[static_cast<std::size_t>(j)] > tally[static_cast<std::size_t>(best - 1)]) best = j + 1;
                next.at(r, c) = best;
            }
        }
        seed_map = std::move(next);
    }

    // Constant categories are stamped as small blocks so the constant-code
    // pathway is exercised end to end.
    for (int code : spec.legend.constant_codes) {
        double share = shares[static_cast<std::size_t>(code - 1)];
        if (share <= 0.0) share = 0.01;
        const long want = std::lround(share * rows * cols);
        const int block = 3;
        long placed = 0;
        for (long attempt = 0; placed < want && attempt < 100 * want + 1000; ++attempt) {
            const int r0 = rng.int_range(0, rows - block);
            const int c0 = rng.int_range(0, cols - block);
            for (int r = r0; r < r0 + block; ++r)
                for (int c = c0; c < c0 + block; ++c) {
                    if (seed_map.at(r, c) != code) {
                        seed_map.at(r, c) = code;
                        ++placed;
                    }
                }
        }
    }

    // Nodata margin, applied to every layer.
    if (spec.nodata_margin > 0) {
        const int m = spec.nodata_margin;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                if (r < m || r >= rows - m || c < m || c >= cols - m) {
                    seed_map.at(r, c) = seed_map.nodata;
                    for (auto& f : bundle.factors) f.at(r, c) = std::numeric_limits<double>::quiet_NaN();
                }
    }

    bundle.snapshots.push_back(seed_map);

    // --- evolution ---
    const double beta = spec.contagion_strength;
    const int crad = spec.contagion_radius;
    std::vector<double> freq(static_cast<std::size_t>(k));
    for (std::size_t step = 1; step < spec.dates.size(); ++step) {
        const CategoricalRaster& prev = bundle.snapshots.back();
        CategoricalRaster next = prev;
        next.date = spec.dates[step];
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                if (!prev.valid(r, c)) continue;
                const int code = prev.at(r, c);
                if (spec.legend.is_constant(code)) continue;
                const std::size_t idx = prev.index(r, c);
                if (beta > 0.0 && crad > 0) {
                    // Ring-weighted like the feature extraction, so the
                    // contagion radius is the model-recoverable ground truth.
                    std::fill(freq.begin(), freq.end(), 0.0);
                    double wsum = 0.0;
                    for (int dr = -crad; dr <= crad; ++dr)
                        for (int dc = -crad; dc <= crad; ++dc) {
                            if (dr == 0 && dc == 0) continue;
                            const int rr = r + dr, cc = c + dc;
                            if (!prev.in_bounds(rr, cc) || !prev.valid(rr, cc)) continue;
                            const double wgt = 1.0 / std::max(std::abs(dr), std::abs(dc));
                            freq[static_cast<std::size_t>(prev.at(rr, cc) - 1)] += wgt;
                            wsum += wgt;
                        }
                    if (wsum > 0.0)
                        for (auto& x : freq) x /= wsum;
                }
                const auto& row = spec.transitions[static_cast<std::size_t>(code - 1)];
                for (int j = 0; j < k; ++j) {
                    double v = row[static_cast<std::size_t>(j)];
                    if (alpha > 0.0) v *= 1.0 - alpha + alpha * suitability(j + 1, idx);
                    if (beta > 0.0 && crad > 0) v *= 1.0 - beta + beta * freq[static_cast<std::size_t>(j)];
                    w[static_cast<std::size_t>(j)] = v;
                }
                const int pick = rng.weighted_index(w);
                if (pick >= 0) next.values[idx] = pick + 1; // zero total mass: cell keeps its code
            }
        }
        bundle.snapshots.push_back(std::move(next));
    }
    for (std::size_t i = 0; i < spec.dates.size(); ++i)
        bundle.snapshots[i].date = spec.dates[i];
    return bundle;
}

} // namespace prospect
