// Per-pixel feature construction shared by the statistical predictors:
// disjunctive (one-hot) coding of the previous state, distance-weighted
// neighborhood category frequencies, standardized environmental covariates,
// and frontier-pixel selection. Feature dimension is always
// modelled_count + legend_size + n_env.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"

namespace prospect {

enum class DecayFamily { inverse, inverse_square, gaussian };

inline DecayFamily decay_from_string(const std::string& s) {
    if (s == "inverse") return DecayFamily::inverse;
    if (s == "inverse_square") return DecayFamily::inverse_square;
    if (s == "gaussian") return DecayFamily::gaussian;
    throw ConfigError("unknown weight decay '" + s + "'");
}

// Square window of given radius; neighbor influence decays with the
// Chebyshev ring distance d = 1..radius.
struct NeighborhoodSpec {
    int radius = 1;
    DecayFamily family = DecayFamily::inverse;
    double gaussian_sigma = 1.5;

    double weight(int ring) const {
        switch (family) {
        case DecayFamily::inverse: return 1.0 / ring;
        case DecayFamily::inverse_square: return 1.0 / (static_cast<double>(ring) * ring);
        case DecayFamily::gaussian: return std::exp(-0.5 * ring * ring / (gaussian_sigma * gaussian_sigma));
        }
        return 0.0;
    }

    void validate() const {
        if (radius < 1) throw ConfigError("neighborhood: radius must be >= 1");
        if (family == DecayFamily::gaussian && gaussian_sigma <= 0.0)
            throw ConfigError("neighborhood: gaussian sigma must be positive");
        if (radius > 1 && !(weight(1) > weight(radius)))
            throw ConfigError("neighborhood: weights must decrease from ring 1 to the outer ring");
    }
};

inline std::vector<double> disjunctive_encode(int code, int k) {
    if (code < 1 || code > k)
        throw DataError("disjunctive_encode: code " + std::to_string(code) + " outside 1.." + std::to_string(k));
    std::vector<double> v(static_cast<std::size_t>(k), 0.0);
    v[static_cast<std::size_t>(code - 1)] = 1.0;
    return v;
}

struct NeighborFrequencies {
    std::vector<double> freq;  // one entry per legend code
    bool has_neighbors = false;
};

// Weighted share of each category among the valid neighbors of (row,col).
// The center is excluded; out-of-bounds and nodata neighbors are skipped and
// the remaining weights renormalized. With no valid neighbor at all the
// vector is all zeros and has_neighbors is false.
inline NeighborFrequencies neighborhood_frequencies(const CategoricalRaster& map, int row, int col,
                                                    const NeighborhoodSpec& spec, int k) {
    if (!map.in_bounds(row, col)) throw DataError("neighborhood_frequencies: pixel out of bounds");
    NeighborFrequencies out;
    out.freq.assign(static_cast<std::size_t>(k), 0.0);
    double total = 0.0;
    for (int dr = -spec.radius; dr <= spec.radius; ++dr) {
        for (int dc = -spec.radius; dc <= spec.radius; ++dc) {
            if (dr == 0 && dc == 0) continue;
            const int r = row + dr, c = col + dc;
            if (!map.in_bounds(r, c) || !map.valid(r, c)) continue;
            const int ring = std::max(std::abs(dr), std::abs(dc));
            const double w = spec.weight(ring);
            out.freq[static_cast<std::size_t>(map.at(r, c) - 1)] += w;
            total += w;
        }
    }
    if (total > 0.0) {
        for (auto& f : out.freq) f /= total;
        out.has_neighbors = true;
    }
    return out;
}

// True where a valid pixel has at least one of its 8 adjacent cells holding
// a different valid code.
inline std::vector<std::uint8_t> frontier_pixels(const CategoricalRaster& map) {
    std::vector<std::uint8_t> mask(map.cell_count(), 0);
    for (int r = 0; r < map.rows; ++r) {
        for (int c = 0; c < map.cols; ++c) {
            if (!map.valid(r, c)) continue;
            const int code = map.at(r, c);
            bool frontier = false;
            for (int dr = -1; dr <= 1 && !frontier; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (!map.in_bounds(rr, cc) || !map.valid(rr, cc)) continue;
                    if (map.at(rr, cc) != code) {
                        frontier = true;
                        break;
                    }
                }
            mask[map.index(r, c)] = frontier ? 1 : 0;
        }
    }
    return mask;
}

struct Standardized {
    ContinuousRaster layer;
    double mean = 0.0;
    double sd = 0.0; // population standard deviation over valid cells
};

// Centers and scales a factor layer to mean 0, sd 1 over its valid cells.
// The (mean, sd) pair is retained so prediction-time inputs can be scaled
// identically.
inline Standardized standardize(const ContinuousRaster& layer) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : layer.values)
        if (!std::isnan(v)) {
            sum += v;
            ++n;
        }
    if (n < 2) throw DataError("standardize: layer '" + layer.name + "' has fewer than 2 valid cells");
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : layer.values)
        if (!std::isnan(v)) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd <= 0.0)
        throw DataError("standardize: layer '" + layer.name + "' is constant; exclude it from the model");
    Standardized out;
    out.layer = layer;
    out.mean = mean;
    out.sd = sd;
    for (auto& v : out.layer.values)
        if (!std::isnan(v)) v = (v - mean) / sd;
    return out;
}

// Splits an azimuth layer (degrees) into sine and cosine components so the
// 0/360 seam does not produce an artificial discontinuity.
inline std::pair<ContinuousRaster, ContinuousRaster> expand_azimuth(const ContinuousRaster& azimuth) {
    ContinuousRaster s(azimuth.rows, azimuth.cols, azimuth.cell_size, azimuth.name + "_sin");
    ContinuousRaster c(azimuth.rows, azimuth.cols, azimuth.cell_size, azimuth.name + "_cos");
    constexpr double deg = 3.14159265358979323846 / 180.0;
    for (std::size_t i = 0; i < azimuth.values.size(); ++i) {
        const double v = azimuth.values[i];
        if (std::isnan(v)) continue;
        s.values[i] = std::sin(v * deg);
        c.values[i] = std::cos(v * deg);
    }
    return {std::move(s), std::move(c)};
}

struct Dataset {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<double> x;            // row-major n x dim
    std::vector<int> target_code;     // legend code observed at the later date
    std::vector<std::size_t> pixel;   // row-major cell index in the source map
    std::vector<std::string> columns;

    std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }
};

// Builds identical feature rows at training and prediction time: the factor
// standardization parameters are frozen when the builder is created.
class FeatureBuilder {
public:
    FeatureBuilder(Legend legend, const std::vector<ContinuousRaster>& factors, NeighborhoodSpec spec)
        : legend_(std::move(legend)), spec_(spec), modelled_(legend_.modelled_codes()) {
        legend_.validate();
        spec_.validate();
        for (const auto& f : factors) {
            Standardized s = standardize(f);
            env_.push_back(std::move(s.layer));
            stats_.emplace_back(s.mean, s.sd);
        }
        columns_.clear();
        for (int code : modelled_) columns_.push_back("past_" + legend_.category(code).name);
        for (const auto& cat : legend_.categories) columns_.push_back("nbr_" + cat.name);
        for (const auto& e : env_) columns_.push_back(e.name);
        code_to_slot_.assign(static_cast<std::size_t>(legend_.size()) + 1, -1);
        for (std::size_t i = 0; i < modelled_.size(); ++i)
            code_to_slot_[static_cast<std::size_t>(modelled_[i])] = static_cast<int>(i);
    }

    std::size_t dim() const { return modelled_.size() + static_cast<std::size_t>(legend_.size()) + env_.size(); }
    const Legend& legend() const { return legend_; }
    const NeighborhoodSpec& neighborhood() const { return spec_; }
    const std::vector<int>& modelled_codes() const { return modelled_; }
    const std::vector<std::string>& columns() const { return columns_; }
    const std::vector<std::pair<double, double>>& factor_stats() const { return stats_; }

    // Fills `out[0..dim)` for a valid, non-constant pixel of `map`.
    void row(const CategoricalRaster& map, int r, int c, double* out) const {
        const int code = map.at(r, c);
        const int slot = code_to_slot_[static_cast<std::size_t>(code)];
        if (slot < 0) throw DataError("feature row requested for constant category code " + std::to_string(code));
        std::size_t j = 0;
        for (std::size_t i = 0; i < modelled_.size(); ++i) out[j++] = (static_cast<int>(i) == slot) ? 1.0 : 0.0;
        const auto nf = neighborhood_frequencies(map, r, c, spec_, legend_.size());
        for (int i = 0; i < legend_.size(); ++i) out[j++] = nf.freq[static_cast<std::size_t>(i)];
        for (const auto& e : env_) {
            const double v = e.at(r, c);
            out[j++] = std::isnan(v) ? 0.0 : v; // masked factor cell on a valid map cell: neutral value
        }
    }

private:
    Legend legend_;
    NeighborhoodSpec spec_;
    std::vector<int> modelled_;
    std::vector<ContinuousRaster> env_; // standardized copies
    std::vector<std::pair<double, double>> stats_;
    std::vector<std::string> columns_;
    std::vector<int> code_to_slot_;
};

// One row per selected pixel: features from map_t0, target from map_t1.
// Pixels are selected in row-major order; constant-code and nodata pixels
// are skipped, as are pixels whose target is a constant code. With
// frontier_only, only frontier pixels of map_t0 are kept.
inline Dataset assemble_dataset(const CategoricalRaster& map_t0, const CategoricalRaster& map_t1,
                                const FeatureBuilder& builder, bool frontier_only) {
    std::vector<GridShape> shapes = {shape_of(map_t0, "map_t0"), shape_of(map_t1, "map_t1")};
    align_check(shapes);
    if (map_t0.date >= map_t1.date) throw DataError("assemble_dataset: map_t0 must predate map_t1");
    const Legend& legend = builder.legend();
    const auto frontier = frontier_only ? frontier_pixels(map_t0) : std::vector<std::uint8_t>();

    Dataset ds;
    ds.dim = builder.dim();
    ds.columns = builder.columns();
    for (int r = 0; r < map_t0.rows; ++r) {
        for (int c = 0; c < map_t0.cols; ++c) {
            if (!map_t0.valid(r, c) || !map_t1.valid(r, c)) continue;
            const std::size_t idx = map_t0.index(r, c);
            if (frontier_only && !frontier[idx]) continue;
            if (legend.is_constant(map_t0.at(r, c)) || legend.is_constant(map_t1.at(r, c))) continue;
            ds.x.resize(ds.x.size() + ds.dim);
            builder.row(map_t0, r, c, ds.x.data() + ds.n * ds.dim);
            ds.target_code.push_back(map_t1.at(r, c));
            ds.pixel.push_back(idx);
            ++ds.n;
        }
    }
    if (ds.n == 0) throw DataError("assemble_dataset: no pixels selected (uniform map with frontier_only?)");
    return ds;
}

inline void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "pixel,target";
    for (const auto& c : ds.columns) out << ',' << c;
    out << '\n';
    for (std::size_t i = 0; i < ds.n; ++i) {
        out << ds.pixel[i] << ',' << ds.target_code[i];
        for (std::size_t j = 0; j < ds.dim; ++j) out << ',' << detail::format_double(ds.x[i * ds.dim + j]);
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace prospect
