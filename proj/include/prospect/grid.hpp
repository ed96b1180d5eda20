// Grid data model: land-cover legend, categorical and continuous rasters,
// and the plain-text grid format used for every map exchanged with the CLI.
//
// Format, fixed header token order, one data row per grid row:
//
//   ncols 4
//   nrows 2
//   cellsize 18
//   nodata_value -9999
//   date 1980          (categorical rasters only)
//   1 1 2 -9999
//   2 2 1 1
//
// Values round-trip exactly: doubles are written with shortest-form
// scientific/fixed notation (std::to_chars), so save followed by load is
// the identity on raster contents.
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prospect/errors.hpp"

namespace prospect {

struct LegendCategory {
    int code = 0;
    std::string name;
    int openness_rank = 0;
    std::string color; // "#rrggbb", optional
};

// Land-cover legend: codes must be contiguous from 1; the openness ranks of
// the modelled (non-constant) categories must form a permutation of
// 1..n_modelled. Constant codes (e.g. built-up) are carried through every
// model untouched.
struct Legend {
    std::vector<LegendCategory> categories; // sorted by code
    std::set<int> constant_codes;

    int size() const { return static_cast<int>(categories.size()); }

    bool is_constant(int code) const { return constant_codes.count(code) > 0; }

    const LegendCategory& category(int code) const {
        if (code < 1 || code > size()) throw DataError("legend: unknown code " + std::to_string(code));
        return categories[static_cast<std::size_t>(code - 1)];
    }

    std::vector<int> modelled_codes() const {
        std::vector<int> out;
        for (const auto& c : categories)
            if (!is_constant(c.code)) out.push_back(c.code);
        return out;
    }

    int modelled_count() const { return static_cast<int>(modelled_codes().size()); }

    void validate() const {
        if (categories.empty()) throw ConfigError("legend: no categories");
        for (int i = 0; i < size(); ++i) {
            if (categories[static_cast<std::size_t>(i)].code != i + 1)
                throw ConfigError("legend: codes must be contiguous from 1, got " +
                                  std::to_string(categories[static_cast<std::size_t>(i)].code) + " at position " +
                                  std::to_string(i + 1));
            // Names feed CSV columns and file names.
            const std::string& name = categories[static_cast<std::size_t>(i)].name;
            if (name.empty()) throw ConfigError("legend: category " + std::to_string(i + 1) + " has no name");
            for (char ch : name)
                if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
                    throw ConfigError("legend: category name '" + name + "' must be alphanumeric/underscore/dash");
        }
        for (int c : constant_codes)
            if (c < 1 || c > size()) throw ConfigError("legend: constant code " + std::to_string(c) + " not in legend");
        // Ranks of modelled categories form a permutation of 1..m.
        std::vector<int> ranks;
        for (const auto& cat : categories)
            if (!is_constant(cat.code)) ranks.push_back(cat.openness_rank);
        std::vector<int> sorted = ranks;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] != static_cast<int>(i) + 1)
                throw ConfigError("legend: openness ranks of modelled categories must be a permutation of 1.." +
                                  std::to_string(sorted.size()));
        }
    }
};

// The default eight-category legend used by the synthetic scenarios:
// closed formations first, built-up last and excluded from modelling.
inline Legend default_legend() {
    Legend l;
    l.categories = {
        {1, "conifer_forest", 1, "#2a6b2a"},
        {2, "deciduous_forest", 2, "#67a942"},
        {3, "scrub", 3, "#a8b84a"},
        {4, "broom_heath", 4, "#d9c35b"},
        {5, "grass_heath", 5, "#ecdf9a"},
        {6, "meadow", 6, "#b6e08a"},
        {7, "cultures", 7, "#e78a3c"},
        {8, "built_up", 8, "#8a8a8a"},
    };
    l.constant_codes = {8};
    l.validate();
    return l;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& tok, const std::string& where) {
    double v = 0.0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw DataError(where + ": expected a number, got '" + tok + "'");
    return v;
}

inline long parse_long(const std::string& tok, const std::string& where) {
    long v = 0;
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
        throw DataError(where + ": expected an integer, got '" + tok + "'");
    return v;
}

} // namespace detail

// Dated grid of land-cover codes. Nodata cells hold `nodata`, every other
// cell a legend code.
struct CategoricalRaster {
    int rows = 0;
    int cols = 0;
    double cell_size = 1.0;
    int date = 0;
    int nodata = -9999;
    std::vector<int> values; // row-major, rows*cols

    CategoricalRaster() = default;
    CategoricalRaster(int r, int c, double cell, int date_, int fill = -9999)
        : rows(r), cols(c), cell_size(cell), date(date_), values(static_cast<std::size_t>(r) * c, fill) {
        if (r <= 0 || c <= 0) throw DataError("raster: dimensions must be positive");
    }

    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
    int at(int r, int c) const { return values[index(r, c)]; }
    int& at(int r, int c) { return values[index(r, c)]; }
    bool valid(int r, int c) const { return at(r, c) != nodata; }
    bool valid_index(std::size_t i) const { return values[i] != nodata; }
    std::size_t cell_count() const { return values.size(); }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (int v : values)
            if (v != nodata) ++n;
        return n;
    }

    // Pixel tally per category code 1..k.
    std::vector<long> category_counts(int k) const {
        std::vector<long> counts(static_cast<std::size_t>(k), 0);
        for (int v : values) {
            if (v == nodata) continue;
            if (v < 1 || v > k) throw DataError("raster: code " + std::to_string(v) + " outside legend of size " + std::to_string(k));
            ++counts[static_cast<std::size_t>(v - 1)];
        }
        return counts;
    }
};

// One environmental factor layer, grid-aligned with its companion maps.
// Nodata cells hold NaN in memory and `nodata` in files.
struct ContinuousRaster {
    int rows = 0;
    int cols = 0;
    double cell_size = 1.0;
    std::string name;
    double nodata = -9999.0;
    std::vector<double> values;

    ContinuousRaster() = default;
    ContinuousRaster(int r, int c, double cell, std::string name_ = "")
        : rows(r), cols(c), cell_size(cell), name(std::move(name_)),
          values(static_cast<std::size_t>(r) * c, std::numeric_limits<double>::quiet_NaN()) {
        if (r <= 0 || c <= 0) throw DataError("raster: dimensions must be positive");
    }

    std::size_t index(int r, int c) const { return static_cast<std::size_t>(r) * cols + c; }
    bool in_bounds(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
    double at(int r, int c) const { return values[index(r, c)]; }
    double& at(int r, int c) { return values[index(r, c)]; }
    bool valid(int r, int c) const { return !std::isnan(at(r, c)); }
    bool valid_index(std::size_t i) const { return !std::isnan(values[i]); }
};

// Shape descriptor used by alignment checks.
struct GridShape {
    int rows;
    int cols;
    double cell_size;
    std::string label;
};

inline GridShape shape_of(const CategoricalRaster& r, std::string label = "categorical") {
    return {r.rows, r.cols, r.cell_size, std::move(label)};
}
inline GridShape shape_of(const ContinuousRaster& r) {
    return {r.rows, r.cols, r.cell_size, r.name.empty() ? "continuous" : r.name};
}

// All layers entering a model must share rows, cols and cell size; a
// mismatch is rejected, never cropped.
inline void align_check(const std::vector<GridShape>& layers) {
    if (layers.empty()) throw DataError("align_check: no layers");
    const GridShape& ref = layers.front();
    for (std::size_t i = 1; i < layers.size(); ++i) {
        const GridShape& s = layers[i];
        if (s.rows != ref.rows)
            throw DataError("align_check: layer '" + s.label + "' rows " + std::to_string(s.rows) +
                            " != " + std::to_string(ref.rows) + " of '" + ref.label + "'");
        if (s.cols != ref.cols)
            throw DataError("align_check: layer '" + s.label + "' cols " + std::to_string(s.cols) +
                            " != " + std::to_string(ref.cols) + " of '" + ref.label + "'");
        if (s.cell_size != ref.cell_size)
            throw DataError("align_check: layer '" + s.label + "' cellsize " + detail::format_double(s.cell_size) +
                            " != " + detail::format_double(ref.cell_size) + " of '" + ref.label + "'");
    }
}

namespace detail {

struct GridHeader {
    int ncols = 0;
    int nrows = 0;
    double cellsize = 0.0;
    std::string nodata_token;
    std::optional<int> date;
};

inline void expect_key(std::istream& in, const std::string& key, std::string& value, const std::string& path) {
    std::string k;
    if (!(in >> k >> value)) throw DataError(path + ": truncated header, expected '" + key + "'");
    if (k != key) throw DataError(path + ": malformed header, expected '" + key + "' got '" + k + "'");
}

inline GridHeader read_header(std::istream& in, const std::string& path) {
    GridHeader h;
    std::string v;
    expect_key(in, "ncols", v, path);
    h.ncols = static_cast<int>(parse_long(v, path + ": ncols"));
    expect_key(in, "nrows", v, path);
    h.nrows = static_cast<int>(parse_long(v, path + ": nrows"));
    expect_key(in, "cellsize", v, path);
    h.cellsize = parse_double(v, path + ": cellsize");
    expect_key(in, "nodata_value", v, path);
    h.nodata_token = v;
    if (h.ncols <= 0 || h.nrows <= 0) throw DataError(path + ": grid dimensions must be positive");
    // Optional date line; data rows start with a numeric token.
    std::streampos mark = in.tellg();
    std::string k;
    if (in >> k) {
        if (k == "date") {
            if (!(in >> v)) throw DataError(path + ": truncated date line");
            h.date = static_cast<int>(parse_long(v, path + ": date"));
        } else {
            in.clear();
            in.seekg(mark);
        }
    }
    // Skip to end of current line so data parsing is line-oriented.
    std::string rest;
    std::getline(in, rest);
    return h;
}

// Reads exactly nrows data lines of ncols tokens each; blank lines are not
// allowed between rows, so ragged input is reported at the offending cell.
template <typename CellFn>
inline void read_cells(std::istream& in, const GridHeader& h, const std::string& path, CellFn&& cell) {
    std::string line;
    for (int r = 0; r < h.nrows; ++r) {
        if (!std::getline(in, line)) throw DataError(path + ": missing data row " + std::to_string(r + 1));
        std::istringstream ls(line);
        std::string tok;
        for (int c = 0; c < h.ncols; ++c) {
            if (!(ls >> tok))
                throw DataError(path + ": row " + std::to_string(r + 1) + " has " + std::to_string(c) +
                                " values, expected " + std::to_string(h.ncols));
            cell(r, c, tok);
        }
        if (ls >> tok)
            throw DataError(path + ": row " + std::to_string(r + 1) + " has more than " +
                            std::to_string(h.ncols) + " values");
    }
}

} // namespace detail

inline CategoricalRaster load_categorical(const std::filesystem::path& path, const Legend* legend = nullptr) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string p = path.string();
    auto h = detail::read_header(in, p);
    CategoricalRaster out(h.nrows, h.ncols, h.cellsize, h.date.value_or(0));
    out.nodata = static_cast<int>(detail::parse_long(h.nodata_token, p + ": nodata_value"));
    detail::read_cells(in, h, p, [&](int r, int c, const std::string& tok) {
        const int v = static_cast<int>(detail::parse_long(tok, p + ": row " + std::to_string(r + 1) + " col " + std::to_string(c + 1)));
        if (v != out.nodata && legend && (v < 1 || v > legend->size()))
            throw DataError(p + ": row " + std::to_string(r + 1) + " col " + std::to_string(c + 1) +
                            ": code " + std::to_string(v) + " not in legend");
        out.at(r, c) = v;
    });
    return out;
}

inline ContinuousRaster load_continuous(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    const std::string p = path.string();
    auto h = detail::read_header(in, p);
    ContinuousRaster out(h.nrows, h.ncols, h.cellsize, path.stem().string());
    out.nodata = detail::parse_double(h.nodata_token, p + ": nodata_value");
    detail::read_cells(in, h, p, [&](int r, int c, const std::string& tok) {
        const double v = detail::parse_double(tok, p + ": row " + std::to_string(r + 1) + " col " + std::to_string(c + 1));
        out.at(r, c) = (v == out.nodata) ? std::numeric_limits<double>::quiet_NaN() : v;
    });
    return out;
}

inline void save_grid(const CategoricalRaster& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "ncols " << g.cols << "\n"
        << "nrows " << g.rows << "\n"
        << "cellsize " << detail::format_double(g.cell_size) << "\n"
        << "nodata_value " << g.nodata << "\n"
        << "date " << g.date << "\n";
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (c) out << ' ';
            out << g.at(r, c);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

inline void save_grid(const ContinuousRaster& g, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "ncols " << g.cols << "\n"
        << "nrows " << g.rows << "\n"
        << "cellsize " << detail::format_double(g.cell_size) << "\n"
        << "nodata_value " << detail::format_double(g.nodata) << "\n";
    for (int r = 0; r < g.rows; ++r) {
        for (int c = 0; c < g.cols; ++c) {
            if (c) out << ' ';
            const double v = g.at(r, c);
            out << detail::format_double(std::isnan(v) ? g.nodata : v);
        }
        out << '\n';
    }
    if (!out) throw IoError("write failed: " + path.string());
}

} // namespace prospect
