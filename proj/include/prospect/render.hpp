// Deterministic raster rendering to binary PPM (P6): one pixel per cell or
// an integer upscale, with a legend strip of category swatches along the
// bottom edge. Byte-identical output for identical inputs.
#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "prospect/errors.hpp"
#include "prospect/grid.hpp"

namespace prospect {

struct Rgb {
    std::uint8_t r = 0, g = 0, b = 0;
};

inline Rgb parse_color(const std::string& hex) {
    if (hex.size() != 7 || hex[0] != '#') throw ConfigError("color must be '#rrggbb', got '" + hex + "'");
    auto nib = [&](char ch) -> int {
        if (ch >= '0' && ch <= '9') return ch - '0';
        if (ch >= 'a' && ch <= 'f') return ch - 'a' + 10;
        if (ch >= 'A' && ch <= 'F') return ch - 'A' + 10;
        throw ConfigError("invalid hex digit in color '" + hex + "'");
    };
    Rgb c;
    c.r = static_cast<std::uint8_t>(nib(hex[1]) * 16 + nib(hex[2]));
    c.g = static_cast<std::uint8_t>(nib(hex[3]) * 16 + nib(hex[4]));
    c.b = static_cast<std::uint8_t>(nib(hex[5]) * 16 + nib(hex[6]));
    return c;
}

inline const std::array<Rgb, 12>& default_palette() {
    static const std::array<Rgb, 12> p = {{{31, 119, 180},
                                           {255, 127, 14},
                                           {44, 160, 44},
                                           {214, 39, 40},
                                           {148, 103, 189},
                                           {140, 86, 75},
                                           {227, 119, 194},
                                           {127, 127, 127},
                                           {188, 189, 34},
                                           {23, 190, 207},
                                           {174, 199, 232},
                                           {255, 187, 120}}};
    return p;
}

// Colors per legend code; categories without a configured color fall back
// to the default palette and `used_default` is set.
inline std::vector<Rgb> legend_colors(const Legend& legend, bool* used_default = nullptr) {
    std::vector<Rgb> colors;
    bool fallback = false;
    for (const auto& cat : legend.categories) {
        if (cat.color.empty()) {
            colors.push_back(default_palette()[static_cast<std::size_t>(cat.code - 1) % default_palette().size()]);
            fallback = true;
        } else {
            colors.push_back(parse_color(cat.color));
        }
    }
    if (used_default) *used_default = fallback;
    return colors;
}

namespace detail {

class PpmImage {
public:
    PpmImage(int width, int height) : width_(width), height_(height), pixels_(static_cast<std::size_t>(width) * height * 3, 0) {}

    void set(int x, int y, Rgb c) {
        const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
        pixels_[i] = c.r;
        pixels_[i + 1] = c.g;
        pixels_[i + 2] = c.b;
    }

    void fill_rect(int x0, int y0, int w, int h, Rgb c) {
        for (int y = y0; y < y0 + h; ++y)
            for (int x = x0; x < x0 + w; ++x) set(x, y, c);
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot write " + path.string());
        out << "P6\n" << width_ << ' ' << height_ << "\n255\n";
        out.write(reinterpret_cast<const char*>(pixels_.data()), static_cast<std::streamsize>(pixels_.size()));
        if (!out) throw IoError("write failed: " + path.string());
    }

private:
    int width_, height_;
    std::vector<std::uint8_t> pixels_;
};

} // namespace detail

// Renders a categorical map with a legend strip of swatches. `colors` must
// hold one entry per code, 1-based. Nodata cells are near-black.
inline void render_map(const CategoricalRaster& map, const std::vector<Rgb>& colors,
                       const std::filesystem::path& path, int scale = 4) {
    if (scale < 1) throw ConfigError("render_map: scale must be >= 1");
    const int k = static_cast<int>(colors.size());
    const int strip = 6 * scale;
    const int gap = scale;
    detail::PpmImage img(map.cols * scale, map.rows * scale + gap + strip);
    const Rgb nodata_color{16, 16, 16};
    for (int r = 0; r < map.rows; ++r)
        for (int c = 0; c < map.cols; ++c) {
            Rgb color = nodata_color;
            if (map.valid(r, c)) {
                const int code = map.at(r, c);
                if (code < 1 || code > k) throw DataError("render_map: code " + std::to_string(code) + " has no color");
                color = colors[static_cast<std::size_t>(code - 1)];
            }
            img.fill_rect(c * scale, r * scale, scale, scale, color);
        }
    img.fill_rect(0, map.rows * scale, map.cols * scale, gap, Rgb{255, 255, 255});
    const int sw = map.cols * scale / k;
    for (int i = 0; i < k; ++i) {
        const int x0 = i * sw;
        const int w = (i == k - 1) ? map.cols * scale - x0 : sw;
        img.fill_rect(x0, map.rows * scale + gap, w, strip, colors[static_cast<std::size_t>(i)]);
    }
    img.save(path);
}

// Fixed palette for the 8 agreement classes (all three ... none).
inline std::vector<Rgb> agreement_palette() {
    return {{20, 90, 25},    // all three
            {120, 180, 60},  // A+B
            {160, 200, 90},  // A+C
            {200, 220, 120}, // B+C
            {250, 200, 80},  // A only
            {240, 150, 60},  // B only
            {230, 110, 50},  // C only
            {150, 40, 30}};  // none
}

} // namespace prospect
