#pragma once

// Portable raster images (PGM/PPM) and the CSV files written next to them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "io.hpp"
#include "metrics.hpp"

namespace eit {

struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<std::uint8_t> data;

    Image() = default;
    Image(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, 0) {}

    std::uint8_t* pixel(int row, int col) { return &data[(static_cast<std::size_t>(row) * width + col) * channels]; }
};

/// Binary P5 (one channel) or P6 (three channels).
inline std::string encode_pnm(const Image& img) {
    if (img.channels != 1 && img.channels != 3) throw ContractError("encode_pnm: need 1 or 3 channels");
    std::string out = (img.channels == 1 ? "P5\n" : "P6\n") + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    out.append(reinterpret_cast<const char*>(img.data.data()), img.data.size());
    return out;
}

inline void write_pnm(const std::filesystem::path& path, const Image& img) { io::write_atomic(path, encode_pnm(img)); }

/// Linear map of v over [lo, hi] to [0, 1], clamped. A flat range maps to 0.5.
inline double unit_scale(double v, double lo, double hi) {
    if (!(hi > lo)) return 0.5;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
}

/// Piecewise-linear blue-cyan-yellow-red ramp; t = 0 is dark blue.
inline std::array<std::uint8_t, 3> colormap(double t) {
    static constexpr std::array<std::array<double, 3>, 5> anchors{{{30, 40, 120}, {40, 150, 200}, {120, 200, 120}, {250, 210, 60}, {200, 40, 30}}};
    t = std::clamp(t, 0.0, 1.0) * (anchors.size() - 1);
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(t), anchors.size() - 2);
    const double f = t - static_cast<double>(k);
    std::array<std::uint8_t, 3> c{};
    for (int i = 0; i < 3; ++i) c[i] = static_cast<std::uint8_t>(std::lround(anchors[k][i] + f * (anchors[k + 1][i] - anchors[k][i])));
    return c;
}

inline std::uint8_t gray_level(double t) { return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(t, 0.0, 1.0))); }

/// Colour image of a raster over [lo, hi]; pixels outside the mask are white.
inline Image raster_image(const RasterField& r, double lo, double hi, bool color = true) {
    Image img(r.n, r.n, color ? 3 : 1);
    for (int i = 0; i < r.n; ++i)
        for (int j = 0; j < r.n; ++j) {
            std::uint8_t* p = img.pixel(i, j);
            if (!r.inside(i, j)) {
                std::fill(p, p + img.channels, std::uint8_t{255});
                continue;
            }
            const double t = unit_scale(r.at(i, j), lo, hi);
            if (color) {
                const auto c = colormap(t);
                std::copy(c.begin(), c.end(), p);
            } else {
                *p = gray_level(t);
            }
        }
    return img;
}

/// In-disk min and max of a raster.
inline std::array<double, 2> raster_range(const RasterField& r) {
    double lo = INFINITY, hi = -INFINITY;
    for (int i = 0; i < r.n; ++i)
        for (int j = 0; j < r.n; ++j)
            if (r.inside(i, j)) {
                lo = std::min(lo, r.at(i, j));
                hi = std::max(hi, r.at(i, j));
            }
    return {lo, hi};
}

inline std::string format_number(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}

/// Rows "row,col,x,y,inside,value" for every pixel.
inline std::string raster_csv(const RasterField& r) {
    std::string out = "row,col,x,y,inside,value\n";
    for (int i = 0; i < r.n; ++i)
        for (int j = 0; j < r.n; ++j) {
            const Point c = RasterField::pixel_center(r.n, i, j);
            out += std::to_string(i) + "," + std::to_string(j) + "," + format_number(c[0]) + "," + format_number(c[1]) + "," +
                   (r.inside(i, j) ? "1" : "0") + "," + format_number(r.at(i, j)) + "\n";
        }
    return out;
}

/// Writes `<stem>.ppm` (or .pgm) and `<stem>.csv` with the raster values.
inline void write_raster_figure(const std::filesystem::path& stem, const RasterField& r, double lo, double hi, bool color = true) {
    auto img = stem;
    img += color ? ".ppm" : ".pgm";
    auto csv = stem;
    csv += ".csv";
    write_pnm(img, raster_image(r, lo, hi, color));
    io::write_atomic(csv, raster_csv(r));
}

/// Log-magnitude spectrum as PGM plus the radial profile as CSV.
inline void write_spectrum_figure(const std::filesystem::path& stem, const Spectrum& s) {
    Image img(s.n, s.n, 1);
    double hi = 0;
    for (double v : s.magnitude) hi = std::max(hi, std::log1p(v));
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j) *img.pixel(i, j) = gray_level(hi > 0 ? std::log1p(s.magnitude[static_cast<std::size_t>(i) * s.n + j]) / hi : 0.0);
    auto pgm = stem;
    pgm += ".pgm";
    write_pnm(pgm, img);
    std::string csv = "radius,mean_magnitude\n";
    for (std::size_t k = 0; k < s.radial.size(); ++k) csv += std::to_string(k) + "," + format_number(s.radial[k]) + "\n";
    auto path = stem;
    path += ".csv";
    io::write_atomic(path, csv);
}

} // namespace eit
