#pragma once

// Image-domain evaluation of nodal fields: rasterization onto a square grid,
// PSNR, SSIM, frequency band consistency, 2D spectra, and continuous
// piecewise-linear breakpoint fits.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "error.hpp"
#include "io.hpp"
#include "mesh.hpp"

namespace eit {

using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Point location

struct Location {
    int element = -1;
    std::array<double, 3> bary{};
};

/// Uniform-grid bucket index over element bounding boxes.
class PointLocator {
public:
    explicit PointLocator(const Mesh& mesh) : mesh_(&mesh) {
        const auto ne = mesh.element_count();
        if (ne == 0) throw TopologyError("locator: mesh has no elements");
        g_ = std::max(1, static_cast<int>(std::sqrt(ne / 2.0)));
        lo_ = {1e300, 1e300};
        Point hi{-1e300, -1e300};
        for (const auto& p : mesh.nodes())
            for (int d = 0; d < 2; ++d) {
                lo_[d] = std::min(lo_[d], p[d]);
                hi[d] = std::max(hi[d], p[d]);
            }
        for (int d = 0; d < 2; ++d) h_[d] = std::max(hi[d] - lo_[d], 1e-12) / g_;
        cells_.assign(static_cast<std::size_t>(g_) * g_, {});
        for (std::size_t e = 0; e < ne; ++e) {
            const auto& t = mesh.elements()[e];
            std::array<int, 2> a{g_, g_}, b{-1, -1};
            for (int k = 0; k < 3; ++k)
                for (int d = 0; d < 2; ++d) {
                    const int c = cell_coord(mesh.nodes()[t[k]][d], d);
                    a[d] = std::min(a[d], c);
                    b[d] = std::max(b[d], c);
                }
            for (int iy = a[1]; iy <= b[1]; ++iy)
                for (int ix = a[0]; ix <= b[0]; ++ix) cells_[static_cast<std::size_t>(iy) * g_ + ix].push_back(static_cast<int>(e));
        }
    }

    /// Barycentric coordinates of p in element e.
    std::array<double, 3> barycentric(int e, const Point& p) const {
        const auto& t = mesh_->elements()[e];
        const auto& n = mesh_->nodes();
        const double A = signed_area(n[t[0]], n[t[1]], n[t[2]]);
        const double l1 = signed_area(n[t[0]], p, n[t[2]]) / A;
        const double l2 = signed_area(n[t[0]], n[t[1]], p) / A;
        return {1.0 - l1 - l2, l1, l2};
    }

    /// Containing element, if any (small negative tolerance on the edges).
    std::optional<Location> locate(const Point& p) const {
        if (p[0] < lo_[0] - 1e-9 || p[1] < lo_[1] - 1e-9 || p[0] > lo_[0] + g_ * h_[0] + 1e-9 || p[1] > lo_[1] + g_ * h_[1] + 1e-9)
            return std::nullopt;
        const auto& cell = cells_[static_cast<std::size_t>(cell_coord(p[1], 1)) * g_ + cell_coord(p[0], 0)];
        std::optional<Location> best;
        double best_min = -1e-12;
        for (int e : cell) {
            const auto b = barycentric(e, p);
            const double m = std::min({b[0], b[1], b[2]});
            if (m >= best_min) {
                best_min = m;
                best = Location{e, b};
                if (m >= 0.0) break;
            }
        }
        return best;
    }

    /// Element closest to p, with the barycentric coordinates of the closest
    /// point of that element.
    Location nearest(const Point& p) const {
        const auto& n = mesh_->nodes();
        double best = std::numeric_limits<double>::infinity();
        Location loc;
        for (std::size_t e = 0; e < mesh_->element_count(); ++e) {
            const auto& t = mesh_->elements()[e];
            const Point q = closest_on_triangle(p, n[t[0]], n[t[1]], n[t[2]]);
            const double d = distance(p, q);
            if (d < best) {
                best = d;
                loc.element = static_cast<int>(e);
                loc.bary = barycentric(static_cast<int>(e), q);
            }
        }
        for (auto& b : loc.bary) b = std::clamp(b, 0.0, 1.0);
        return loc;
    }

    /// Interpolates nodal values; exact for constants.
    double interpolate(const Location& loc, const VectorXd& f) const {
        const auto& t = mesh_->elements()[loc.element];
        const double v0 = f[t[0]];
        return v0 + loc.bary[1] * (f[t[1]] - v0) + loc.bary[2] * (f[t[2]] - v0);
    }

    const Mesh& mesh() const { return *mesh_; }

private:
    int cell_coord(double v, int d) const {
        return std::clamp(static_cast<int>(std::floor((v - lo_[d]) / h_[d])), 0, g_ - 1);
    }

    static Point closest_on_segment(const Point& p, const Point& a, const Point& b) {
        const double dx = b[0] - a[0], dy = b[1] - a[1];
        const double t = std::clamp(((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / (dx * dx + dy * dy), 0.0, 1.0);
        return {a[0] + t * dx, a[1] + t * dy};
    }

    static Point closest_on_triangle(const Point& p, const Point& a, const Point& b, const Point& c) {
        if (signed_area(a, b, p) >= 0 && signed_area(b, c, p) >= 0 && signed_area(c, a, p) >= 0) return p;
        Point best = closest_on_segment(p, a, b);
        for (const auto& q : {closest_on_segment(p, b, c), closest_on_segment(p, c, a)})
            if (distance(p, q) < distance(p, best)) best = q;
        return best;
    }

    const Mesh* mesh_;
    int g_ = 1;
    Point lo_{}, h_{};
    std::vector<std::vector<int>> cells_;
};

/// Evaluates nodal values at arbitrary points; points outside the mesh use
/// the nearest element.
inline VectorXd interpolate_nodal(const Mesh& mesh, const VectorXd& f, const std::vector<Point>& pts, int* fallbacks = nullptr) {
    if (static_cast<std::size_t>(f.size()) != mesh.node_count()) throw DomainError("interpolate: field length differs from node count");
    const PointLocator loc(mesh);
    VectorXd out(static_cast<Eigen::Index>(pts.size()));
    int fb = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto l = loc.locate(pts[i]);
        if (!l) {
            l = loc.nearest(pts[i]);
            ++fb;
        }
        out[static_cast<Eigen::Index>(i)] = loc.interpolate(*l, f);
    }
    if (fallbacks) *fallbacks = fb;
    return out;
}

// ---------------------------------------------------------------------------
// Rasters

/// n x n grid over [-1, 1]^2, row 0 at the top (y = 1). Pixel (i, j) has
/// centre (-1 + (j + 0.5) h, 1 - (i + 0.5) h) with h = 2 / n.
struct RasterField {
    int n = 0;
    std::vector<double> values;
    std::vector<unsigned char> mask;
    int fallback_count = 0;
    std::string source;

    double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n + j]; }
    double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
    bool inside(int i, int j) const { return mask[static_cast<std::size_t>(i) * n + j] != 0; }
    int inside_count() const { return static_cast<int>(std::count(mask.begin(), mask.end(), 1)); }

    static Point pixel_center(int n, int i, int j) {
        const double h = 2.0 / n;
        return {-1.0 + (j + 0.5) * h, 1.0 - (i + 0.5) * h};
    }
};

inline std::vector<unsigned char> disk_mask(int n) {
    std::vector<unsigned char> m(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m[static_cast<std::size_t>(i) * n + j] = norm(RasterField::pixel_center(n, i, j)) <= 1.0;
    return m;
}

/// Sets every out-of-disk pixel to the in-disk mean.
inline void fill_outside(RasterField& r) {
    // Shifted by the first in-disk value so constant fields stay exact.
    double ref = 0, s = 0;
    int c = 0;
    for (std::size_t k = 0; k < r.values.size(); ++k)
        if (r.mask[k]) {
            if (c == 0) ref = r.values[k];
            s += r.values[k] - ref;
            ++c;
        }
    const double mean = c ? ref + s / c : 0.0;
    for (std::size_t k = 0; k < r.values.size(); ++k)
        if (!r.mask[k]) r.values[k] = mean;
}

inline RasterField rasterize(const Mesh& mesh, const VectorXd& sigma, int resolution = 128) {
    if (static_cast<std::size_t>(sigma.size()) != mesh.node_count()) throw DomainError("rasterize: sigma length differs from node count");
    if (resolution < 2) throw ConfigError("rasterize: resolution must be >= 2");
    RasterField r;
    r.n = resolution;
    r.mask = disk_mask(resolution);
    r.values.assign(r.mask.size(), 0.0);
    r.source = "mesh nodes=" + std::to_string(mesh.node_count()) + " elements=" + std::to_string(mesh.element_count());
    const PointLocator loc(mesh);
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j) {
            if (!r.inside(i, j)) continue;
            const Point p = RasterField::pixel_center(resolution, i, j);
            auto l = loc.locate(p);
            if (!l) {
                l = loc.nearest(p);
                ++r.fallback_count;
            }
            r.at(i, j) = loc.interpolate(*l, sigma);
        }
    fill_outside(r);
    return r;
}

/// Raster of an analytic field, same layout as rasterize().
template <class F>
RasterField rasterize_function(F&& f, int resolution = 128) {
    RasterField r;
    r.n = resolution;
    r.mask = disk_mask(resolution);
    r.values.assign(r.mask.size(), 0.0);
    r.source = "function";
    for (int i = 0; i < resolution; ++i)
        for (int j = 0; j < resolution; ++j)
            if (r.inside(i, j)) r.at(i, j) = f(RasterField::pixel_center(resolution, i, j));
    fill_outside(r);
    return r;
}

namespace detail {

inline void require_same_grid(const RasterField& a, const RasterField& b, const char* what) {
    if (a.n != b.n || a.values.size() != b.values.size()) throw DomainError(std::string(what) + ": raster sizes differ");
    if (a.mask != b.mask) throw DomainError(std::string(what) + ": raster masks differ");
}

// In-place 2D DFT of an n x n row-major array. The inverse is scaled by 1/n^2.
inline void fft2(std::vector<std::complex<double>>& data, int n, bool inverse) {
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(n), out(n);
    for (int pass = 0; pass < 2; ++pass) {
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) in[b] = pass == 0 ? data[static_cast<std::size_t>(a) * n + b] : data[static_cast<std::size_t>(b) * n + a];
            if (inverse)
                fft.inv(out, in);
            else
                fft.fwd(out, in);
            for (int b = 0; b < n; ++b) (pass == 0 ? data[static_cast<std::size_t>(a) * n + b] : data[static_cast<std::size_t>(b) * n + a]) = out[b];
        }
    }
}

inline int signed_freq(int k, int n) { return k < (n + 1) / 2 ? k : k - n; }

} // namespace detail

// ---------------------------------------------------------------------------
// PSNR / SSIM

inline constexpr double kPsnrCap = 99.0;

/// PSNR of b against the reference a; the peak is a's in-disk maximum.
inline double psnr(const RasterField& a, const RasterField& b) {
    detail::require_same_grid(a, b, "psnr");
    double peak = -std::numeric_limits<double>::infinity(), se = 0;
    int c = 0;
    for (std::size_t k = 0; k < a.values.size(); ++k) {
        if (!a.mask[k]) continue;
        peak = std::max(peak, a.values[k]);
        const double d = a.values[k] - b.values[k];
        se += d * d;
        ++c;
    }
    if (c == 0) throw DomainError("psnr: empty mask");
    const double mse = se / c;
    if (mse == 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / mse));
}

struct SsimResult {
    double ssim = 0;
    double luminance = 0;          // mean luminance term
    double contrast_structure = 0; // mean contrast-structure term
    int windows = 0;
};

/// Single-scale SSIM of b against the reference a. The dynamic range is a's
/// in-disk max - min (1 when a is constant).
inline SsimResult ssim_components(const RasterField& a, const RasterField& b) {
    detail::require_same_grid(a, b, "ssim");
    constexpr int R = 5;
    constexpr double sd = 1.5;
    double w[2 * R + 1][2 * R + 1], ws = 0;
    for (int di = -R; di <= R; ++di)
        for (int dj = -R; dj <= R; ++dj) ws += w[di + R][dj + R] = std::exp(-(di * di + dj * dj) / (2 * sd * sd));
    for (auto& row : w)
        for (auto& v : row) v /= ws;

    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t k = 0; k < a.values.size(); ++k)
        if (a.mask[k]) {
            lo = std::min(lo, a.values[k]);
            hi = std::max(hi, a.values[k]);
        }
    const double L = hi > lo ? hi - lo : 1.0;
    const double C1 = (0.01 * L) * (0.01 * L), C2 = (0.03 * L) * (0.03 * L);

    const int n = a.n;
    // Pixels whose whole window is in the mask.
    SsimResult res;
    double s_sum = 0, l_sum = 0, cs_sum = 0;
    for (int i = R; i < n - R; ++i)
        for (int j = R; j < n - R; ++j) {
            bool full = true;
            for (int di = -R; di <= R && full; ++di)
                for (int dj = -R; dj <= R; ++dj)
                    if (!a.inside(i + di, j + dj)) {
                        full = false;
                        break;
                    }
            if (!full) continue;
            double ma = 0, mb = 0;
            for (int di = -R; di <= R; ++di)
                for (int dj = -R; dj <= R; ++dj) {
                    ma += w[di + R][dj + R] * a.at(i + di, j + dj);
                    mb += w[di + R][dj + R] * b.at(i + di, j + dj);
                }
            double va = 0, vb = 0, cab = 0;
            for (int di = -R; di <= R; ++di)
                for (int dj = -R; dj <= R; ++dj) {
                    const double x = a.at(i + di, j + dj) - ma, y = b.at(i + di, j + dj) - mb, ww = w[di + R][dj + R];
                    va += ww * x * x;
                    vb += ww * y * y;
                    cab += ww * x * y;
                }
            const double l = (2.0 * ma * mb + C1) / (ma * ma + mb * mb + C1);
            const double cs = (2.0 * cab + C2) / (va + vb + C2);
            s_sum += l * cs;
            l_sum += l;
            cs_sum += cs;
            ++res.windows;
        }
    if (res.windows == 0) throw DomainError("ssim: mask too small for an 11x11 window");
    res.ssim = s_sum / res.windows;
    res.luminance = l_sum / res.windows;
    res.contrast_structure = cs_sum / res.windows;
    return res;
}

inline double ssim(const RasterField& a, const RasterField& b) { return ssim_components(a, b).ssim; }

// ---------------------------------------------------------------------------
// Frequency band consistency

struct FbcResult {
    std::vector<double> values;
    std::vector<bool> defined;
};

/// Band of a signed frequency pair: equal-width annuli up to Nyquist, with
/// everything beyond Nyquist (the corners) in the last band.
inline int fbc_band(int fx, int fy, int n, int n_bands) {
    const double r = std::hypot(static_cast<double>(fx), static_cast<double>(fy));
    const double width = (n / 2.0) / n_bands;
    if (r == 0.0) return 0;
    const int b = static_cast<int>(std::ceil(r / width)) - 1;
    return std::clamp(b, 0, n_bands - 1);
}

namespace detail {

inline std::vector<std::complex<double>> masked_centered_spectrum(const RasterField& f) {
    double s = 0;
    int c = 0;
    for (std::size_t k = 0; k < f.values.size(); ++k)
        if (f.mask[k]) {
            s += f.values[k];
            ++c;
        }
    const double mean = c ? s / c : 0.0;
    std::vector<std::complex<double>> d(f.values.size());
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = f.mask[k] ? f.values[k] - mean : 0.0;
    fft2(d, f.n, false);
    return d;
}

inline double masked_pearson(const std::vector<std::complex<double>>& x, const std::vector<std::complex<double>>& y, const std::vector<unsigned char>& mask,
                             double* var_y) {
    double mx = 0, my = 0;
    int c = 0;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (mask[k]) {
            mx += x[k].real();
            my += y[k].real();
            ++c;
        }
    mx /= c;
    my /= c;
    double sxx = 0, syy = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (mask[k]) {
            const double a = x[k].real() - mx, b = y[k].real() - my;
            sxx += a * a;
            syy += b * b;
            sxy += a * b;
        }
    *var_y = syy;
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

} // namespace detail

/// Per-band agreement of a reconstruction with the ground truth: Pearson
/// correlation over the disk of the band-limited inverse transforms of the
/// mean-removed masked fields. Bands where the ground truth carries no energy
/// are flagged undefined.
inline FbcResult fbc(const RasterField& recon, const RasterField& truth, int n_bands = 5) {
    detail::require_same_grid(recon, truth, "fbc");
    if (n_bands < 1) throw ConfigError("fbc: n_bands must be >= 1");
    const int n = truth.n;
    const auto A = detail::masked_centered_spectrum(recon);
    const auto B = detail::masked_centered_spectrum(truth);
    std::vector<double> band_energy(n_bands, 0.0);
    double total = 0;
    std::vector<int> band(A.size());
    for (int ky = 0; ky < n; ++ky)
        for (int kx = 0; kx < n; ++kx) {
            const std::size_t k = static_cast<std::size_t>(ky) * n + kx;
            band[k] = fbc_band(detail::signed_freq(kx, n), detail::signed_freq(ky, n), n, n_bands);
            band_energy[band[k]] += std::norm(B[k]);
            total += std::norm(B[k]);
        }
    FbcResult res;
    res.values.assign(n_bands, 0.0);
    res.defined.assign(n_bands, false);
    for (int q = 0; q < n_bands; ++q) {
        if (!(total > 0.0) || band_energy[q] <= 1e-20 * total) continue;
        std::vector<std::complex<double>> a(A.size()), b(B.size());
        for (std::size_t k = 0; k < A.size(); ++k)
            if (band[k] == q) {
                a[k] = A[k];
                b[k] = B[k];
            }
        detail::fft2(a, n, true);
        detail::fft2(b, n, true);
        double var_b = 0;
        const double r = detail::masked_pearson(a, b, truth.mask, &var_b);
        if (var_b <= 0.0) continue;
        res.values[q] = r;
        res.defined[q] = true;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Spectrum export

struct Spectrum {
    int n = 0;
    /// |F| with DC at (n/2, n/2); row index is ky + n/2, column kx + n/2.
    std::vector<double> magnitude;
    /// Mean |F| over annuli of integer radius round(|k|).
    std::vector<double> radial;
};

/// Unnormalised DFT of the full raster (out-of-disk fill included).
inline Spectrum spectrum_export(const RasterField& f) {
    const int n = f.n;
    std::vector<std::complex<double>> d(f.values.begin(), f.values.end());
    detail::fft2(d, n, false);
    Spectrum s;
    s.n = n;
    s.magnitude.assign(d.size(), 0.0);
    const int rmax = static_cast<int>(std::lround(std::hypot(n / 2.0, n / 2.0)));
    s.radial.assign(rmax + 1, 0.0);
    std::vector<int> count(rmax + 1, 0);
    for (int ky = 0; ky < n; ++ky)
        for (int kx = 0; kx < n; ++kx) {
            const int fx = detail::signed_freq(kx, n), fy = detail::signed_freq(ky, n);
            const int row = (fy + n / 2 + n) % n, col = (fx + n / 2 + n) % n;
            const double m = std::abs(d[static_cast<std::size_t>(ky) * n + kx]);
            s.magnitude[static_cast<std::size_t>(row) * n + col] = m;
            const int r = static_cast<int>(std::lround(std::hypot(static_cast<double>(fx), static_cast<double>(fy))));
            s.radial[r] += m;
            ++count[r];
        }
    for (int r = 0; r <= rmax; ++r)
        if (count[r]) s.radial[r] /= count[r];
    return s;
}

// ---------------------------------------------------------------------------
// Piecewise-linear fits

struct PiecewiseFit {
    int segments = 1;
    std::vector<double> breakpoints;
    std::vector<double> slopes;
    std::vector<double> intercepts;
    double rss = 0;

    double operator()(double x) const {
        std::size_t s = 0;
        while (s < breakpoints.size() && x > breakpoints[s]) ++s;
        return intercepts[s] + slopes[s] * x;
    }
};

namespace detail {

// Hinge basis 1, x, (x - t_k)+ fitted by least squares.
inline PiecewiseFit hinge_fit(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& knots) {
    const auto n = static_cast<Eigen::Index>(x.size());
    const auto p = static_cast<Eigen::Index>(2 + knots.size());
    Eigen::MatrixXd A(n, p);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        A(i, 0) = 1.0;
        A(i, 1) = x[i];
        for (std::size_t k = 0; k < knots.size(); ++k) A(i, 2 + k) = std::max(0.0, x[i] - knots[k]);
        b[i] = y[i];
    }
    const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
    PiecewiseFit f;
    f.segments = static_cast<int>(knots.size()) + 1;
    f.breakpoints = knots;
    f.rss = (A * c - b).squaredNorm();
    double slope = c[1], icpt = c[0];
    f.slopes.push_back(slope);
    f.intercepts.push_back(icpt);
    for (std::size_t k = 0; k < knots.size(); ++k) {
        slope += c[2 + k];
        icpt -= c[2 + k] * knots[k];
        f.slopes.push_back(slope);
        f.intercepts.push_back(icpt);
    }
    return f;
}

} // namespace detail

/// Continuous piecewise-linear least squares with 1-3 segments. Breakpoints
/// are searched exhaustively over interior data points; ties go to the
/// leftmost candidate.
inline PiecewiseFit piecewise_fit(const std::vector<double>& x, const std::vector<double>& y, int segments) {
    if (segments < 1 || segments > 3) throw ConfigError("piecewise_fit: segments must be 1, 2 or 3");
    if (x.size() != y.size()) throw DomainError("piecewise_fit: x and y lengths differ");
    if (x.size() < static_cast<std::size_t>(2 * segments + 1)) throw DomainError("piecewise_fit: too few points for " + std::to_string(segments) + " segments");
    for (std::size_t i = 1; i < x.size(); ++i)
        if (!(x[i] > x[i - 1])) throw DomainError("piecewise_fit: x must be strictly increasing");
    for (std::size_t i = 0; i < x.size(); ++i)
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw DomainError("piecewise_fit: non-finite data");

    if (segments == 1) return detail::hinge_fit(x, y, {});
    const std::size_t n = x.size();

    double ym = 0, tss = 0;
    for (double v : y) ym += v / n;
    for (double v : y) tss += (v - ym) * (v - ym);
    std::optional<PiecewiseFit> best;
    auto consider = [&](PiecewiseFit f) {
        if (!best || f.rss < best->rss - 1e-12 * (best->rss + tss)) best = std::move(f);
    };
    if (segments == 2) {
        for (std::size_t i = 1; i + 1 < n; ++i) consider(detail::hinge_fit(x, y, {x[i]}));
    } else {
        for (std::size_t i = 1; i + 1 < n; ++i)
            for (std::size_t j = i + 1; j + 1 < n; ++j) consider(detail::hinge_fit(x, y, {x[i], x[j]}));
    }
    return *best;
}

inline json piecewise_fit_to_json(const PiecewiseFit& f) {
    return json{{"segments", f.segments}, {"breakpoints", f.breakpoints}, {"slopes", f.slopes}, {"intercepts", f.intercepts}, {"rss", f.rss}};
}

// ---------------------------------------------------------------------------
// Report

/// {"psnr", "ssim", "fbc", "notes"}; undefined FBC bands are null.
inline json metrics_report(const RasterField& truth, const RasterField& recon, int n_bands = 5) {
    json j;
    j["psnr"] = psnr(truth, recon);
    j["ssim"] = ssim(truth, recon);
    const FbcResult f = fbc(recon, truth, n_bands);
    json bands = json::array();
    std::vector<std::string> notes;
    for (int q = 0; q < n_bands; ++q) {
        if (f.defined[q])
            bands.push_back(f.values[q]);
        else {
            bands.push_back(nullptr);
            notes.push_back("fbc band " + std::to_string(q) + " undefined: no ground-truth energy");
        }
    }
    j["fbc"] = bands;
    if (truth.fallback_count) notes.push_back("truth raster: " + std::to_string(truth.fallback_count) + " pixels used nearest-element fallback");
    if (recon.fallback_count) notes.push_back("recon raster: " + std::to_string(recon.fallback_count) + " pixels used nearest-element fallback");
    j["notes"] = notes;
    return j;
}

inline json raster_to_json(const RasterField& r) {
    return json{{"n", r.n}, {"values", r.values}, {"mask", r.mask}, {"fallback_count", r.fallback_count}, {"source", r.source}};
}

} // namespace eit
