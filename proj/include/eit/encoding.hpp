#pragma once

// Coordinate encoders for neural conductivity fields: Fourier feature banks,
// mipmap feature pyramids, multiresolution hash grids and a shared global
// feature, combined by FieldEncoder with exact gradients for the tables.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "io.hpp"
#include "mesh.hpp"
#include "rng.hpp"

namespace eit {

using Eigen::MatrixXd;

/// b = exp((ln n_max - ln n_min) / (levels - 1)).
inline double growth_factor(int n_min, int n_max, int levels) {
    if (levels < 2) return 1.0;
    return std::exp((std::log(static_cast<double>(n_max)) - std::log(static_cast<double>(n_min))) / (levels - 1));
}

inline int level_resolution(int n_min, double b, int l) {
    return static_cast<int>(std::lround(n_min * std::pow(b, l)));
}

/// One weighted read of a feature vector: `channels` consecutive table entries
/// starting at `feature` are scaled and added to the output starting at
/// `output`.
struct Tap {
    std::uint32_t feature;
    std::uint32_t output;
    double weight;
};

namespace detail {

struct Bilinear {
    int ix, iy;
    double w[4]; // (ix,iy), (ix+1,iy), (ix,iy+1), (ix+1,iy+1)
};

/// Cell and weights on a vertex-aligned grid with `res` vertices per side
/// spanning [-1,1]. Coordinates outside the square are clamped onto it.
inline Bilinear bilinear(const Point& x, int res) {
    Bilinear b;
    const int cells = res - 1;
    double f[2];
    int i[2];
    for (int d = 0; d < 2; ++d) {
        double u = (std::clamp(x[d], -1.0, 1.0) + 1.0) * 0.5 * cells;
        // Snap rounding noise so reads at grid vertices are exact.
        if (const double r = std::round(u); std::abs(u - r) < 1e-12 * cells) u = r;
        i[d] = std::clamp(static_cast<int>(std::floor(u)), 0, cells - 1);
        f[d] = u - i[d];
    }
    b.ix = i[0];
    b.iy = i[1];
    b.w[0] = (1.0 - f[0]) * (1.0 - f[1]);
    b.w[1] = f[0] * (1.0 - f[1]);
    b.w[2] = (1.0 - f[0]) * f[1];
    b.w[3] = f[0] * f[1];
    return b;
}

inline void apply_taps(const Tap* begin, const Tap* end, const double* table, int channels, double* out) {
    for (const Tap* t = begin; t != end; ++t) {
        const double* src = table + t->feature;
        double* dst = out + t->output;
        for (int c = 0; c < channels; ++c) dst[c] += t->weight * src[c];
    }
}

inline void scatter_taps(const Tap* begin, const Tap* end, const double* upstream, int channels, double* grad) {
    for (const Tap* t = begin; t != end; ++t) {
        const double* src = upstream + t->output;
        double* dst = grad + t->feature;
        for (int c = 0; c < channels; ++c) dst[c] += t->weight * src[c];
    }
}

inline void init_uniform(std::vector<double>& v, Rng& rng, double half_width) {
    for (auto& x : v) x = rng.uniform(-half_width, half_width);
}

} // namespace detail

// ---------------------------------------------------------------- Fourier

struct FourierConfig {
    int num_frequencies = 16;
    int levels = 16;
    double s0 = 2.0;
    double eta = 1.15;

    void validate() const {
        if (num_frequencies < 1) throw ConfigError("fourier: num_frequencies must be >= 1");
        if (levels < 1) throw ConfigError("fourier: levels must be >= 1");
        if (!(s0 > 0.0) || !(eta > 0.0)) throw ConfigError("fourier: s0 and eta must be positive");
    }
};

/// Per-level Gaussian frequency matrices B_l (F x 2) with std s0 * eta^l.
/// Features are [sin(2 pi B_l x), cos(2 pi B_l x)] at the nearest integer level.
class FourierBank {
public:
    FourierBank(const FourierConfig& cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
        cfg_.validate();
        B_.assign(cfg_.levels, std::vector<double>(2 * cfg_.num_frequencies));
        resample(cfg_.s0);
    }

    int dim() const { return 2 * cfg_.num_frequencies; }
    int levels() const { return cfg_.levels; }
    int num_frequencies() const { return cfg_.num_frequencies; }
    double s0() const { return cfg_.s0; }
    double eta() const { return cfg_.eta; }
    double level_std(int l) const { return cfg_.s0 * std::pow(cfg_.eta, l); }
    const FourierConfig& config() const { return cfg_; }

    /// Row-major F x 2 frequency matrix of level l.
    const std::vector<double>& frequencies(int l) const { return B_.at(l); }

    int level_index(double level) const {
        return static_cast<int>(std::lround(std::clamp(level, 0.0, static_cast<double>(cfg_.levels - 1))));
    }

    /// Sets the base bandwidth and redraws every level from the bank's stream.
    void resample(double s0) {
        if (!(s0 > 0.0)) throw ConfigError("fourier: s0 must be positive");
        cfg_.s0 = s0;
        for (int l = 0; l < cfg_.levels; ++l) {
            const double s = level_std(l);
            for (auto& b : B_[l]) b = s * rng_.normal();
        }
        ++generation_;
    }

    /// Incremented on every resample; lets callers cache features.
    std::uint64_t generation() const { return generation_; }

    void encode(const Point& x, double level, double* out) const {
        const auto& B = B_[level_index(level)];
        const int F = cfg_.num_frequencies;
        for (int k = 0; k < F; ++k) {
            const double a = 2.0 * std::numbers::pi * (B[2 * k] * x[0] + B[2 * k + 1] * x[1]);
            out[k] = std::sin(a);
            out[F + k] = std::cos(a);
        }
    }

    const Rng& rng() const { return rng_; }

    void save(io::BinaryWriter& w) const {
        w.put_f64(cfg_.s0);
        w.put_string(rng_.state());
        w.put_u64(generation_);
        for (const auto& b : B_) w.put_doubles(b);
    }

    void load(io::BinaryReader& r) {
        cfg_.s0 = r.get_f64();
        rng_.set_state(r.get_string());
        generation_ = r.get_u64();
        for (auto& b : B_) r.get_doubles_into(b, "fourier bank");
    }

private:
    FourierConfig cfg_;
    Rng rng_;
    std::vector<std::vector<double>> B_;
    std::uint64_t generation_ = 0;
};

// ---------------------------------------------------------------- Mipmap

struct MipMapConfig {
    int levels = 16;
    int channels = 32;
    int n_min = 4;
    int n_max = 64;
    double init_scale = 1e-4;

    void validate() const {
        if (levels < 1 || channels < 1) throw ConfigError("mipmap: levels and channels must be >= 1");
        if (n_min < 2 || n_max < n_min) throw ConfigError("mipmap: need 2 <= n_min <= n_max");
        if (!(init_scale >= 0.0)) throw ConfigError("mipmap: init_scale must be >= 0");
    }
};

/// L feature grids over [-1,1]^2 with H_l = round(n_min * b^l) vertices per
/// side. Features of level l are stored vertex-major: (iy * H_l + ix) * C + c.
class MipMapPyramid {
public:
    explicit MipMapPyramid(const MipMapConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        b_ = growth_factor(cfg_.n_min, cfg_.n_max, cfg_.levels);
        std::size_t off = 0;
        for (int l = 0; l < cfg_.levels; ++l) {
            const int h = level_resolution(cfg_.n_min, b_, l);
            res_.push_back(h);
            offset_.push_back(off);
            off += static_cast<std::size_t>(h) * h * cfg_.channels;
        }
        features_.assign(off, 0.0);
    }

    int levels() const { return cfg_.levels; }
    int channels() const { return cfg_.channels; }
    int dim() const { return cfg_.channels; }
    double growth() const { return b_; }
    int resolution(int l) const { return res_.at(l); }
    std::size_t offset(int l) const { return offset_.at(l); }
    const MipMapConfig& config() const { return cfg_; }

    std::vector<double>& features() { return features_; }
    const std::vector<double>& features() const { return features_; }

    std::size_t vertex_index(int l, int ix, int iy) const {
        return offset_[l] + (static_cast<std::size_t>(iy) * res_[l] + ix) * cfg_.channels;
    }

    /// Taps of the bilinear read of level l scaled by `scale`.
    void level_taps(const Point& x, int l, double scale, std::uint32_t out, std::vector<Tap>& taps) const {
        const auto b = detail::bilinear(x, res_[l]);
        const int dx[4] = {0, 1, 0, 1}, dy[4] = {0, 0, 1, 1};
        for (int k = 0; k < 4; ++k)
            taps.push_back({static_cast<std::uint32_t>(vertex_index(l, b.ix + dx[k], b.iy + dy[k])), out, scale * b.w[k]});
    }

    /// Level blend: (ceil l - l) interp(M_floor) + (l - floor l) interp(M_ceil);
    /// an integer level reads that level alone.
    void taps(const Point& x, double level, std::uint32_t out, std::vector<Tap>& taps) const {
        const double l = std::clamp(level, 0.0, static_cast<double>(cfg_.levels - 1));
        const int lf = static_cast<int>(std::floor(l));
        const double t = l - lf;
        if (t == 0.0) {
            level_taps(x, lf, 1.0, out, taps);
        } else {
            level_taps(x, lf, 1.0 - t, out, taps);
            level_taps(x, lf + 1, t, out, taps);
        }
    }

    void interp(const Point& x, int l, double* out) const {
        std::vector<Tap> t;
        std::fill(out, out + cfg_.channels, 0.0);
        level_taps(x, l, 1.0, 0, t);
        detail::apply_taps(t.data(), t.data() + t.size(), features_.data(), cfg_.channels, out);
    }

    void encode(const Point& x, double level, double* out) const {
        std::vector<Tap> t;
        std::fill(out, out + cfg_.channels, 0.0);
        taps(x, level, 0, t);
        detail::apply_taps(t.data(), t.data() + t.size(), features_.data(), cfg_.channels, out);
    }

private:
    MipMapConfig cfg_;
    double b_ = 1.0;
    std::vector<int> res_;
    std::vector<std::size_t> offset_;
    std::vector<double> features_;
};

// ---------------------------------------------------------------- Hash grid

struct HashConfig {
    int levels = 32;
    int log2_table = 17;
    int channels = 2;
    int n_min = 16;
    int n_max = 512;
    double init_scale = 1e-4;

    void validate() const {
        if (levels < 1 || channels < 1) throw ConfigError("hash: levels and channels must be >= 1");
        if (log2_table < 4 || log2_table > 24) throw ConfigError("hash: log2_table must lie in [4, 24]");
        if (n_min < 2 || n_max < n_min) throw ConfigError("hash: need 2 <= n_min <= n_max");
        if (!(init_scale >= 0.0)) throw ConfigError("hash: init_scale must be >= 0");
    }
};

inline constexpr std::uint32_t kHashPrimes[2] = {1u, 2654435761u};

/// Multiresolution hash grid: per level a table of T entries of C channels,
/// indexed by (ix * p0 XOR iy * p1) mod T. Output is the per-level bilinear
/// reads concatenated.
class HashGrid {
public:
    explicit HashGrid(const HashConfig& cfg) : cfg_(cfg) {
        cfg_.validate();
        b_ = growth_factor(cfg_.n_min, cfg_.n_max, cfg_.levels);
        for (int l = 0; l < cfg_.levels; ++l) res_.push_back(level_resolution(cfg_.n_min, b_, l));
        features_.assign(static_cast<std::size_t>(cfg_.levels) * table_size() * cfg_.channels, 0.0);
    }

    int levels() const { return cfg_.levels; }
    int channels() const { return cfg_.channels; }
    int dim() const { return cfg_.levels * cfg_.channels; }
    std::uint32_t table_size() const { return 1u << cfg_.log2_table; }
    int resolution(int l) const { return res_.at(l); }
    const HashConfig& config() const { return cfg_; }

    std::vector<double>& features() { return features_; }
    const std::vector<double>& features() const { return features_; }

    std::uint32_t hash(int ix, int iy) const {
        const std::uint32_t h = (static_cast<std::uint32_t>(ix) * kHashPrimes[0]) ^ (static_cast<std::uint32_t>(iy) * kHashPrimes[1]);
        return h & (table_size() - 1);
    }

    void taps(const Point& x, std::uint32_t out, std::vector<Tap>& taps) const {
        const int dx[4] = {0, 1, 0, 1}, dy[4] = {0, 0, 1, 1};
        for (int l = 0; l < cfg_.levels; ++l) {
            const auto b = detail::bilinear(x, res_[l]);
            const std::size_t base = static_cast<std::size_t>(l) * table_size();
            for (int k = 0; k < 4; ++k) {
                const std::size_t entry = base + hash(b.ix + dx[k], b.iy + dy[k]);
                taps.push_back({static_cast<std::uint32_t>(entry * cfg_.channels),
                                static_cast<std::uint32_t>(out + l * cfg_.channels), b.w[k]});
            }
        }
    }

    void encode(const Point& x, double* out) const {
        std::vector<Tap> t;
        std::fill(out, out + dim(), 0.0);
        taps(x, 0, t);
        detail::apply_taps(t.data(), t.data() + t.size(), features_.data(), cfg_.channels, out);
    }

private:
    HashConfig cfg_;
    double b_ = 1.0;
    std::vector<int> res_;
    std::vector<double> features_;
};

// ---------------------------------------------------------------- Field encoder

struct EncoderConfig {
    std::optional<FourierConfig> fourier;
    std::optional<MipMapConfig> mipmap;
    std::optional<HashConfig> hash;
    int global_dim = 0;
    double global_init_scale = 1e-4;

    void validate() const {
        if (fourier) fourier->validate();
        if (mipmap) mipmap->validate();
        if (hash) hash->validate();
        if (global_dim < 0) throw ConfigError("encoder: global_dim must be >= 0");
        if (!fourier && !mipmap && !hash && global_dim == 0) throw ConfigError("encoder: no components enabled");
    }

    /// Fourier bank + mipmap pyramid + global feature, all indexed by level.
    static EncoderConfig phync() {
        EncoderConfig c;
        c.fourier = FourierConfig{};
        c.mipmap = MipMapConfig{};
        c.global_dim = 16;
        return c;
    }
    /// Single-level Fourier features.
    static EncoderConfig ffp() {
        EncoderConfig c;
        c.fourier = FourierConfig{16, 1, 2.0, 1.15};
        return c;
    }
    static EncoderConfig hash_grid() {
        EncoderConfig c;
        c.hash = HashConfig{};
        return c;
    }
    /// Single-level Fourier features (16 dims) + hash grid.
    static EncoderConfig hybhash() {
        EncoderConfig c;
        c.fourier = FourierConfig{8, 1, 2.0, 1.15};
        c.hash = HashConfig{};
        return c;
    }
};

inline json encoder_config_to_json(const EncoderConfig& c) {
    json j;
    j["fourier"] = c.fourier ? json{{"num_frequencies", c.fourier->num_frequencies},
                                    {"levels", c.fourier->levels},
                                    {"s0", c.fourier->s0},
                                    {"eta", c.fourier->eta}}
                             : json(nullptr);
    j["mipmap"] = c.mipmap ? json{{"levels", c.mipmap->levels},
                                  {"channels", c.mipmap->channels},
                                  {"n_min", c.mipmap->n_min},
                                  {"n_max", c.mipmap->n_max},
                                  {"init_scale", c.mipmap->init_scale}}
                           : json(nullptr);
    j["hash"] = c.hash ? json{{"levels", c.hash->levels},
                              {"log2_table", c.hash->log2_table},
                              {"channels", c.hash->channels},
                              {"n_min", c.hash->n_min},
                              {"n_max", c.hash->n_max},
                              {"init_scale", c.hash->init_scale}}
                       : json(nullptr);
    j["global_dim"] = c.global_dim;
    j["global_init_scale"] = c.global_init_scale;
    return j;
}

/// Reads a config, filling missing keys from `base`.
inline EncoderConfig encoder_config_from_json(const json& j, EncoderConfig base = {}) {
    try {
        auto section = [&](const char* key, auto& opt, auto fill) {
            if (!j.contains(key)) return;
            if (j.at(key).is_null()) {
                opt.reset();
                return;
            }
            auto v = opt.value_or(typename std::decay_t<decltype(opt)>::value_type{});
            fill(j.at(key), v);
            opt = v;
        };
        section("fourier", base.fourier, [](const json& s, FourierConfig& f) {
            f.num_frequencies = s.value("num_frequencies", f.num_frequencies);
            f.levels = s.value("levels", f.levels);
            f.s0 = s.value("s0", f.s0);
            f.eta = s.value("eta", f.eta);
        });
        section("mipmap", base.mipmap, [](const json& s, MipMapConfig& m) {
            m.levels = s.value("levels", m.levels);
            m.channels = s.value("channels", m.channels);
            m.n_min = s.value("n_min", m.n_min);
            m.n_max = s.value("n_max", m.n_max);
            m.init_scale = s.value("init_scale", m.init_scale);
        });
        section("hash", base.hash, [](const json& s, HashConfig& h) {
            h.levels = s.value("levels", h.levels);
            h.log2_table = s.value("log2_table", h.log2_table);
            h.channels = s.value("channels", h.channels);
            h.n_min = s.value("n_min", h.n_min);
            h.n_max = s.value("n_max", h.n_max);
            h.init_scale = s.value("init_scale", h.init_scale);
        });
        base.global_dim = j.value("global_dim", base.global_dim);
        base.global_init_scale = j.value("global_init_scale", base.global_init_scale);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("encoder config: ") + e.what());
    }
    base.validate();
    return base;
}

/// Coordinates with their levels and the precomputed table reads. Built once
/// for a fixed point set and reused across iterations.
struct EncodingBatch {
    std::vector<Point> points;
    std::vector<double> levels;
    std::vector<Tap> mip_taps;
    std::vector<std::size_t> mip_offsets;
    std::vector<Tap> hash_taps;
    std::vector<std::size_t> hash_offsets;
    /// Sorted feature-table entries read by at least one point.
    std::vector<std::uint32_t> mip_touched;
    std::vector<std::uint32_t> hash_touched;

    std::size_t size() const { return points.size(); }
};

/// Gradients of the learnable tables. Table-shaped buffers are only written
/// at the batch's touched entries.
struct EncoderGradients {
    std::vector<double> mipmap;
    std::vector<double> hash;
    std::vector<double> global;
};

class FieldEncoder {
public:
    FieldEncoder(const EncoderConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        const std::uint64_t fourier_seed = rng.next_u64();
        int off = 0;
        if (cfg_.fourier) {
            fourier_.emplace(*cfg_.fourier, fourier_seed);
            fourier_off_ = off;
            off += fourier_->dim();
        }
        if (cfg_.mipmap) {
            mipmap_.emplace(*cfg_.mipmap);
            detail::init_uniform(mipmap_->features(), rng, cfg_.mipmap->init_scale);
            mip_off_ = off;
            off += mipmap_->dim();
        }
        if (cfg_.hash) {
            hash_.emplace(*cfg_.hash);
            detail::init_uniform(hash_->features(), rng, cfg_.hash->init_scale);
            hash_off_ = off;
            off += hash_->dim();
        }
        global_.assign(cfg_.global_dim, 0.0);
        detail::init_uniform(global_, rng, cfg_.global_init_scale);
        global_off_ = off;
        dim_ = off + cfg_.global_dim;
    }

    int dim() const { return dim_; }
    const EncoderConfig& config() const { return cfg_; }

    bool has_fourier() const { return fourier_.has_value(); }
    bool has_mipmap() const { return mipmap_.has_value(); }
    bool has_hash() const { return hash_.has_value(); }
    int fourier_offset() const { return fourier_off_; }
    int mipmap_offset() const { return mip_off_; }
    int hash_offset() const { return hash_off_; }
    int global_offset() const { return global_off_; }

    FourierBank& fourier() { return fourier_.value(); }
    const FourierBank& fourier() const { return fourier_.value(); }
    MipMapPyramid& mipmap() { return mipmap_.value(); }
    const MipMapPyramid& mipmap() const { return mipmap_.value(); }
    HashGrid& hash() { return hash_.value(); }
    const HashGrid& hash() const { return hash_.value(); }
    std::vector<double>& global() { return global_; }
    const std::vector<double>& global() const { return global_; }

    EncoderGradients make_gradients() const {
        EncoderGradients g;
        if (mipmap_) g.mipmap.assign(mipmap_->features().size(), 0.0);
        if (hash_) g.hash.assign(hash_->features().size(), 0.0);
        g.global.assign(global_.size(), 0.0);
        return g;
    }

    EncodingBatch prepare(const std::vector<Point>& points, const std::vector<double>& levels) const {
        if (points.size() != levels.size()) throw DomainError("encoder: points and levels differ in length");
        EncodingBatch b;
        b.points = points;
        b.levels = levels;
        b.mip_offsets.push_back(0);
        b.hash_offsets.push_back(0);
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (mipmap_) mipmap_->taps(points[i], levels[i], mip_off_, b.mip_taps);
            if (hash_) hash_->taps(points[i], hash_off_, b.hash_taps);
            b.mip_offsets.push_back(b.mip_taps.size());
            b.hash_offsets.push_back(b.hash_taps.size());
        }
        auto touched = [](const std::vector<Tap>& taps, int channels) {
            std::vector<std::uint32_t> base;
            for (const auto& t : taps)
                if (t.weight != 0.0) base.push_back(t.feature);
            std::sort(base.begin(), base.end());
            base.erase(std::unique(base.begin(), base.end()), base.end());
            std::vector<std::uint32_t> out;
            out.reserve(base.size() * channels);
            for (auto f : base)
                for (int c = 0; c < channels; ++c) out.push_back(f + c);
            return out;
        };
        if (mipmap_) b.mip_touched = touched(b.mip_taps, mipmap_->channels());
        if (hash_) b.hash_touched = touched(b.hash_taps, hash_->channels());
        return b;
    }

    /// Encodes every point of the batch into the columns of `out` (dim x N).
    void encode(const EncodingBatch& b, MatrixXd& out) const {
        const auto n = static_cast<Eigen::Index>(b.size());
        out.resize(dim_, n);
        for (Eigen::Index i = 0; i < n; ++i) encode_column(b, static_cast<std::size_t>(i), out.col(i).data());
    }

    /// Single-point encoding; bit-identical to the batched path.
    void encode(const Point& x, double level, double* out) const {
        const EncodingBatch b = prepare({x}, {level});
        encode_column(b, 0, out);
    }

    /// Accumulates table gradients from dL/dp (dim x N) in point order.
    void backward(const EncodingBatch& b, const MatrixXd& upstream, EncoderGradients& g) const {
        if (upstream.rows() != dim_ || upstream.cols() != static_cast<Eigen::Index>(b.size()))
            throw ContractError("encoder backward: upstream shape does not match the batch");
        if (b.mip_offsets.size() != b.size() + 1 || b.hash_offsets.size() != b.size() + 1)
            throw ContractError("encoder backward: batch was not prepared");
        if (mipmap_) {
            if (g.mipmap.size() != mipmap_->features().size()) throw ContractError("encoder backward: mipmap gradient buffer");
            for (auto f : b.mip_touched) g.mipmap[f] = 0.0;
        }
        if (hash_) {
            if (g.hash.size() != hash_->features().size()) throw ContractError("encoder backward: hash gradient buffer");
            for (auto f : b.hash_touched) g.hash[f] = 0.0;
        }
        g.global.assign(global_.size(), 0.0);
        for (std::size_t i = 0; i < b.size(); ++i) {
            const double* up = upstream.col(static_cast<Eigen::Index>(i)).data();
            if (mipmap_)
                detail::scatter_taps(b.mip_taps.data() + b.mip_offsets[i], b.mip_taps.data() + b.mip_offsets[i + 1], up,
                                     mipmap_->channels(), g.mipmap.data());
            if (hash_)
                detail::scatter_taps(b.hash_taps.data() + b.hash_offsets[i], b.hash_taps.data() + b.hash_offsets[i + 1], up,
                                     hash_->channels(), g.hash.data());
            for (std::size_t c = 0; c < global_.size(); ++c) g.global[c] += up[global_off_ + c];
        }
    }

    void save(io::BinaryWriter& w) const {
        w.put_string(encoder_config_to_json(cfg_).dump());
        if (fourier_) fourier_->save(w);
        if (mipmap_) w.put_doubles(mipmap_->features());
        if (hash_) w.put_doubles(hash_->features());
        w.put_doubles(global_);
    }

    /// Restores the state written by save(); the configuration must match.
    void load(io::BinaryReader& r) {
        if (r.get_string() != encoder_config_to_json(cfg_).dump()) throw IoError("checkpoint: encoder configuration differs");
        if (fourier_) fourier_->load(r);
        if (mipmap_) r.get_doubles_into(mipmap_->features(), "mipmap features");
        if (hash_) r.get_doubles_into(hash_->features(), "hash features");
        r.get_doubles_into(global_, "global feature");
    }

private:
    void encode_column(const EncodingBatch& b, std::size_t i, double* out) const {
        std::fill(out, out + dim_, 0.0);
        if (fourier_) fourier_->encode(b.points[i], b.levels[i], out + fourier_off_);
        if (mipmap_)
            detail::apply_taps(b.mip_taps.data() + b.mip_offsets[i], b.mip_taps.data() + b.mip_offsets[i + 1],
                               mipmap_->features().data(), mipmap_->channels(), out);
        if (hash_)
            detail::apply_taps(b.hash_taps.data() + b.hash_offsets[i], b.hash_taps.data() + b.hash_offsets[i + 1],
                               hash_->features().data(), hash_->channels(), out);
        std::copy(global_.begin(), global_.end(), out + global_off_);
    }

    EncoderConfig cfg_;
    std::optional<FourierBank> fourier_;
    std::optional<MipMapPyramid> mipmap_;
    std::optional<HashGrid> hash_;
    std::vector<double> global_;
    int fourier_off_ = 0, mip_off_ = 0, hash_off_ = 0, global_off_ = 0, dim_ = 0;
};

} // namespace eit
