#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "eit/encoding.hpp"

using namespace eit;

namespace {

Point random_point(Rng& rng) { return {rng.uniform(-1, 1), rng.uniform(-1, 1)}; }

std::vector<double> encode_one(const FieldEncoder& enc, const Point& x, double l) {
    std::vector<double> out(enc.dim());
    enc.encode(x, l, out.data());
    return out;
}

// Small pyramid keeps finite-difference loops cheap.
EncoderConfig small_hybrid() {
    EncoderConfig c;
    c.fourier = FourierConfig{4, 6, 2.0, 1.15};
    c.mipmap = MipMapConfig{6, 3, 4, 16, 0.5};
    c.global_dim = 3;
    c.global_init_scale = 0.5;
    return c;
}

EncoderConfig small_hash() {
    EncoderConfig c;
    c.hash = HashConfig{4, 8, 2, 4, 32, 0.5};
    return c;
}

} // namespace

TEST(GrowthLaw, MipmapResolutions) {
    const MipMapPyramid p(MipMapConfig{});
    EXPECT_NEAR(p.growth(), 1.20302, 1e-5);
    EXPECT_NEAR(p.growth(), std::pow(16.0, 1.0 / 15.0), 1e-14);
    EXPECT_EQ(p.resolution(0), 4);
    EXPECT_EQ(p.resolution(15), 64);
    for (int l = 1; l < 16; ++l) EXPECT_GT(p.resolution(l), p.resolution(l - 1));
}

TEST(Fourier, ZeroInputAndBounds) {
    const FourierBank bank(FourierConfig{}, 3);
    std::vector<double> f(bank.dim());
    bank.encode({0.0, 0.0}, 5.0, f.data());
    for (int k = 0; k < 16; ++k) {
        EXPECT_EQ(f[k], 0.0);
        EXPECT_EQ(f[16 + k], 1.0);
    }
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        bank.encode(random_point(rng), rng.uniform(0, 15), f.data());
        for (double v : f) EXPECT_LE(std::abs(v), 1.0);
    }
}

TEST(Fourier, LevelStdFollowsGeometricLaw) {
    const FourierBank bank(FourierConfig{512, 6, 3.0, 0.8}, 9);
    double prev = 1e300;
    for (int l = 0; l < 6; ++l) {
        double ss = 0;
        for (double b : bank.frequencies(l)) ss += b * b;
        const double sd = std::sqrt(ss / bank.frequencies(l).size());
        EXPECT_NEAR(sd, 3.0 * std::pow(0.8, l), 0.1 * 3.0 * std::pow(0.8, l));
        EXPECT_LT(sd, prev);
        prev = sd;
    }
}

TEST(Fourier, NearestLevelAndStableDimension) {
    FourierBank bank(FourierConfig{8, 4, 2.0, 1.15}, 2);
    EXPECT_EQ(bank.level_index(1.49), 1);
    EXPECT_EQ(bank.level_index(1.51), 2);
    EXPECT_EQ(bank.level_index(-3), 0);
    EXPECT_EQ(bank.level_index(99), 3);
    const auto before = bank.frequencies(0);
    bank.resample(5.0);
    EXPECT_EQ(bank.dim(), 16);
    EXPECT_NE(bank.frequencies(0), before);
}

TEST(Mipmap, VertexReadIsExact) {
    MipMapPyramid p(MipMapConfig{16, 4, 4, 64, 0});
    Rng rng(4);
    for (auto& f : p.features()) f = rng.normal();
    std::vector<double> out(4);
    for (int l : {0, 3, 7, 15}) {
        const int h = p.resolution(l);
        for (int trial = 0; trial < 50; ++trial) {
            const int ix = static_cast<int>(rng.uniform() * h), iy = static_cast<int>(rng.uniform() * h);
            const Point x{-1.0 + 2.0 * ix / (h - 1), -1.0 + 2.0 * iy / (h - 1)};
            p.interp(x, l, out.data());
            for (int c = 0; c < 4; ++c) EXPECT_EQ(out[c], p.features()[p.vertex_index(l, ix, iy) + c]);
        }
    }
}

TEST(Mipmap, CellCentreIsCornerMean) {
    MipMapPyramid p(MipMapConfig{4, 3, 4, 9, 0});
    Rng rng(5);
    for (auto& f : p.features()) f = rng.normal();
    std::vector<double> out(3);
    const int l = 2, h = p.resolution(l);
    for (int ix = 0; ix + 1 < h; ++ix)
        for (int iy = 0; iy + 1 < h; ++iy) {
            const double step = 2.0 / (h - 1);
            p.interp({-1.0 + (ix + 0.5) * step, -1.0 + (iy + 0.5) * step}, l, out.data());
            for (int c = 0; c < 3; ++c) {
                const double mean = (p.features()[p.vertex_index(l, ix, iy) + c] + p.features()[p.vertex_index(l, ix + 1, iy) + c] +
                                     p.features()[p.vertex_index(l, ix, iy + 1) + c] + p.features()[p.vertex_index(l, ix + 1, iy + 1) + c]) /
                                    4;
                EXPECT_NEAR(out[c], mean, 1e-14);
            }
        }
}

TEST(Mipmap, InterpolationIsLinearInFeatures) {
    MipMapPyramid a(MipMapConfig{5, 4, 4, 20, 0}), b = a, mix = a;
    Rng rng(6);
    for (auto& f : a.features()) f = rng.normal();
    for (auto& f : b.features()) f = rng.normal();
    const double alpha = 0.7, beta = -1.3;
    for (std::size_t i = 0; i < mix.features().size(); ++i) mix.features()[i] = alpha * a.features()[i] + beta * b.features()[i];
    std::vector<double> ra(4), rb(4), rm(4);
    for (int t = 0; t < 200; ++t) {
        const Point x = random_point(rng);
        const double l = rng.uniform(0, 4);
        a.encode(x, l, ra.data());
        b.encode(x, l, rb.data());
        mix.encode(x, l, rm.data());
        for (int c = 0; c < 4; ++c) EXPECT_NEAR(rm[c], alpha * ra[c] + beta * rb[c], 1e-12);
    }
}

TEST(Mipmap, LevelBlend) {
    MipMapPyramid p(MipMapConfig{});
    Rng rng(7);
    for (auto& f : p.features()) f = rng.normal();
    std::vector<double> m(32), i3(32), i4(32), mid(32), near(32);
    for (int t = 0; t < 50; ++t) {
        const Point x = random_point(rng);
        p.encode(x, 3.0, m.data());
        p.interp(x, 3, i3.data());
        p.interp(x, 4, i4.data());
        EXPECT_EQ(m, i3);
        p.encode(x, 3.5, mid.data());
        for (int c = 0; c < 32; ++c) EXPECT_NEAR(mid[c], 0.5 * (i3[c] + i4[c]), 1e-14);
        p.encode(x, 3.0 + 1e-6, near.data());
        double diff = 0, norm_m = 0;
        for (int c = 0; c < 32; ++c) {
            diff += (near[c] - m[c]) * (near[c] - m[c]);
            norm_m += m[c] * m[c];
        }
        EXPECT_LT(std::sqrt(diff), 1e-4 * std::sqrt(norm_m));
    }
}

TEST(Mipmap, ContinuousInSpace) {
    MipMapPyramid p(MipMapConfig{});
    Rng rng(8);
    for (auto& f : p.features()) f = rng.normal();
    std::vector<double> a(32), b(32);
    for (int t = 0; t < 200; ++t) {
        const Point x = random_point(rng);
        const double l = rng.uniform(0, 15);
        p.encode(x, l, a.data());
        p.encode({x[0] + 1e-9, x[1] - 1e-9}, l, b.data());
        for (int c = 0; c < 32; ++c) EXPECT_NEAR(a[c], b[c], 1e-6);
    }
}

TEST(HashGrid, DimensionAndInTableLookups) {
    const HashGrid g(HashConfig{});
    EXPECT_EQ(g.dim(), 64);
    EXPECT_EQ(g.table_size(), 1u << 17);
    Rng rng(10);
    std::vector<Tap> taps;
    for (int i = 0; i < 10000; ++i) g.taps(random_point(rng), 0, taps);
    for (const auto& t : taps) {
        const std::uint32_t entry = t.feature / 2;
        EXPECT_LT(entry % g.table_size(), g.table_size());
        EXPECT_LT(entry / g.table_size(), 32u);
    }
    EXPECT_EQ(g.hash(0, 0), 0u);
    EXPECT_EQ(g.hash(5, 0), 5u);
    EXPECT_EQ(g.hash(3, 7), ((3u * 1u) ^ (7u * 2654435761u)) % (1u << 17));
}

TEST(HashGrid, Deterministic) {
    const FieldEncoder enc(EncoderConfig::hash_grid(), 11);
    const Point x{0.123, -0.456};
    EXPECT_EQ(encode_one(enc, x, 0), encode_one(enc, x, 0));
}

TEST(FieldEncoder, PhyncLayout) {
    const FieldEncoder enc(EncoderConfig::phync(), 1);
    EXPECT_EQ(enc.dim(), 80);
    EXPECT_EQ(enc.mipmap_offset(), 32);
    EXPECT_EQ(enc.global_offset(), 64);
    EXPECT_EQ(FieldEncoder(EncoderConfig::ffp(), 1).dim(), 32);
    EXPECT_EQ(FieldEncoder(EncoderConfig::hash_grid(), 1).dim(), 64);
    EXPECT_EQ(FieldEncoder(EncoderConfig::hybhash(), 1).dim(), 80);
}

TEST(FieldEncoder, SlicesAreIndependent) {
    FieldEncoder enc(EncoderConfig::phync(), 2);
    const Point x{0.3, 0.1};
    const auto before = encode_one(enc, x, 6.4);
    std::fill(enc.mipmap().features().begin(), enc.mipmap().features().end(), 0.0);
    const auto after = encode_one(enc, x, 6.4);
    for (int k = 0; k < 32; ++k) EXPECT_EQ(after[k], before[k]);
    for (int k = 32; k < 64; ++k) EXPECT_EQ(after[k], 0.0);
    for (int k = 64; k < 80; ++k) EXPECT_EQ(after[k], enc.global()[k - 64]);
    EXPECT_EQ(encode_one(enc, x, 6.4), after);
}

TEST(FieldEncoder, BatchMatchesSinglePointBitExactly) {
    for (const auto& cfg : {EncoderConfig::phync(), EncoderConfig::hybhash()}) {
        const FieldEncoder enc(cfg, 3);
        Rng rng(12);
        std::vector<Point> pts;
        std::vector<double> lv;
        for (int i = 0; i < 100; ++i) {
            const Point p = random_point(rng);
            pts.push_back({p[0] * 0.7, p[1] * 0.7});
            lv.push_back(rng.uniform(0, 15));
        }
        MatrixXd X;
        enc.encode(enc.prepare(pts, lv), X);
        for (int i = 0; i < 100; ++i) {
            const auto one = encode_one(enc, pts[i], lv[i]);
            for (int k = 0; k < enc.dim(); ++k) EXPECT_EQ(X(k, i), one[k]);
        }
    }
}

TEST(FieldEncoder, TableGradientsMatchFiniteDifferences) {
    for (const auto& cfg : {small_hybrid(), small_hash()}) {
        FieldEncoder enc(cfg, 5);
        Rng rng(13);
        std::vector<Point> pts;
        std::vector<double> lv;
        for (int i = 0; i < 20; ++i) {
            pts.push_back(random_point(rng));
            lv.push_back(rng.uniform(0, 5));
        }
        const auto batch = enc.prepare(pts, lv);
        MatrixXd G(enc.dim(), 20);
        for (auto& g : G.reshaped()) g = rng.normal();
        auto loss = [&] {
            MatrixXd X;
            enc.encode(batch, X);
            return (X.array() * G.array()).sum();
        };
        auto grads = enc.make_gradients();
        enc.backward(batch, G, grads);

        auto check = [&](std::vector<double>& table, const std::vector<double>& grad, const std::vector<std::uint32_t>& idx) {
            for (int t = 0; t < 10; ++t) {
                const auto k = idx[static_cast<std::size_t>(rng.uniform() * idx.size())];
                const double h = 1e-5, orig = table[k];
                table[k] = orig + h;
                const double lp = loss();
                table[k] = orig - h;
                const double lm = loss();
                table[k] = orig;
                const double fd = (lp - lm) / (2 * h);
                EXPECT_LT(std::abs(fd - grad[k]), 1e-5 * std::max(1.0, std::abs(grad[k])));
            }
        };
        if (enc.has_mipmap()) check(enc.mipmap().features(), grads.mipmap, batch.mip_touched);
        if (enc.has_hash()) check(enc.hash().features(), grads.hash, batch.hash_touched);
        std::vector<std::uint32_t> all(enc.global().size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::uint32_t>(i);
        if (!all.empty()) check(enc.global(), grads.global, all);
    }
}

TEST(FieldEncoder, ZeroUpstreamGivesZeroGradient) {
    const FieldEncoder enc(small_hybrid(), 5);
    const auto batch = enc.prepare({{0.1, 0.2}, {-0.4, 0.5}}, {1.5, 3.0});
    auto g = enc.make_gradients();
    enc.backward(batch, MatrixXd::Zero(enc.dim(), 2), g);
    for (double v : g.mipmap) EXPECT_EQ(v, 0.0);
    for (double v : g.global) EXPECT_EQ(v, 0.0);
}

TEST(FieldEncoder, SinglePointTouchesAtMostEightVertices) {
    const FieldEncoder enc(EncoderConfig::phync(), 6);
    Rng rng(14);
    for (int t = 0; t < 50; ++t) {
        const auto batch = enc.prepare({random_point(rng)}, {rng.uniform(0, 15)});
        auto g = enc.make_gradients();
        MatrixXd G(enc.dim(), 1);
        for (auto& v : G.reshaped()) v = rng.normal();
        enc.backward(batch, G, g);
        std::set<std::size_t> vertices;
        for (std::size_t i = 0; i < g.mipmap.size(); ++i)
            if (g.mipmap[i] != 0.0) vertices.insert(i / 32);
        EXPECT_LE(vertices.size(), 8u);
        EXPECT_GE(vertices.size(), 1u);
    }
}

TEST(FieldEncoder, BackwardRequiresPreparedBatch) {
    const FieldEncoder enc(small_hybrid(), 5);
    auto g = enc.make_gradients();
    EncodingBatch empty;
    empty.points = {{0, 0}};
    empty.levels = {0};
    EXPECT_THROW(enc.backward(empty, MatrixXd::Zero(enc.dim(), 1), g), ContractError);
    const auto batch = enc.prepare({{0, 0}}, {0});
    EXPECT_THROW(enc.backward(batch, MatrixXd::Zero(enc.dim(), 2), g), ContractError);
}

TEST(FieldEncoder, CheckpointRoundTrip) {
    FieldEncoder a(EncoderConfig::phync(), 21);
    a.fourier().resample(4.0);
    io::BinaryWriter w;
    a.save(w);
    FieldEncoder b(EncoderConfig::phync(), 99);
    io::BinaryReader r(w.bytes());
    b.load(r);
    EXPECT_TRUE(r.done());
    const Point x{0.2, -0.7};
    EXPECT_EQ(encode_one(a, x, 9.3), encode_one(b, x, 9.3));
    a.fourier().resample(6.0);
    b.fourier().resample(6.0);
    EXPECT_EQ(a.fourier().frequencies(3), b.fourier().frequencies(3));

    FieldEncoder c(EncoderConfig::ffp(), 1);
    io::BinaryReader r2(w.bytes());
    EXPECT_THROW(c.load(r2), IoError);
}

TEST(FieldEncoder, ConfigJsonRoundTrip) {
    const EncoderConfig c = EncoderConfig::hybhash();
    const EncoderConfig back = encoder_config_from_json(json::parse(encoder_config_to_json(c).dump()));
    EXPECT_EQ(encoder_config_to_json(back), encoder_config_to_json(c));
    EXPECT_FALSE(back.mipmap.has_value());
    const EncoderConfig tweaked = encoder_config_from_json(json{{"mipmap", {{"channels", 8}}}}, EncoderConfig::phync());
    EXPECT_EQ(tweaked.mipmap->channels, 8);
    EXPECT_EQ(tweaked.mipmap->levels, 16);
    EXPECT_THROW(encoder_config_from_json(json{{"fourier", nullptr}, {"global_dim", 0}}, EncoderConfig::ffp()), ConfigError);
}
