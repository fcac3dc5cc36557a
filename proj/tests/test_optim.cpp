#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "eit/optim.hpp"

using namespace eit;

namespace {

// Textbook scalar AdamW written independently of the optimizer.
double reference_adamw(double p, const std::vector<double>& grads, double lr, double wd) {
    double m = 0, v = 0;
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const int t = static_cast<int>(i) + 1;
        p *= 1 - lr * wd;
        m = 0.9 * m + 0.1 * grads[i];
        v = 0.999 * v + 0.001 * grads[i] * grads[i];
        const double step = lr / (1 - std::pow(0.9, t));
        const double denom = std::sqrt(v) / std::sqrt(1 - std::pow(0.999, t)) + 1e-8;
        p -= step * m / denom;
    }
    return p;
}

} // namespace

TEST(AdamW, FirstStepScalarExample) {
    AdamWConfig cfg;
    cfg.weight_decay = 0;
    AdamW opt(cfg);
    std::vector<double> p{0.0}, g{1.0};
    opt.step({{&p, &g, 0.1, true}});
    EXPECT_NEAR(p[0], -0.1 / (1.0 + 1e-8), 1e-16);
    EXPECT_NEAR(p[0], -0.0999999999, 1e-9);
    EXPECT_EQ(opt.step_count(), 1);
}

TEST(AdamW, MatchesReferenceRecurrence) {
    AdamW opt;
    std::vector<double> grads{0.3, -1.2, 2.5, 0.0, 0.7, -0.1};
    std::vector<double> p{0.8}, g{0};
    for (double x : grads) {
        g[0] = x;
        opt.step({{&p, &g, 0.05, true}});
    }
    EXPECT_NEAR(p[0], reference_adamw(0.8, grads, 0.05, 1e-4), 1e-13);
}

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameters) {
    AdamW opt;
    std::vector<double> p{1.0, -2.0, 3.0}, g(3, 0.0);
    for (int i = 0; i < 5; ++i) opt.step({{&p, &g, 0.1, false}});
    EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(AdamW, DecayOnlyOnFlaggedGroups) {
    AdamW opt;
    std::vector<double> w{2.0}, f{2.0}, g{0.0};
    opt.step({{&w, &g, 0.1, true}, {&f, &g, 0.1, false}});
    EXPECT_DOUBLE_EQ(w[0], 2.0 * (1 - 0.1 * 1e-4));
    EXPECT_EQ(f[0], 2.0);
}

TEST(AdamW, SparseUpdateEqualsDense) {
    Rng rng(3);
    std::vector<double> a(50), b;
    for (auto& x : a) x = rng.normal();
    b = a;
    std::vector<std::uint32_t> idx{1, 4, 9, 10, 33, 49};
    AdamW da, sa;
    for (int step = 0; step < 20; ++step) {
        std::vector<double> g(50, 0.0);
        for (auto i : idx) g[i] = rng.normal();
        da.step({{&a, &g, 0.05, false}}, cosine_factor(step + 1, 20));
        sa.step({{&b, &g, 0.05, false, &idx}}, cosine_factor(step + 1, 20));
    }
    EXPECT_EQ(a, b);
}

TEST(AdamW, NonFiniteGradientAbortsWithoutChanges) {
    AdamW opt;
    std::vector<double> p{1.0, 2.0}, g{0.5, std::numeric_limits<double>::quiet_NaN()};
    EXPECT_THROW(opt.step({{&p, &g, 0.1, true}}), NumericalError);
    EXPECT_EQ(p, (std::vector<double>{1.0, 2.0}));
    EXPECT_EQ(opt.step_count(), 0);
}

TEST(AdamW, ClippingScalesGradient) {
    AdamWConfig cfg;
    cfg.weight_decay = 0;
    cfg.clip_norm = 1.0;
    AdamW clipped(cfg);
    cfg.clip_norm = 0;
    AdamW plain(cfg);
    std::vector<double> a{0.0, 0.0}, b{0.0, 0.0}, g{30.0, 40.0}, gs{0.6, 0.8};
    clipped.step({{&a, &g, 0.1, false}});
    plain.step({{&b, &gs, 0.1, false}});
    EXPECT_EQ(a, b);
}

TEST(AdamW, CheckpointResumesBitExactly) {
    Rng rng(4);
    std::vector<double> p(10), q;
    for (auto& x : p) x = rng.normal();
    AdamW a;
    std::vector<std::vector<double>> gs(6, std::vector<double>(10));
    for (auto& g : gs)
        for (auto& x : g) x = rng.normal();
    for (int i = 0; i < 3; ++i) a.step({{&p, &gs[i], 0.01, true}});
    io::BinaryWriter w;
    a.save(w);
    q = p;
    AdamW b;
    io::BinaryReader r(w.bytes());
    b.load(r);
    for (int i = 3; i < 6; ++i) {
        a.step({{&p, &gs[i], 0.01, true}});
        b.step({{&q, &gs[i], 0.01, true}});
    }
    EXPECT_EQ(p, q);
}

TEST(Cosine, EndpointsAndMonotone) {
    EXPECT_EQ(cosine_factor(0, 1000), 1.0);
    EXPECT_NEAR(cosine_factor(1000, 1000), 0.0, 1e-16);
    EXPECT_NEAR(cosine_factor(500, 1000), 0.5, 1e-15);
    for (int t = 1; t <= 1000; ++t) EXPECT_LE(cosine_factor(t, 1000), cosine_factor(t - 1, 1000));
}

TEST(FreqSchedule, MidpointBoundsMonotone) {
    const FreqSchedule s;
    EXPECT_NEAR(schedule_s0(s.s_th, s), (s.s_min + s.s_max) / 2, 1e-12);
    FreqSchedule steep = s;
    steep.k = 10.0;
    EXPECT_NEAR(schedule_s0(0, steep), steep.s_min, 1e-9);
    EXPECT_NEAR(schedule_s0(1e6, s), s.s_max, 1e-12);
    double prev = -1;
    for (int i = 0; i < 100; ++i) {
        const double v = schedule_s0(i * 10.0, s);
        EXPECT_GE(v, prev);
        EXPECT_GE(v, s.s_min);
        EXPECT_LE(v, s.s_max);
        prev = v;
    }
    // Reaches 95% of s_max by iteration 600.
    EXPECT_GT(schedule_s0(600, s), 0.95 * s.s_max - 0.05 * s.s_min);
}

TEST(FreqSchedule, Validation) {
    FreqSchedule s;
    s.s_min = 12;
    EXPECT_THROW(s.validate(), ConfigError);
    s = {};
    s.T_resample = 0;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Resample, OnlyOnInterval) {
    const FreqSchedule s;
    FourierBank bank(FourierConfig{256, 3, s.s0(0), 1.15}, 7);
    const auto before = bank.frequencies(0);
    const auto gen = bank.generation();
    EXPECT_FALSE(maybe_resample(1, s, bank));
    EXPECT_EQ(bank.generation(), gen);
    EXPECT_EQ(bank.frequencies(0), before);

    std::vector<std::vector<double>> old{bank.frequencies(0), bank.frequencies(1), bank.frequencies(2)};
    EXPECT_TRUE(maybe_resample(100, s, bank));
    for (int l = 0; l < 3; ++l)
        for (std::size_t i = 0; i < old[l].size(); ++i) EXPECT_NE(bank.frequencies(l)[i], old[l][i]);
    double ss = 0;
    for (double b : bank.frequencies(0)) ss += b * b;
    const double sd = std::sqrt(ss / bank.frequencies(0).size());
    EXPECT_NEAR(sd, s.s0(100), 0.1 * s.s0(100));
    EXPECT_DOUBLE_EQ(bank.s0(), s.s0(100));
}

TEST(Resample, DeterministicUnderSeed) {
    const FreqSchedule s;
    FourierBank a(FourierConfig{16, 4, 2.0, 1.15}, 5), b(FourierConfig{16, 4, 2.0, 1.15}, 5);
    for (int t = 1; t <= 1000; ++t) {
        maybe_resample(t, s, a);
        maybe_resample(t, s, b);
    }
    for (int l = 0; l < 4; ++l) EXPECT_EQ(a.frequencies(l), b.frequencies(l));
}
