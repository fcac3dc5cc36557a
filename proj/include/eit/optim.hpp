#pragma once

// AdamW with per-group learning rates and cosine annealing, and the sigmoidal
// bandwidth schedule that drives Fourier bank resampling.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "encoding.hpp"
#include "error.hpp"
#include "io.hpp"

namespace eit {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
    double lr_mlp = 5e-3;
    double lr_features = 5e-2;
    /// Global gradient-norm clip; 0 disables.
    double clip_norm = 0.0;

    void validate() const {
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adamw: betas must lie in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("adamw: eps must be positive");
        if (!(weight_decay >= 0.0)) throw ConfigError("adamw: weight_decay must be >= 0");
        if (!(lr_mlp >= 0.0) || !(lr_features >= 0.0)) throw ConfigError("adamw: learning rates must be >= 0");
        if (!(clip_norm >= 0.0)) throw ConfigError("adamw: clip_norm must be >= 0");
    }
};

/// (1 + cos(pi t / total)) / 2, held at 0 past the end.
inline double cosine_factor(int t, int total) {
    if (total <= 0) throw ConfigError("cosine_factor: total must be positive");
    const double r = std::min(1.0, std::max(0.0, static_cast<double>(t) / total));
    return 0.5 * (1.0 + std::cos(std::numbers::pi * r));
}

/// One parameter tensor with its gradient. When `indices` is set only those
/// entries are updated; entries whose gradient has always been zero are left
/// untouched by a dense update as well, so both forms agree.
struct ParamGroup {
    std::vector<double>* param = nullptr;
    const std::vector<double>* grad = nullptr;
    double lr = 0.0;
    bool decay = false;
    const std::vector<std::uint32_t>* indices = nullptr;
};

class AdamW {
public:
    explicit AdamW(const AdamWConfig& cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    int step_count() const { return t_; }
    const AdamWConfig& config() const { return cfg_; }

    /// One update of every group with learning rates scaled by `lr_scale`.
    /// Groups must be passed in the same order on every call.
    void step(const std::vector<ParamGroup>& groups, double lr_scale = 1.0) {
        if (m_.empty()) {
            for (const auto& g : groups) {
                m_.emplace_back(g.param->size(), 0.0);
                v_.emplace_back(g.param->size(), 0.0);
            }
        }
        if (m_.size() != groups.size()) throw ContractError("adamw: parameter groups changed between steps");
        double sq = 0.0;
        for (std::size_t k = 0; k < groups.size(); ++k) {
            const auto& g = groups[k];
            if (!g.param || !g.grad || g.grad->size() != g.param->size() || m_[k].size() != g.param->size())
                throw ContractError("adamw: parameter/gradient shape mismatch");
            auto visit = [&](std::size_t i) {
                const double x = (*g.grad)[i];
                if (!std::isfinite(x)) throw NumericalError("adamw: non-finite gradient in group " + std::to_string(k) + " at " + std::to_string(i));
                sq += x * x;
            };
            if (g.indices)
                for (auto i : *g.indices) visit(i);
            else
                for (std::size_t i = 0; i < g.grad->size(); ++i) visit(i);
        }
        const double clip = cfg_.clip_norm > 0.0 && std::sqrt(sq) > cfg_.clip_norm ? cfg_.clip_norm / std::sqrt(sq) : 1.0;

        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t k = 0; k < groups.size(); ++k) {
            const auto& g = groups[k];
            const double lr = g.lr * lr_scale;
            auto& p = *g.param;
            const auto& gr = *g.grad;
            auto& m = m_[k];
            auto& v = v_[k];
            auto update = [&](std::size_t i) {
                if (g.decay) p[i] -= lr * cfg_.weight_decay * p[i];
                const double x = gr[i] * clip;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * x;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * x * x;
                p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
            };
            if (g.indices)
                for (auto i : *g.indices) update(i);
            else
                for (std::size_t i = 0; i < p.size(); ++i) update(i);
        }
    }

    void save(io::BinaryWriter& w) const {
        w.put_u64(static_cast<std::uint64_t>(t_));
        w.put_u64(m_.size());
        for (std::size_t k = 0; k < m_.size(); ++k) {
            w.put_doubles(m_[k]);
            w.put_doubles(v_[k]);
        }
    }

    void load(io::BinaryReader& r) {
        t_ = static_cast<int>(r.get_u64());
        const auto n = r.get_u64();
        m_.assign(n, {});
        v_.assign(n, {});
        for (std::size_t k = 0; k < n; ++k) {
            m_[k] = r.get_doubles();
            v_[k] = r.get_doubles();
        }
    }

private:
    AdamWConfig cfg_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// s0(t) = s_min + (s_max - s_min) / (1 + exp(-k (t - s_th))).
struct FreqSchedule {
    double s_min = 2.0;
    double s_max = 12.0;
    double k = 0.02;
    double s_th = 400.0;
    int T_resample = 100;

    void validate() const {
        if (!(s_min > 0.0) || !(s_min < s_max)) throw ConfigError("schedule: need 0 < s_min < s_max");
        if (!(k > 0.0)) throw ConfigError("schedule: k must be positive");
        if (T_resample < 1) throw ConfigError("schedule: T_resample must be >= 1");
    }

    double s0(double t) const { return s_min + (s_max - s_min) / (1.0 + std::exp(-k * (t - s_th))); }
};

inline double schedule_s0(double t, const FreqSchedule& s) { return s.s0(t); }

/// Redraws the bank at the scheduled bandwidth when t is a multiple of the
/// resample interval. Returns whether it did.
inline bool maybe_resample(int t, const FreqSchedule& s, FourierBank& bank) {
    if (t % s.T_resample != 0) return false;
    bank.resample(s.s0(t));
    return true;
}

inline json adamw_config_to_json(const AdamWConfig& c) {
    return json{{"beta1", c.beta1}, {"beta2", c.beta2}, {"eps", c.eps}, {"weight_decay", c.weight_decay},
                {"lr_mlp", c.lr_mlp}, {"lr_features", c.lr_features}, {"clip_norm", c.clip_norm}};
}

inline json schedule_to_json(const FreqSchedule& s) {
    return json{{"s_min", s.s_min}, {"s_max", s.s_max}, {"k", s.k}, {"s_th", s.s_th}, {"T_resample", s.T_resample}};
}

} // namespace eit
