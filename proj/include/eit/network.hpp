#pragma once

// Fully connected conductivity network: ReLU hidden layers and a scaled
// sigmoid output, with hand-written forward and reverse passes.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "error.hpp"
#include "io.hpp"
#include "rng.hpp"

namespace eit {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct MlpConfig {
    int input_dim = 80;
    std::vector<int> hidden{128, 128, 128};
    double c_out = 2.0;
    /// Gain of the Xavier-uniform output layer; small values start the field
    /// close to c_out / 2.
    double output_gain = 0.1;

    void validate() const {
        if (!(output_gain > 0.0)) throw ConfigError("mlp: output_gain must be positive");
        if (input_dim < 1) throw ConfigError("mlp: input_dim must be >= 1");
        for (int h : hidden)
            if (h < 1) throw ConfigError("mlp: hidden widths must be >= 1");
        if (!(c_out > 0.0)) throw ConfigError("mlp: c_out must be positive");
    }
};

/// Dense layer, W stored column-major (out x in): W[i * out + o].
struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> W;
    std::vector<double> b;
};

struct MlpGradients {
    std::vector<std::vector<double>> W;
    std::vector<std::vector<double>> b;
};

/// Activations kept by a batched forward pass for the reverse pass.
struct MlpCache {
    const MatrixXd* input = nullptr;
    std::vector<MatrixXd> act; // post-ReLU output of each hidden layer
    VectorXd s;                // sigmoid of the output pre-activation
};

namespace detail {

// y = b + W x, accumulated column by column in a fixed order so that every
// sample sees the same arithmetic whatever the batch size.
inline void dense_forward(const DenseLayer& L, const double* __restrict x, double* __restrict y) {
    for (int o = 0; o < L.out; ++o) y[o] = L.b[o];
    for (int i = 0; i < L.in; ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* __restrict w = L.W.data() + static_cast<std::size_t>(i) * L.out;
        for (int o = 0; o < L.out; ++o) y[o] += xi * w[o];
    }
}

// g += a * v
inline void axpy(int n, double a, const double* __restrict v, double* __restrict g) {
    for (int k = 0; k < n; ++k) g[k] += a * v[k];
}

} // namespace detail

class Mlp {
public:
    Mlp(const MlpConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        int in = cfg_.input_dim;
        std::vector<int> widths = cfg_.hidden;
        widths.push_back(1);
        for (std::size_t k = 0; k < widths.size(); ++k) {
            DenseLayer L;
            L.in = in;
            L.out = widths[k];
            L.W.resize(static_cast<std::size_t>(L.in) * L.out);
            L.b.assign(L.out, 0.0);
            const bool last = k + 1 == widths.size();
            // He-uniform for ReLU layers, Xavier-uniform for the output.
            const double bound = last ? cfg_.output_gain * std::sqrt(6.0 / (L.in + L.out)) : std::sqrt(6.0 / L.in);
            for (auto& w : L.W) w = rng.uniform(-bound, bound);
            layers_.push_back(std::move(L));
            in = widths[k];
        }
    }

    const MlpConfig& config() const { return cfg_; }
    int input_dim() const { return cfg_.input_dim; }
    double c_out() const { return cfg_.c_out; }
    std::vector<DenseLayer>& layers() { return layers_; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& L : layers_) n += L.W.size() + L.b.size();
        return n;
    }

    MlpGradients make_gradients() const {
        MlpGradients g;
        for (const auto& L : layers_) {
            g.W.emplace_back(L.W.size(), 0.0);
            g.b.emplace_back(L.b.size(), 0.0);
        }
        return g;
    }

    /// sigma = c_out * sigmoid(f(p)) for one input.
    double forward(const double* p) const {
        std::vector<double> a(p, p + cfg_.input_dim), z;
        for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
            z.resize(layers_[k].out);
            detail::dense_forward(layers_[k], a.data(), z.data());
            for (auto& v : z) v = v > 0.0 ? v : 0.0;
            a.swap(z);
        }
        double out;
        detail::dense_forward(layers_.back(), a.data(), &out);
        return cfg_.c_out * sigmoid(out);
    }

    /// Batched forward over the columns of X (input_dim x N). With a cache the
    /// activations are kept for backward(); X must then outlive the cache.
    VectorXd forward(const MatrixXd& X, MlpCache* cache = nullptr) const {
        if (X.rows() != cfg_.input_dim) throw DomainError("mlp: input dimension mismatch");
        const Eigen::Index n = X.cols();
        std::vector<MatrixXd> act(layers_.size() - 1);
        for (std::size_t k = 0; k + 1 < layers_.size(); ++k) act[k].resize(layers_[k].out, n);
        VectorXd s(n), sigma(n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double* a = X.col(j).data();
            for (std::size_t k = 0; k + 1 < layers_.size(); ++k) {
                double* z = act[k].col(j).data();
                detail::dense_forward(layers_[k], a, z);
                for (int o = 0; o < layers_[k].out; ++o) z[o] = z[o] > 0.0 ? z[o] : 0.0;
                a = z;
            }
            double out;
            detail::dense_forward(layers_.back(), a, &out);
            s[j] = sigmoid(out);
            sigma[j] = cfg_.c_out * s[j];
        }
        if (cache) {
            cache->input = &X;
            cache->act = std::move(act);
            cache->s = s;
        }
        return sigma;
    }

    /// Reverse pass for upstream dL/dsigma. Parameter gradients are
    /// overwritten; dX (input_dim x N) receives dL/dp when given.
    void backward(const MlpCache& cache, const VectorXd& upstream, MlpGradients& g, MatrixXd* dX = nullptr) const {
        if (!cache.input || cache.act.size() + 1 != layers_.size()) throw ContractError("mlp backward: missing forward cache");
        const MatrixXd& X = *cache.input;
        const Eigen::Index n = X.cols();
        if (upstream.size() != n || cache.s.size() != n) throw ContractError("mlp backward: upstream size mismatch");
        if (g.W.size() != layers_.size()) g = make_gradients();
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            std::fill(g.W[k].begin(), g.W[k].end(), 0.0);
            std::fill(g.b[k].begin(), g.b[k].end(), 0.0);
        }
        if (dX) dX->resize(cfg_.input_dim, n);

        // Row-major copies so dL/da is also an ordered column accumulation.
        std::vector<std::vector<double>> Wt(layers_.size());
        for (std::size_t k = 0; k < layers_.size(); ++k) {
            const auto& L = layers_[k];
            Wt[k].resize(L.W.size());
            for (int i = 0; i < L.in; ++i)
                for (int o = 0; o < L.out; ++o) Wt[k][static_cast<std::size_t>(o) * L.in + i] = L.W[static_cast<std::size_t>(i) * L.out + o];
        }

        int widest = cfg_.input_dim;
        for (const auto& L : layers_) widest = std::max(widest, L.out);
        std::vector<double> delta(widest), prev(widest);
        for (Eigen::Index j = 0; j < n; ++j) {
            const double sj = cache.s[j];
            delta[0] = upstream[j] * cfg_.c_out * sj * (1.0 - sj);
            for (std::size_t k = layers_.size(); k-- > 0;) {
                const auto& L = layers_[k];
                const double* a = k == 0 ? X.col(j).data() : cache.act[k - 1].col(j).data();
                double* gW = g.W[k].data();
                for (int i = 0; i < L.in; ++i)
                    if (a[i] != 0.0) detail::axpy(L.out, a[i], delta.data(), gW + static_cast<std::size_t>(i) * L.out);
                detail::axpy(L.out, 1.0, delta.data(), g.b[k].data());
                if (k == 0 && !dX) break;
                std::fill(prev.begin(), prev.begin() + L.in, 0.0);
                for (int o = 0; o < L.out; ++o)
                    if (delta[o] != 0.0) detail::axpy(L.in, delta[o], Wt[k].data() + static_cast<std::size_t>(o) * L.in, prev.data());
                if (k == 0) {
                    std::copy(prev.begin(), prev.begin() + L.in, dX->col(j).data());
                } else {
                    // ReLU'(0) = 0.
                    for (int i = 0; i < L.in; ++i) delta[i] = a[i] > 0.0 ? prev[i] : 0.0;
                }
            }
        }
    }

    void save(io::BinaryWriter& w) const {
        w.put_u64(layers_.size());
        for (const auto& L : layers_) {
            w.put_doubles(L.W);
            w.put_doubles(L.b);
        }
    }

    void load(io::BinaryReader& r) {
        if (r.get_u64() != layers_.size()) throw IoError("checkpoint: layer count differs");
        for (auto& L : layers_) {
            r.get_doubles_into(L.W, "mlp weights");
            r.get_doubles_into(L.b, "mlp biases");
        }
    }

    static double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

private:
    MlpConfig cfg_;
    std::vector<DenseLayer> layers_;
};

inline json mlp_config_to_json(const MlpConfig& c) {
    return json{{"input_dim", c.input_dim}, {"hidden", c.hidden}, {"c_out", c.c_out}, {"output_gain", c.output_gain}};
}

} // namespace eit
