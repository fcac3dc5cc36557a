#pragma once

// Closed-form homogeneous-disk potential, nodal sensitivity under adjacent
// drive, and the sensitivity/sparsity level map.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "error.hpp"
#include "forward.hpp"
#include "io.hpp"
#include "mesh.hpp"

namespace eit {

struct AnalyticConfig {
    int n_electrodes = 16;
    double current = 1.0;
    double radius = 1.0;
    double sigma0 = 1.0;
    /// Nodes are evaluated at radius min(|x|, clamp_radius); on the rim the
    /// point-electrode potential is singular.
    double clamp_radius = 1.0 - 1e-6;

    void validate() const {
        if (n_electrodes < 4) throw ConfigError("analytic: need at least 4 electrodes");
        if (!(current > 0.0)) throw ConfigError("analytic: current must be positive");
        if (!(radius > 0.0) || !(sigma0 > 0.0)) throw ConfigError("analytic: radius and sigma0 must be positive");
        if (!(clamp_radius > 0.0 && clamp_radius < 1.0)) throw ConfigError("analytic: clamp_radius must lie in (0, 1)");
    }

    double electrode_angle(int k) const { return 2.0 * std::numbers::pi * k / n_electrodes; }
};

/// Potential of a point-current dipole on the rim of a homogeneous disk:
/// phi = I/(2 pi sigma0) * ln[(1 - 2 rho cos(theta - theta_out) + rho^2) /
///                           (1 - 2 rho cos(theta - theta_in)  + rho^2)],
/// with rho = r / a.
inline double analytic_potential(double r, double theta, double theta_in, double theta_out,
                                 const AnalyticConfig& cfg = {}) {
    const double rho = r / cfg.radius;
    if (rho < 0.0 || rho > 1.0) throw DomainError("analytic_potential: radius outside the disk");
    const double num = 1.0 - 2.0 * rho * std::cos(theta - theta_out) + rho * rho;
    const double den = 1.0 - 2.0 * rho * std::cos(theta - theta_in) + rho * rho;
    if (num <= 0.0 || den <= 0.0) throw DomainError("analytic_potential: evaluation point coincides with an electrode");
    return cfg.current / (2.0 * std::numbers::pi * cfg.sigma0) * std::log(num / den);
}

/// Sensitivity at polar position (r, theta), averaged over the K adjacent
/// electrode pairs (k, k+1 mod K). Non-positive.
inline double point_sensitivity(double r, double theta, const AnalyticConfig& cfg = {}) {
    const int K = cfg.n_electrodes;
    const double c = cfg.current * cfg.current / (4.0 * std::numbers::pi * std::numbers::pi) /
                     (cfg.sigma0 * cfg.sigma0);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) {
        const double tk = cfg.electrode_angle(k);
        const double tk1 = cfg.electrode_angle(k + 1);
        const double D = r * r + 1.0 - 2.0 * r * std::cos(theta - tk1);
        const double E = r * r + 1.0 - 2.0 * r * std::cos(theta - tk);
        const double radial = (r - std::cos(theta - tk1)) / D - (r - std::cos(theta - tk)) / E;
        const double tangential = std::sin(theta - tk1) / D - std::sin(theta - tk) / E;
        sum += c * (radial * radial + tangential * tangential);
    }
    return -sum / K;
}

/// Sensitivity at a Cartesian point, radius clamped like the nodal map.
inline double sensitivity_at(const Point& p, const AnalyticConfig& cfg = {}) {
    const double r = std::min(norm(p) / cfg.radius, cfg.clamp_radius);
    return point_sensitivity(r, std::atan2(p[1], p[0]), cfg);
}

inline std::vector<double> nodal_sensitivity(const Mesh& mesh, const AnalyticConfig& cfg = {}) {
    cfg.validate();
    std::vector<double> s;
    s.reserve(mesh.node_count());
    for (const auto& p : mesh.nodes()) s.push_back(sensitivity_at(p, cfg));
    return s;
}

struct LevelMap {
    std::vector<double> S;
    std::vector<double> H;
    /// Real-valued level in [0, L-1]; 0 is the coarsest encoding level.
    std::vector<double> level;
    double mu = -1.0;
    double nu = 1.0;
    int L = 16;
    /// Raw-score range used for the min-max mapping.
    double raw_lo = 0.0;
    double raw_hi = 0.0;
};

inline double level_raw_score(double S, double H, double mu, double nu);

inline constexpr double kSensitivityFloor = 1e-12;

inline double level_raw_score(double S, double H, double mu, double nu) {
    return mu * std::log10(std::abs(S) + kSensitivityFloor) + nu * (1.0 - H);
}

/// Level of a raw score under an existing map's normalisation, clamped to [0, L-1].
inline double level_from_raw(const LevelMap& map, double raw) {
    if (!(map.raw_hi - map.raw_lo > 1e-12 * std::max(std::abs(map.raw_lo), std::abs(map.raw_hi)))) return 0.5 * (map.L - 1);
    return std::clamp((map.L - 1) * (raw - map.raw_lo) / (map.raw_hi - map.raw_lo), 0.0, static_cast<double>(map.L - 1));
}

/// raw_i = mu * log10(|S_i| + 1e-12) + nu * (1 - H_i), min-max mapped onto
/// [0, L-1]. A constant raw score maps every node to (L-1)/2.
inline LevelMap level_map(std::vector<double> S, std::vector<double> H, double mu, double nu, int L) {
    if (L < 2) throw ConfigError("level_map: L must be >= 2");
    if (S.size() != H.size()) throw DomainError("level_map: S and H sizes differ");
    if (S.empty()) throw DomainError("level_map: empty input");
    std::vector<double> raw(S.size());
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (!std::isfinite(S[i]) || !std::isfinite(H[i])) throw DomainError("level_map: non-finite input");
        raw[i] = level_raw_score(S[i], H[i], mu, nu);
    }
    const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
    const double lo = *lo_it, hi = *hi_it;
    LevelMap map;
    map.mu = mu;
    map.nu = nu;
    map.L = L;
    map.raw_lo = lo;
    map.raw_hi = hi;
    map.level.assign(raw.size(), 0.5 * (L - 1));
    const double scale = std::max(std::abs(lo), std::abs(hi));
    if (hi - lo > 1e-12 * scale) {
        for (std::size_t i = 0; i < raw.size(); ++i) map.level[i] = (L - 1) * (raw[i] - lo) / (hi - lo);
        // Pin the extremes exactly.
        map.level[lo_it - raw.begin()] = 0.0;
        map.level[hi_it - raw.begin()] = L - 1;
    }
    map.S = std::move(S);
    map.H = std::move(H);
    return map;
}

/// Level map of a mesh from its analytic sensitivity and element sparsity.
inline LevelMap mesh_level_map(const Mesh& mesh, double mu, double nu, int L, const AnalyticConfig& cfg = {}) {
    return level_map(nodal_sensitivity(mesh, cfg), node_sparsity(mesh), mu, nu, L);
}

/// Per-node coordinate sensitivity: the physics Jacobian column composed with
/// the representation's spatial gradient, reduced to a norm over
/// measurements, i.e. ||J[:, n]|| * ||d sigma / dx (x_n)||.
inline std::vector<double> coordinate_sensitivity(const Jacobian& jac, const std::vector<std::array<double, 2>>& sigma_grad) {
    if (static_cast<Eigen::Index>(sigma_grad.size()) != jac.cols())
        throw DomainError("coordinate_sensitivity: gradient count does not match Jacobian columns");
    std::vector<double> out(sigma_grad.size());
    for (std::size_t n = 0; n < sigma_grad.size(); ++n)
        out[n] = jac.matrix.col(static_cast<Eigen::Index>(n)).norm() * std::hypot(sigma_grad[n][0], sigma_grad[n][1]);
    return out;
}

inline json level_map_to_json(const LevelMap& m) {
    return json{{"S", m.S}, {"H", m.H}, {"level", m.level}, {"mu", m.mu}, {"nu", m.nu}, {"L", m.L}};
}

} // namespace eit
