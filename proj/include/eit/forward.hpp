#pragma once

// Complete Electrode Model forward solver: piecewise-linear FEM on the disk
// mesh, electrode voltages for a drive/measure pattern set, and the adjoint
// Jacobian with respect to nodal conductivity.

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "error.hpp"
#include "io.hpp"
#include "mesh.hpp"

namespace eit {

using Eigen::VectorXd;
using ElectrodePair = std::array<int, 2>;

struct PatternSet {
    /// (source, sink) electrode pairs.
    std::vector<ElectrodePair> injections;
    /// (positive, negative) electrode pairs.
    std::vector<ElectrodePair> measurements;
    double current_mA = 1.0;
    /// Skip measurement pairs that share an electrode with the active injection.
    bool drop_shared_electrodes = true;

    void validate(int n_electrodes) const {
        if (injections.empty()) throw ConfigError("patterns: no injections");
        if (measurements.empty()) throw ConfigError("patterns: no measurements");
        if (!(current_mA > 0.0) || !std::isfinite(current_mA)) throw ConfigError("patterns: current must be positive");
        std::set<std::pair<int, int>> seen;
        for (const auto& p : injections) {
            check_pair(p, n_electrodes, "injection");
            if (!seen.insert({std::min(p[0], p[1]), std::max(p[0], p[1])}).second)
                throw ConfigError("patterns: duplicate injection pair (" + std::to_string(p[0]) + "," +
                                  std::to_string(p[1]) + ")");
        }
        for (const auto& p : measurements) check_pair(p, n_electrodes, "measurement");
    }

private:
    static void check_pair(const ElectrodePair& p, int n, const char* what) {
        if (p[0] < 0 || p[0] >= n || p[1] < 0 || p[1] >= n)
            throw ConfigError(std::string("patterns: ") + what + " electrode index out of range");
        if (p[0] == p[1]) throw ConfigError(std::string("patterns: ") + what + " pair uses one electrode twice");
    }
};

/// Adjacent drive, adjacent measure.
inline PatternSet adjacent_patterns(int n_electrodes, bool drop_shared = true) {
    PatternSet p;
    for (int k = 0; k < n_electrodes; ++k) {
        p.injections.push_back({k, (k + 1) % n_electrodes});
        p.measurements.push_back({k, (k + 1) % n_electrodes});
    }
    p.drop_shared_electrodes = drop_shared;
    return p;
}

/// Injections cycle through skip-0 (adjacent), skip-1, skip-2, ... pairs in
/// electrode order until `n_injections` unique pairs exist; measurements are
/// all adjacent pairs.
inline PatternSet default_patterns(int n_electrodes = 16, int n_injections = 54) {
    if (n_electrodes < 4) throw ConfigError("patterns: need at least 4 electrodes");
    const int max_pairs = n_electrodes * (n_electrodes - 1) / 2;
    if (n_injections < 1 || n_injections > max_pairs)
        throw ConfigError("patterns: cannot form " + std::to_string(n_injections) + " unique injections");
    PatternSet p = adjacent_patterns(n_electrodes);
    p.injections.clear();
    std::set<std::pair<int, int>> seen;
    for (int skip = 0; static_cast<int>(p.injections.size()) < n_injections; ++skip)
        for (int k = 0; k < n_electrodes && static_cast<int>(p.injections.size()) < n_injections; ++k) {
            const int a = k, b = (k + 1 + skip) % n_electrodes;
            if (seen.insert({std::min(a, b), std::max(a, b)}).second) p.injections.push_back({a, b});
        }
    return p;
}

struct MeasurementRow {
    int injection;
    int measurement;
};

/// Retained (injection, measurement) rows in pattern order.
inline std::vector<MeasurementRow> measurement_rows(const PatternSet& p) {
    std::vector<MeasurementRow> rows;
    for (int i = 0; i < static_cast<int>(p.injections.size()); ++i)
        for (int m = 0; m < static_cast<int>(p.measurements.size()); ++m) {
            const auto& inj = p.injections[i];
            const auto& meas = p.measurements[m];
            if (p.drop_shared_electrodes &&
                (meas[0] == inj[0] || meas[0] == inj[1] || meas[1] == inj[0] || meas[1] == inj[1]))
                continue;
            rows.push_back({i, m});
        }
    return rows;
}

struct ContactModel {
    /// Per-electrode contact impedance.
    std::vector<double> impedance;

    static ContactModel uniform(int n_electrodes, double z = 0.01) {
        return ContactModel{std::vector<double>(n_electrodes, z)};
    }

    void validate(int n_electrodes) const {
        if (static_cast<int>(impedance.size()) != n_electrodes)
            throw ConfigError("contact: expected " + std::to_string(n_electrodes) + " impedances");
        for (double z : impedance)
            if (!(z > 0.0) || !std::isfinite(z)) throw ConfigError("contact: impedances must be positive");
    }
};

/// Row-major dV/dsigma: rows are measurements, columns are nodes.
struct Jacobian {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> matrix;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index cols() const { return matrix.cols(); }
};

/// J^T g.
inline VectorXd vjp(const Jacobian& jac, const VectorXd& residual_gradient) {
    if (residual_gradient.size() != jac.rows())
        throw DomainError("vjp: gradient has " + std::to_string(residual_gradient.size()) + " entries, Jacobian has " +
                          std::to_string(jac.rows()) + " rows");
    return jac.matrix.transpose() * residual_gradient;
}

struct ForwardResult {
    /// One entry per retained (injection, measurement) row.
    VectorXd voltages;
    /// Per-injection nodal potentials; empty unless requested.
    std::vector<VectorXd> nodal_potentials;
    /// Per-injection electrode potentials; empty unless requested.
    std::vector<VectorXd> electrode_potentials;
};

namespace detail {

/// Linear-triangle geometry: area and the constant basis gradients.
struct ElementGeometry {
    Triangle nodes;
    double area;
    std::array<std::array<double, 2>, 3> grad;
};

inline std::vector<ElementGeometry> element_geometry(const Mesh& mesh) {
    std::vector<ElementGeometry> geo;
    geo.reserve(mesh.element_count());
    const auto& x = mesh.nodes();
    for (const auto& t : mesh.elements()) {
        ElementGeometry g;
        g.nodes = t;
        g.area = signed_area(x[t[0]], x[t[1]], x[t[2]]);
        for (int a = 0; a < 3; ++a) {
            const auto& pj = x[t[(a + 1) % 3]];
            const auto& pk = x[t[(a + 2) % 3]];
            g.grad[a] = {(pj[1] - pk[1]) / (2 * g.area), (pk[0] - pj[0]) / (2 * g.area)};
        }
        geo.push_back(g);
    }
    return geo;
}

inline double element_sigma(const ElementGeometry& g, const VectorXd& sigma) {
    return (sigma[g.nodes[0]] + sigma[g.nodes[1]] + sigma[g.nodes[2]]) / 3.0;
}

inline std::array<double, 2> element_gradient(const ElementGeometry& g, const VectorXd& u) {
    std::array<double, 2> d{0.0, 0.0};
    for (int a = 0; a < 3; ++a) {
        d[0] += u[g.nodes[a]] * g.grad[a][0];
        d[1] += u[g.nodes[a]] * g.grad[a][1];
    }
    return d;
}

inline void check_sigma(const VectorXd& sigma, std::size_t n) {
    if (static_cast<std::size_t>(sigma.size()) != n)
        throw DomainError("conductivity has " + std::to_string(sigma.size()) + " entries for " + std::to_string(n) +
                          " nodes");
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (!(sigma[i] > 0.0) || !std::isfinite(sigma[i]))
            throw DomainError("conductivity must be positive and finite (node " + std::to_string(i) + ")");
}

} // namespace detail

/// Factorized CEM system for one conductivity. Unknowns are the nodal
/// potentials followed by the electrode potentials. The gauge sum(U) = 0 is
/// imposed by adding the rank-one term 1 1^T on the electrode block, which
/// keeps the matrix symmetric positive definite; for any current pattern
/// summing to zero the solution satisfies the unaugmented equations exactly.
class CemSystem {
public:
    using SparseMatrix = Eigen::SparseMatrix<double>;

    CemSystem(SparseMatrix matrix, int n_nodes, int n_electrodes)
        : matrix_(std::move(matrix)), n_nodes_(n_nodes), n_electrodes_(n_electrodes),
          llt_(std::make_unique<Eigen::SimplicialLLT<SparseMatrix>>()) {
        llt_->compute(matrix_);
        if (llt_->info() != Eigen::Success) throw NumericalError("CEM factorization failed (matrix not SPD)");
    }

    int node_count() const { return n_nodes_; }
    int electrode_count() const { return n_electrodes_; }
    const SparseMatrix& matrix() const { return matrix_; }

    /// Full state vector (nodes, then electrodes) for the given electrode currents.
    VectorXd solve(const VectorXd& electrode_currents) const {
        if (electrode_currents.size() != n_electrodes_) throw DomainError("CEM solve: wrong current vector length");
        VectorXd rhs = VectorXd::Zero(n_nodes_ + n_electrodes_);
        rhs.tail(n_electrodes_) = electrode_currents;
        VectorXd x = llt_->solve(rhs);
        if (llt_->info() != Eigen::Success || !x.allFinite()) throw NumericalError("CEM solve failed");
        return x;
    }

private:
    SparseMatrix matrix_;
    int n_nodes_;
    int n_electrodes_;
    std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix>> llt_;
};

class ForwardModel;

/// All potential fields at one conductivity: one per injection and one per
/// measurement pair driven as a unit-current injection. Supports voltage
/// readout, the explicit Jacobian, and J^T g by adjoint contraction.
class Linearization {
public:
    const VectorXd& voltages() const { return voltages_; }

    /// Explicit Jacobian: entry (m, n) is -sum over elements K at node n of
    /// (1/3) * integral_K grad(u_inj) . grad(u_meas).
    Jacobian jacobian() const;

    /// Exactly J^T g without forming J: each injection's measurement fields
    /// are combined with the weights g before the element integrals.
    VectorXd jacobian_transpose_product(const VectorXd& g) const;

    const std::vector<VectorXd>& injection_fields() const { return injection_fields_; }

private:
    friend class ForwardModel;
    const ForwardModel* model_ = nullptr;
    VectorXd voltages_;
    std::vector<VectorXd> injection_fields_;   // nodal part, per injection
    std::vector<VectorXd> measurement_fields_; // nodal part, per measurement pair
    std::vector<std::vector<std::array<double, 2>>> injection_grads_;
    std::vector<std::vector<std::array<double, 2>>> measurement_grads_;
};

/// Mesh, patterns and contact impedances bound together with precomputed
/// element geometry; produces systems and solutions for any conductivity.
class ForwardModel {
public:
    ForwardModel(Mesh mesh, PatternSet patterns, ContactModel contact)
        : mesh_(std::move(mesh)), patterns_(std::move(patterns)), contact_(std::move(contact)) {
        const int ne = mesh_.electrode_count();
        if (ne < 2) throw ConfigError("forward: mesh has fewer than two electrodes");
        patterns_.validate(ne);
        contact_.validate(ne);
        geometry_ = detail::element_geometry(mesh_);
        rows_ = measurement_rows(patterns_);
        if (rows_.empty()) throw ConfigError("forward: pattern set retains no measurements");
        build_static_part();
    }

    const Mesh& mesh() const { return mesh_; }
    const PatternSet& patterns() const { return patterns_; }
    const ContactModel& contact() const { return contact_; }
    const std::vector<MeasurementRow>& rows() const { return rows_; }
    Eigen::Index measurement_count() const { return static_cast<Eigen::Index>(rows_.size()); }
    int node_count() const { return static_cast<int>(mesh_.node_count()); }
    int electrode_count() const { return mesh_.electrode_count(); }
    const std::vector<detail::ElementGeometry>& geometry() const { return geometry_; }

    CemSystem assemble(const VectorXd& sigma) const {
        detail::check_sigma(sigma, mesh_.node_count());
        std::vector<Eigen::Triplet<double>> trip = static_triplets_;
        trip.reserve(trip.size() + 9 * geometry_.size());
        for (const auto& g : geometry_) {
            const double s = detail::element_sigma(g, sigma) * g.area;
            for (int a = 0; a < 3; ++a)
                for (int b = 0; b < 3; ++b)
                    trip.emplace_back(g.nodes[a], g.nodes[b],
                                      s * (g.grad[a][0] * g.grad[b][0] + g.grad[a][1] * g.grad[b][1]));
        }
        const int dim = node_count() + electrode_count();
        CemSystem::SparseMatrix K(dim, dim);
        K.setFromTriplets(trip.begin(), trip.end());
        return CemSystem(std::move(K), node_count(), electrode_count());
    }

    VectorXd pair_currents(const ElectrodePair& p, double amplitude) const {
        VectorXd c = VectorXd::Zero(electrode_count());
        c[p[0]] += amplitude;
        c[p[1]] -= amplitude;
        return c;
    }

    ForwardResult solve(const VectorXd& sigma, bool keep_potentials = false) const {
        const CemSystem sys = assemble(sigma);
        ForwardResult res;
        res.voltages.resize(measurement_count());
        std::vector<VectorXd> states;
        states.reserve(patterns_.injections.size());
        for (const auto& inj : patterns_.injections) states.push_back(sys.solve(pair_currents(inj, patterns_.current_mA)));
        for (std::size_t r = 0; r < rows_.size(); ++r) res.voltages[r] = readout(states[rows_[r].injection], rows_[r].measurement);
        if (keep_potentials)
            for (auto& s : states) {
                res.nodal_potentials.push_back(s.head(node_count()));
                res.electrode_potentials.push_back(s.tail(electrode_count()));
            }
        return res;
    }

    Linearization linearize(const VectorXd& sigma) const {
        const CemSystem sys = assemble(sigma);
        Linearization lin;
        lin.model_ = this;
        std::vector<VectorXd> states;
        for (const auto& inj : patterns_.injections) {
            states.push_back(sys.solve(pair_currents(inj, patterns_.current_mA)));
            lin.injection_fields_.push_back(states.back().head(node_count()));
        }
        for (const auto& meas : patterns_.measurements)
            lin.measurement_fields_.push_back(sys.solve(pair_currents(meas, 1.0)).head(node_count()));
        lin.voltages_.resize(measurement_count());
        for (std::size_t r = 0; r < rows_.size(); ++r)
            lin.voltages_[r] = readout(states[rows_[r].injection], rows_[r].measurement);
        auto grads = [this](const VectorXd& u) {
            std::vector<std::array<double, 2>> out(geometry_.size());
            for (std::size_t k = 0; k < geometry_.size(); ++k) out[k] = detail::element_gradient(geometry_[k], u);
            return out;
        };
        for (const auto& u : lin.injection_fields_) lin.injection_grads_.push_back(grads(u));
        for (const auto& v : lin.measurement_fields_) lin.measurement_grads_.push_back(grads(v));
        return lin;
    }

    Jacobian jacobian(const VectorXd& sigma) const { return linearize(sigma).jacobian(); }

    /// Net current leaving each electrode into the body, recovered from a
    /// solved state: (1/z_l) * integral over e_l of (U_l - u).
    VectorXd electrode_currents(const VectorXd& nodal, const VectorXd& electrode) const {
        VectorXd c = VectorXd::Zero(electrode_count());
        const auto& x = mesh_.nodes();
        for (int l = 0; l < electrode_count(); ++l)
            for (const auto& e : mesh_.electrodes()[l].edges) {
                const double len = distance(x[e[0]], x[e[1]]);
                c[l] += (electrode[l] - 0.5 * (nodal[e[0]] + nodal[e[1]])) * len / contact_.impedance[l];
            }
        return c;
    }

private:
    double readout(const VectorXd& state, int measurement) const {
        const auto& m = patterns_.measurements[measurement];
        const int n = node_count();
        return state[n + m[0]] - state[n + m[1]];
    }

    void build_static_part() {
        const int n = node_count();
        const auto& x = mesh_.nodes();
        for (int l = 0; l < electrode_count(); ++l) {
            const double inv_z = 1.0 / contact_.impedance[l];
            double length = 0.0;
            for (const auto& e : mesh_.electrodes()[l].edges) {
                const double len = distance(x[e[0]], x[e[1]]);
                length += len;
                for (int a = 0; a < 2; ++a) {
                    for (int b = 0; b < 2; ++b)
                        static_triplets_.emplace_back(e[a], e[b], inv_z * len * (a == b ? 2.0 : 1.0) / 6.0);
                    static_triplets_.emplace_back(e[a], n + l, -inv_z * len / 2.0);
                    static_triplets_.emplace_back(n + l, e[a], -inv_z * len / 2.0);
                }
            }
            static_triplets_.emplace_back(n + l, n + l, inv_z * length);
            for (int k = 0; k < electrode_count(); ++k) static_triplets_.emplace_back(n + l, n + k, 1.0);
        }
    }

    Mesh mesh_;
    PatternSet patterns_;
    ContactModel contact_;
    std::vector<detail::ElementGeometry> geometry_;
    std::vector<MeasurementRow> rows_;
    std::vector<Eigen::Triplet<double>> static_triplets_;
};

inline Jacobian Linearization::jacobian() const {
    const auto& geo = model_->geometry();
    const auto& rows = model_->rows();
    Jacobian jac;
    jac.matrix.setZero(static_cast<Eigen::Index>(rows.size()), model_->node_count());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const auto& gu = injection_grads_[rows[r].injection];
        const auto& gv = measurement_grads_[rows[r].measurement];
        auto row = jac.matrix.row(static_cast<Eigen::Index>(r));
        for (std::size_t k = 0; k < geo.size(); ++k) {
            const double v = -geo[k].area * (gu[k][0] * gv[k][0] + gu[k][1] * gv[k][1]) / 3.0;
            for (int a = 0; a < 3; ++a) row[geo[k].nodes[a]] += v;
        }
    }
    return jac;
}

inline VectorXd Linearization::jacobian_transpose_product(const VectorXd& g) const {
    const auto& geo = model_->geometry();
    const auto& rows = model_->rows();
    if (g.size() != static_cast<Eigen::Index>(rows.size()))
        throw DomainError("jacobian_transpose_product: gradient length mismatch");
    const std::size_t ne = geo.size();
    VectorXd out = VectorXd::Zero(model_->node_count());
    std::vector<std::array<double, 2>> w(ne);
    std::size_t r = 0;
    for (std::size_t inj = 0; inj < injection_grads_.size(); ++inj) {
        std::fill(w.begin(), w.end(), std::array<double, 2>{0.0, 0.0});
        bool any = false;
        for (; r < rows.size() && rows[r].injection == static_cast<int>(inj); ++r) {
            const double gm = g[static_cast<Eigen::Index>(r)];
            if (gm == 0.0) continue;
            any = true;
            const auto& gv = measurement_grads_[rows[r].measurement];
            for (std::size_t k = 0; k < ne; ++k) {
                w[k][0] += gm * gv[k][0];
                w[k][1] += gm * gv[k][1];
            }
        }
        if (!any) continue;
        const auto& gu = injection_grads_[inj];
        for (std::size_t k = 0; k < ne; ++k) {
            const double v = -geo[k].area * (gu[k][0] * w[k][0] + gu[k][1] * w[k][1]) / 3.0;
            for (int a = 0; a < 3; ++a) out[geo[k].nodes[a]] += v;
        }
    }
    return out;
}

// Free-function forms of the forward operations.

inline CemSystem assemble_system(const Mesh& mesh, const VectorXd& sigma, const ContactModel& contact) {
    return ForwardModel(mesh, adjacent_patterns(mesh.electrode_count()), contact).assemble(sigma);
}

inline ForwardResult solve_forward(const Mesh& mesh, const VectorXd& sigma, const PatternSet& patterns,
                                   const ContactModel& contact, bool keep_potentials = false) {
    return ForwardModel(mesh, patterns, contact).solve(sigma, keep_potentials);
}

inline Jacobian jacobian(const Mesh& mesh, const VectorXd& sigma, const PatternSet& patterns,
                         const ContactModel& contact) {
    return ForwardModel(mesh, patterns, contact).jacobian(sigma);
}

// ---------------------------------------------------------------------------
// Measurement file:
// {"patterns": {"injections": [[s,t],...], "measurements": [[p,q],...], "current_mA": 1.0},
//  "voltages": [...], "meta": {"snr_db": 60}}

struct MeasurementData {
    PatternSet patterns;
    VectorXd voltages;
    /// Noise-free voltages, when the file came from a simulation.
    VectorXd voltages_clean;
    json meta = json::object();
};

inline json patterns_to_json(const PatternSet& p) {
    return json{{"injections", p.injections},
                {"measurements", p.measurements},
                {"current_mA", p.current_mA},
                {"drop_shared_electrodes", p.drop_shared_electrodes}};
}

inline PatternSet patterns_from_json(const json& j) {
    PatternSet p;
    try {
        p.injections = io::require(j, "injections").get<std::vector<ElectrodePair>>();
        p.measurements = io::require(j, "measurements").get<std::vector<ElectrodePair>>();
        p.current_mA = j.value("current_mA", 1.0);
        p.drop_shared_electrodes = j.value("drop_shared_electrodes", true);
    } catch (const json::exception& e) {
        throw IoError(std::string("patterns: ") + e.what());
    }
    return p;
}

inline std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

inline VectorXd to_eigen(const std::vector<double>& v) {
    return Eigen::Map<const VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json measurement_to_json(const MeasurementData& d) {
    json j{{"patterns", patterns_to_json(d.patterns)}, {"voltages", to_std(d.voltages)}, {"meta", d.meta}};
    if (d.voltages_clean.size() > 0) j["voltages_clean"] = to_std(d.voltages_clean);
    return j;
}

inline MeasurementData measurement_from_json(const json& j) {
    MeasurementData d;
    d.patterns = patterns_from_json(io::require(j, "patterns"));
    d.voltages = to_eigen(io::to_vector<double>(io::require(j, "voltages"), "voltages"));
    if (j.contains("voltages_clean")) d.voltages_clean = to_eigen(io::to_vector<double>(j["voltages_clean"], "voltages_clean"));
    if (j.contains("meta")) d.meta = j["meta"];
    const auto expected = measurement_rows(d.patterns).size();
    if (static_cast<std::size_t>(d.voltages.size()) != expected)
        throw IoError("measurements: " + std::to_string(d.voltages.size()) + " voltages for " +
                      std::to_string(expected) + " pattern rows");
    return d;
}

inline void save_measurements(const MeasurementData& d, const std::filesystem::path& path) {
    io::write_json(path, measurement_to_json(d));
}

inline MeasurementData load_measurements(const std::filesystem::path& path) {
    return measurement_from_json(io::read_json(path));
}

} // namespace eit
