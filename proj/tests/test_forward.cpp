#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "eit/forward.hpp"
#include "eit/rng.hpp"

using namespace eit;

namespace {

const Mesh& small_mesh() {
    static const Mesh m = generate_disk_mesh({400, 16, 0.5});
    return m;
}

VectorXd random_sigma(std::size_t n, Rng& rng, double lo = 0.5, double hi = 2.0) {
    VectorXd s(n);
    for (auto& v : s) v = rng.uniform(lo, hi);
    return s;
}

double relative_inf(const VectorXd& a, const VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>() / b.lpNorm<Eigen::Infinity>();
}

} // namespace

TEST(Patterns, DefaultHas54UniqueInjections) {
    const auto p = default_patterns(16, 54);
    EXPECT_EQ(p.injections.size(), 54u);
    EXPECT_NO_THROW(p.validate(16));
    EXPECT_EQ(p.injections[0], (ElectrodePair{0, 1}));
    EXPECT_EQ(p.injections[16], (ElectrodePair{0, 2}));
    EXPECT_EQ(p.injections[48], (ElectrodePair{0, 4}));
    // 13 adjacent measurements survive per adjacent injection.
    EXPECT_EQ(measurement_rows(adjacent_patterns(16)).size(), 16u * 13u);
}

TEST(Patterns, InvalidPairsRejected) {
    PatternSet p = adjacent_patterns(16);
    p.injections.push_back({1, 0});
    EXPECT_THROW(p.validate(16), ConfigError);
    p = adjacent_patterns(16);
    p.injections[0] = {3, 3};
    EXPECT_THROW(p.validate(16), ConfigError);
    p = adjacent_patterns(16);
    p.measurements[0] = {0, 16};
    EXPECT_THROW(p.validate(16), ConfigError);
    EXPECT_THROW(default_patterns(16, 121), ConfigError);
}

TEST(Assemble, HomogeneousSystemIsPositiveDefinite) {
    const auto& m = small_mesh();
    const VectorXd sigma = VectorXd::Ones(m.node_count());
    const CemSystem sys = assemble_system(m, sigma, ContactModel::uniform(16));
    const Eigen::MatrixXd K(sys.matrix());
    EXPECT_LT((K - K.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(K);
    EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Assemble, NonPositiveConductivityIsDomainError) {
    const auto& m = small_mesh();
    VectorXd sigma = VectorXd::Ones(m.node_count());
    sigma[17] = 0.0;
    EXPECT_THROW(assemble_system(m, sigma, ContactModel::uniform(16)), DomainError);
    sigma[17] = -1.0;
    EXPECT_THROW(assemble_system(m, sigma, ContactModel::uniform(16)), DomainError);
    EXPECT_THROW(assemble_system(m, VectorXd::Ones(3), ContactModel::uniform(16)), DomainError);
}

TEST(Assemble, JointScalingOfConductivityAndContact) {
    const auto& m = small_mesh();
    Rng rng(3);
    const VectorXd sigma = random_sigma(m.node_count(), rng);
    const double c = 2.5;
    const auto base = solve_forward(m, sigma, adjacent_patterns(16), ContactModel::uniform(16, 0.01), true);
    const auto scaled = solve_forward(m, c * sigma, adjacent_patterns(16), ContactModel::uniform(16, 0.01 / c), true);
    for (std::size_t i = 0; i < base.nodal_potentials.size(); ++i) {
        EXPECT_LT(relative_inf(scaled.nodal_potentials[i] * c, base.nodal_potentials[i]), 1e-10);
        EXPECT_LT(relative_inf(scaled.electrode_potentials[i] * c, base.electrode_potentials[i]), 1e-10);
    }
}

TEST(SolveForward, DrivePairCarriesLargestVoltage) {
    const auto& m = small_mesh();
    const auto p = adjacent_patterns(16, false);
    const auto res = solve_forward(m, VectorXd::Ones(m.node_count()), p, ContactModel::uniform(16));
    // Rows of injection 0 are the first 16 entries.
    Eigen::Index arg;
    res.voltages.head(16).cwiseAbs().maxCoeff(&arg);
    EXPECT_EQ(arg, 0);
}

TEST(SolveForward, ReciprocityOnRandomConductivity) {
    const auto& m = small_mesh();
    Rng rng(11);
    const auto p = adjacent_patterns(16, false);
    const auto v = solve_forward(m, random_sigma(m.node_count(), rng), p, ContactModel::uniform(16)).voltages;
    const double scale = v.cwiseAbs().maxCoeff();
    for (int i = 0; i < 16; ++i)
        for (int k = 0; k < 16; ++k) EXPECT_LT(std::abs(v[i * 16 + k] - v[k * 16 + i]), 1e-8 * scale);
}

TEST(SolveForward, ElectrodeCurrentsReproducePattern) {
    const auto& m = small_mesh();
    Rng rng(5);
    const ForwardModel model(m, default_patterns(), ContactModel::uniform(16));
    const auto res = model.solve(random_sigma(m.node_count(), rng), true);
    for (std::size_t i = 0; i < res.nodal_potentials.size(); ++i) {
        const VectorXd c = model.electrode_currents(res.nodal_potentials[i], res.electrode_potentials[i]);
        const VectorXd expected = model.pair_currents(model.patterns().injections[i], 1.0);
        EXPECT_LT((c - expected).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(res.electrode_potentials[i].sum(), 0.0, 1e-9);
    }
}

TEST(SolveForward, ConductivityScalingWithFixedContact) {
    const auto& m = small_mesh();
    const VectorXd sigma = VectorXd::Ones(m.node_count());
    const auto p = default_patterns();
    const auto v1 = solve_forward(m, sigma, p, ContactModel::uniform(16)).voltages;
    const auto v2 = solve_forward(m, 1.1 * sigma, p, ContactModel::uniform(16)).voltages;
    // Only the electrode shunting term breaks exact 1/c scaling.
    EXPECT_LT(relative_inf(v2, v1 / 1.1), 1e-2);
}

TEST(SolveForward, ConvergesUnderRefinement) {
    const auto p = default_patterns();
    std::vector<VectorXd> v;
    for (int target : {300, 700, 1500, 3200, 6500}) {
        const Mesh m = generate_disk_mesh({target, 16, 0.5});
        v.push_back(solve_forward(m, VectorXd::Ones(m.node_count()), p, ContactModel::uniform(16)).voltages);
    }
    double prev = 1e300;
    for (std::size_t k = 0; k + 1 < v.size(); ++k) {
        const double d = (v[k] - v[k + 1]).norm();
        EXPECT_LT(d, prev) << "ladder step " << k;
        prev = d;
    }
}

TEST(Jacobian, MatchesCentralDifferences) {
    const auto& m = small_mesh();
    ASSERT_LE(m.node_count(), 500u);
    const ForwardModel model(m, default_patterns(), ContactModel::uniform(16));
    Rng rng(21);
    for (int trial = 0; trial < 2; ++trial) {
        const VectorXd sigma = random_sigma(m.node_count(), rng);
        const Jacobian J = model.jacobian(sigma);
        for (int c = 0; c < 6; ++c) {
            const int n = static_cast<int>(rng.uniform() * m.node_count());
            const double h = 1e-6;
            VectorXd sp = sigma, sm = sigma;
            sp[n] += h;
            sm[n] -= h;
            const VectorXd fd = (model.solve(sp).voltages - model.solve(sm).voltages) / (2 * h);
            EXPECT_LT(relative_inf(J.matrix.col(n), fd), 1e-4) << "node " << n;
        }
    }
}

TEST(Jacobian, BoundaryDominatesCentre) {
    const auto& m = small_mesh();
    const Jacobian J = jacobian(m, VectorXd::Ones(m.node_count()), default_patterns(), ContactModel::uniform(16));
    double boundary = 0, centre = 0;
    for (std::size_t n = 0; n < m.node_count(); ++n) {
        const double r = norm(m.nodes()[n]);
        const double v = J.matrix.col(n).cwiseAbs().maxCoeff();
        if (r > 0.9) boundary = std::max(boundary, v);
        if (r < 0.3) centre = std::max(centre, v);
    }
    EXPECT_GE(boundary, 10 * centre);
}

TEST(Jacobian, FiniteForWideConductivityRange) {
    const auto& m = small_mesh();
    Rng rng(8);
    const Jacobian J = jacobian(m, random_sigma(m.node_count(), rng, 0.1, 10.0), default_patterns(), ContactModel::uniform(16));
    EXPECT_TRUE(J.matrix.allFinite());
    EXPECT_EQ(J.cols(), static_cast<Eigen::Index>(m.node_count()));
}

TEST(Vjp, TransposeContract) {
    const auto& m = small_mesh();
    Rng rng(9);
    const ForwardModel model(m, default_patterns(), ContactModel::uniform(16));
    const VectorXd sigma = random_sigma(m.node_count(), rng);
    const auto lin = model.linearize(sigma);
    const Jacobian J = lin.jacobian();

    VectorXd e = VectorXd::Zero(J.rows());
    e[7] = 1.0;
    EXPECT_EQ((vjp(J, e) - J.matrix.row(7).transpose()).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_EQ(vjp(J, VectorXd::Zero(J.rows())).cwiseAbs().maxCoeff(), 0.0);

    VectorXd u(J.rows()), v(J.cols());
    for (auto& x : u) x = rng.normal();
    for (auto& x : v) x = rng.normal();
    const double lhs = (J.matrix * v).dot(u);
    const double rhs = v.dot(vjp(J, u));
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(lhs)));

    // Adjoint contraction agrees with the explicit product.
    EXPECT_LT(relative_inf(lin.jacobian_transpose_product(u), vjp(J, u)), 1e-12);
    EXPECT_THROW(vjp(J, VectorXd::Zero(3)), DomainError);
}

TEST(MeasurementFile, RoundTripAndValidation) {
    MeasurementData d;
    d.patterns = default_patterns();
    d.voltages = VectorXd::LinSpaced(static_cast<Eigen::Index>(measurement_rows(d.patterns).size()), -1.0, 1.0 / 3.0);
    d.meta = {{"snr_db", 60}};
    const MeasurementData back = measurement_from_json(json::parse(measurement_to_json(d).dump()));
    EXPECT_EQ(back.voltages, d.voltages);
    EXPECT_EQ(back.patterns.injections, d.patterns.injections);
    EXPECT_EQ(back.meta["snr_db"], 60);

    json bad = measurement_to_json(d);
    bad["voltages"].erase(0);
    EXPECT_THROW(measurement_from_json(bad), IoError);
}
