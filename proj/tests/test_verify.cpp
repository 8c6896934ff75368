#include "cutfem/verify.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace cutfem;

namespace {

const Vec3 kCenter(0.001, 0.002, 0.003);

struct System {
    ActiveMesh mesh;
    SubspaceSplit split;
    SparseMatrix A;
};

System make_system(int level) {
    System s{build_active_mesh(level, LevelSet(kCenter, 1.0)), {}, {}};
    s.split = classify_dofs(s.mesh);
    s.A = assemble_system(s.mesh, s.split, NitscheParams{}, ManufacturedSolution{kCenter}).A;
    return s;
}

// Simpson's rule on [0, 1].
template <typename F>
double simpson(F&& f, int n = 2000) {
    const double h = 1.0 / n;
    double s = f(0.0) + f(1.0);
    for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(i * h);
    return s * h / 3.0;
}

}  // namespace

TEST(RatioInterval, Tracking) {
    RatioInterval r;
    EXPECT_FALSE(r.valid());
    r.add(2.0);
    r.add(0.5);
    r.add(1.0);
    EXPECT_EQ(r.min, 0.5);
    EXPECT_EQ(r.max, 2.0);
    EXPECT_TRUE(r.valid());
    EXPECT_DOUBLE_EQ(variation({2.0, 3.0, 4.0}), 2.0);
    EXPECT_EQ(variation({}), 1.0);
}

TEST(MatrixLemma, HandExamplesAndRandomTrials) {
    // diag(1, 4), x = (1, 1), y = (1, -1): |<Mx,y>| = 3, bound (3/4) * 5 = 15/4.
    const Eigen::Matrix2d m = Eigen::Vector2d(1.0, 4.0).asDiagonal();
    const Eigen::Vector2d x(1, 1), y(1, -1);
    EXPECT_DOUBLE_EQ(std::abs(x.dot(m * y)), 3.0);
    EXPECT_DOUBLE_EQ((1.0 - 1.0 / 4.0) * std::sqrt(x.dot(m * x) * y.dot(m * y)), 15.0 / 4.0);

    std::mt19937_64 rng(1);
    for (int dim : {2, 3, 5, 20}) {
        const auto rep = check_matrix_lemma(dim, 100, rng);
        EXPECT_TRUE(rep.holds) << dim;
        EXPECT_EQ(rep.trials, 100);
        EXPECT_LE(rep.max_ratio, 1.0 + 1e-12);
        EXPECT_GT(rep.max_ratio, 0.0);
    }
}

TEST(StrengthenedCauchySchwarz, BoundAndMeasuredRatios) {
    EXPECT_NEAR(strengthened_cs_bound(), 0.8, 1e-14);
    // For M proportional to I + 11^T and supports of sizes k0, k1 the supremum is
    // 1 / sqrt((1 + 1/k0)(1 + 1/k1)), at most 2/3 when k0 + k1 = 4.
    std::mt19937_64 rng(2);
    for (int level = 0; level <= 2; ++level) {
        const ActiveMesh mesh = build_active_mesh(level, LevelSet(kCenter, 1.0));
        const SubspaceSplit split = classify_dofs(mesh);
        const auto rep = check_strengthened_cs(mesh, split, 50, rng);
        EXPECT_GT(rep.elements, 0u);
        EXPECT_LE(rep.max_ratio, 2.0 / 3.0 + 1e-12);
        EXPECT_LE(rep.max_ratio, rep.bound + 1e-10);
        EXPECT_GT(rep.max_ratio, 0.4);
    }
}

TEST(StripForms, EquivalenceAndEstimateAreFinite) {
    const System s = make_system(2);
    std::mt19937_64 rng(3);
    const auto eq = measure_norm_equivalence_strip(s.mesh, s.split, NitscheParams{}, 30, rng);
    EXPECT_TRUE(eq.interior.valid());
    EXPECT_TRUE(eq.boundary.valid());
    const double est = check_estfund(s.mesh, s.split, NitscheParams{}, 30, rng);
    EXPECT_TRUE(std::isfinite(est));
    EXPECT_GT(est, 0.0);
}

TEST(SplittingConstant, BlockDiagonalGivesOne) {
    const System s = make_system(1);
    const BlockPartition p = extract_blocks(s.A, s.split);
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < s.A.rows(); ++i)
        for (std::size_t k = s.A.row_ptr()[i]; k < s.A.row_ptr()[i + 1]; ++k) {
            const std::size_t j = s.A.col_idx()[k];
            if ((i < p.n0) == (j < p.n0)) t.push_back({i, j, s.A.values()[k]});
        }
    const SparseMatrix d = SparseMatrix::from_triplets(s.A.rows(), s.A.cols(), std::move(t));
    std::mt19937_64 rng(4);
    const auto est = estimate_splitting_constant(d, s.split, 5, rng);
    EXPECT_NEAR(est.K_a, 1.0, 1e-10);
    EXPECT_NEAR(est.sampled_max, 1.0, 1e-10);
}

TEST(SplittingConstant, LanczosMatchesDenseGeneralizedEigenvalue) {
    const System s = make_system(2);
    ASSERT_GT(s.A.rows(), kDenseEigenLimit);
    std::mt19937_64 rng(5);
    const auto est = estimate_splitting_constant(s.A, s.split, 40, rng);
    EXPECT_FALSE(est.dense);

    const Eigen::MatrixXd A = s.A.to_dense();
    const auto n0 = Eigen::Index(s.split.N0());
    Eigen::MatrixXd D = A;
    D.topRightCorner(n0, A.cols() - n0).setZero();
    D.bottomLeftCorner(A.rows() - n0, n0).setZero();
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(D, A, Eigen::EigenvaluesOnly);
    const double exact = es.eigenvalues().maxCoeff();
    EXPECT_GT(exact, 1.0);
    EXPECT_NEAR(est.K_a, exact, 1e-6 * exact);
    EXPECT_LE(est.sampled_max, exact * (1 + 1e-10));
    EXPECT_GE(est.sampled_max, 0.95 * exact);
}

TEST(FormRatio, ScaledForms) {
    const SparseMatrix b = SparseMatrix::from_triplets(3, 3, {{0, 0, 1.0}, {1, 1, 2.0}, {2, 2, 3.0}});
    std::mt19937_64 rng(6);
    const auto r = sample_form_ratio(b + b, b, 20, rng);
    EXPECT_NEAR(r.min, 2.0, 1e-14);
    EXPECT_NEAR(r.max, 2.0, 1e-14);
}

TEST(Errors, NormOfExactSolutionOverTheBall) {
    // u = r^3 sin^3(theta) sin(3 phi) exp(1 - r^2), so ||u||^2 = (32 pi / 35) int_0^1 r^8 exp(2 - 2 r^2) dr.
    const double radial = simpson([](double r) { return std::pow(r, 8) * std::exp(2.0 - 2.0 * r * r); });
    const double exact = std::sqrt(32.0 * std::numbers::pi / 35.0 * radial);
    const System s = make_system(3);
    const ErrorNorms e = compute_errors(s.mesh, s.split, Vector::Zero(Eigen::Index(s.split.N())), ManufacturedSolution{kCenter});
    EXPECT_NEAR(e.l2, exact, 0.02 * exact);
    EXPECT_NEAR(e.h1, std::hypot(e.l2, e.h1_semi), 1e-14);
    EXPECT_GT(e.l2_omega_h, e.l2);
}

TEST(Errors, InterpolantConvergesAtSecondOrder) {
    const ManufacturedSolution ms{kCenter};
    double last_l2 = 0.0, last_h1 = 0.0;
    for (int level = 1; level <= 3; ++level) {
        const ActiveMesh mesh = build_active_mesh(level, LevelSet(kCenter, 1.0));
        const SubspaceSplit split = classify_dofs(mesh);
        const Vector ui = interpolate(mesh, split, [&](const Vec3& x) { return ms.u(x); });
        const ErrorNorms e = compute_errors(mesh, split, ui, ms);
        if (level > 1) {
            EXPECT_GT(std::log2(last_l2 / e.l2), 1.7) << level;
            EXPECT_GT(std::log2(last_h1 / e.h1_semi), 0.8) << level;
        }
        last_l2 = e.l2;
        last_h1 = e.h1_semi;
    }
}
