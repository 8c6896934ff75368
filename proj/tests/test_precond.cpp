#include "cutfem/assembly.hpp"
#include "cutfem/precond.hpp"

#include <gtest/gtest.h>

#include <map>
#include <random>

using namespace cutfem;

namespace {

const Vec3 kCenter(0.001, 0.002, 0.003);

struct System {
    ActiveMesh mesh;
    SubspaceSplit split;
    SparseMatrix A;
    Vector b;
};

System make_system(int level, const Vec3& c = kCenter, NitscheParams p = {}) {
    System s{build_active_mesh(level, LevelSet(c, 1.0)), {}, {}, {}};
    s.split = classify_dofs(s.mesh);
    auto sys = assemble_system(s.mesh, s.split, p, ManufacturedSolution{c});
    s.A = std::move(sys.A);
    s.b = std::move(sys.b);
    return s;
}

const System& cached(int level) {
    static std::map<int, System> cache;
    auto it = cache.find(level);
    if (it == cache.end()) it = cache.emplace(level, make_system(level)).first;
    return it->second;
}

Vector random_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g;
    Vector v = Vector::Zero(Eigen::Index(n));
    for (auto& x : v) x = g(rng);
    return v;
}

int iterations(const System& s, const PreconditionerSpec& spec) {
    const BlockPreconditioner p(spec, s.A, s.split, &s.mesh);
    return pcg(s.A, s.b, p.as_function(), 1e-6, 2000).second.iterations;
}

}  // namespace

TEST(Blocks, ExtractionMatchesDense) {
    Eigen::MatrixXd d(4, 4);
    d << 4, 1, 0, 1, 1, 4, 0, 1, 0, 0, 4, 1, 1, 1, 1, 4;
    const BlockPartition b = extract_blocks(SparseMatrix::from_dense(d), 3);
    EXPECT_EQ(b.n0, 3u);
    EXPECT_EQ(b.n1, 1u);
    EXPECT_EQ((b.A0.to_dense() - d.topLeftCorner(3, 3)).norm(), 0.0);
    EXPECT_EQ((b.A1.to_dense() - d.bottomRightCorner(1, 1)).norm(), 0.0);

    const BlockPartition empty = extract_blocks(SparseMatrix::from_dense(d), 0);
    EXPECT_EQ(empty.A0.rows(), 0u);
    EXPECT_EQ(empty.A1.rows(), 4u);
}

TEST(Blocks, LevelOneSizes) {
    const System& s = cached(1);
    const BlockPartition b = extract_blocks(s.A, s.split);
    EXPECT_EQ(b.n0, 81u);
    EXPECT_EQ(b.n1, 140u);
    EXPECT_EQ(b.A0.rows(), 81u);
    EXPECT_EQ(b.A1.cols(), 140u);
}

TEST(PreconditionerSpec, Names) {
    EXPECT_EQ(PreconditionerSpec::from_name("sgs").kind, PreconditionerSpec::Kind::SGSFull);
    EXPECT_EQ(PreconditionerSpec::from_name("pa").b1, PreconditionerSpec::Boundary::Exact);
    EXPECT_EQ(PreconditionerSpec::from_name("pd").b1, PreconditionerSpec::Boundary::SGS);
    EXPECT_EQ(PreconditionerSpec::from_name("pb").b0, PreconditionerSpec::Interior::MGVCycle);
    EXPECT_EQ(PreconditionerSpec::from_name("pj").b1, PreconditionerSpec::Boundary::Jacobi);
    EXPECT_THROW(PreconditionerSpec::from_name("ilu"), Error);
}

TEST(BlockPreconditioner, ZeroInteriorBlock) {
    // A single strip cell: every dof is a boundary dof.
    const Lattice lat{0, 4, 1.5};
    const CellIndex c{0, {1, 1, 1}, 0};
    const ActiveMesh mesh = make_active_mesh(lat, LevelSet(lat.coords(c.cube), 0.9 * lat.spacing()), {lat.cell_id(c)});
    const SubspaceSplit split = classify_dofs(mesh);
    ASSERT_EQ(split.N0(), 0u);
    const auto sys = assemble_system(mesh, split, NitscheParams{}, ManufacturedSolution{});
    for (const char* name : {"pa", "pd", "pb"}) {
        const BlockPreconditioner p(PreconditionerSpec::from_name(name), sys.A, split, &mesh);
        Vector z;
        p.apply(Vector::Ones(Eigen::Index(split.N())), z);
        EXPECT_EQ(z.size(), Eigen::Index(split.N()));
        EXPECT_TRUE(z.allFinite());
    }
}

TEST(BlockPreconditioner, ExactBlocksMatchDenseSolve) {
    const System& s = cached(1);
    const BlockPreconditioner p(PreconditionerSpec::pa(), s.A, s.split, &s.mesh);
    const Eigen::MatrixXd A = s.A.to_dense();
    const auto n0 = Eigen::Index(s.split.N0()), n1 = Eigen::Index(s.split.N1());
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(A.rows(), A.cols());
    D.topLeftCorner(n0, n0) = A.topLeftCorner(n0, n0);
    D.bottomRightCorner(n1, n1) = A.bottomRightCorner(n1, n1);
    std::mt19937_64 rng(3);
    const Vector r = random_vector(rng, s.split.N());
    Vector z;
    p.apply(r, z);
    const Vector expected = D.llt().solve(r);
    EXPECT_LE((z - expected).norm(), 1e-10 * expected.norm());
}

TEST(BlockPreconditioner, SymmetricAndPositive) {
    const System& s = cached(2);
    std::mt19937_64 rng(5);
    for (const char* name : {"sgs", "pa", "pd", "pb", "pj"}) {
        const BlockPreconditioner p(PreconditionerSpec::from_name(name), s.A, s.split, &s.mesh);
        for (int k = 0; k < 20; ++k) {
            const Vector x = random_vector(rng, s.split.N()), y = random_vector(rng, s.split.N());
            Vector px, py;
            p.apply(x, px);
            p.apply(y, py);
            EXPECT_NEAR(px.dot(y), x.dot(py), 1e-10 * px.norm() * y.norm()) << name;
            EXPECT_GT(px.dot(x), 0.0) << name;
        }
        Vector z;
        p.apply(Vector::Zero(Eigen::Index(s.split.N())), z);
        EXPECT_EQ(z.norm(), 0.0) << name;
    }
}

TEST(BlockPreconditioner, MultigridNeedsMesh) {
    const System& s = cached(1);
    EXPECT_THROW(BlockPreconditioner(PreconditionerSpec::pb(), s.A, s.split), Error);
}

TEST(Multigrid, ProlongationReproducesConstantsAndCoarseHats) {
    const System& s = cached(3);
    const BlockPartition b = extract_blocks(s.A, s.split);
    const MGHierarchy h = build_mg_hierarchy(s.mesh, s.split, b.A0);
    ASSERT_GE(h.num_levels(), 2u);
    for (std::size_t i = 0; i + 1 < h.num_levels(); ++i) {
        const MGLevel& C = h.levels[i];
        const MGLevel& F = h.levels[i + 1];
        const SparseMatrix& P = C.prolongation;
        EXPECT_EQ(P.rows(), F.dofs.size());
        EXPECT_EQ(P.cols(), C.dofs.size());
        const Vector pone = P * Vector::Ones(Eigen::Index(C.dofs.size()));
        EXPECT_LE(pone.maxCoeff(), 1.0 + 1e-15);
        EXPECT_GE(pone.minCoeff(), 0.0);

        // Coarse hats evaluated at fine vertex coordinates.
        const double hc = C.lattice.spacing();
        std::mt19937_64 rng(17 + i);
        std::uniform_int_distribution<std::size_t> pick(0, C.dofs.size() - 1);
        for (int k = 0; k < 10; ++k) {
            const std::size_t c = pick(rng);
            const Vector e = Vector::Unit(Eigen::Index(C.dofs.size()), Eigen::Index(c));
            const Vector pe = P * e;
            const Vec3 xc = C.lattice.vertex_coords(C.dofs[c]);
            for (std::size_t r = 0; r < F.dofs.size(); ++r) {
                // Kuhn hat in lattice units: 1 - (max(d, 0) - min(d, 0)), clipped at zero.
                const Vec3 d = (F.lattice.vertex_coords(F.dofs[r]) - xc) / hc;
                const double dmax = std::max({d[0], d[1], d[2], 0.0});
                const double dmin = std::min({d[0], d[1], d[2], 0.0});
                const double hat = std::max(0.0, 1.0 - (dmax - dmin));
                EXPECT_NEAR(pe[Eigen::Index(r)], hat, 1e-12);
            }
        }
    }
}

TEST(Multigrid, GalerkinOperatorsAndVCycleContraction) {
    const System& s = cached(3);
    const BlockPartition b = extract_blocks(s.A, s.split);
    const MGHierarchy h = build_mg_hierarchy(s.mesh, s.split, b.A0);
    std::mt19937_64 rng(23);
    for (std::size_t i = 0; i < h.num_levels(); ++i) {
        const SparseMatrix& A = *h.levels[i].A;
        EXPECT_LE(A.asymmetry(), 1e-12 * A.max_abs());
        EXPECT_NO_THROW(SparseCholesky{A});
        if (i + 1 < h.num_levels()) {
            const SparseMatrix& P = h.levels[i].prolongation;
            const SparseMatrix& Af = *h.levels[i + 1].A;
            const Vector x = random_vector(rng, A.rows());
            EXPECT_NEAR(A.quadratic_form(x), Af.quadratic_form(P * x), 1e-10 * A.quadratic_form(x));
        }
    }

    // Error propagation E = I - B^{-1} A0 contracts in the energy norm.
    const SparseMatrix& A0 = b.A0;
    Vector e = random_vector(rng, A0.rows());
    double rate = 0.0;
    for (int k = 0; k < 30; ++k) {
        Vector z;
        h.apply(A0 * e, z);
        const Vector next = e - z;
        rate = std::sqrt(A0.quadratic_form(next) / A0.quadratic_form(e));
        e = next / std::sqrt(A0.quadratic_form(next));
    }
    EXPECT_LT(rate, 1.0);
    EXPECT_LT(rate, 0.6);
}

TEST(Multigrid, SingleLevelIsExact) {
    const System& s = cached(2);
    const BlockPartition b = extract_blocks(s.A, s.split);
    const MGHierarchy h = build_mg_hierarchy(s.mesh, s.split, b.A0, 1);
    EXPECT_EQ(h.num_levels(), 1u);
    std::mt19937_64 rng(29);
    const Vector r = random_vector(rng, b.A0.rows());
    Vector z;
    h.apply(r, z);
    EXPECT_LE((b.A0 * z - r).norm(), 1e-10 * r.norm());
}

TEST(Multigrid, MoreCyclesConvergeToExactSolve) {
    const System& s = cached(3);
    const BlockPartition b = extract_blocks(s.A, s.split);
    std::mt19937_64 rng(31);
    const Vector r = random_vector(rng, b.A0.rows());
    const Vector exact = SparseCholesky(b.A0).solve(r);
    double last = std::numeric_limits<double>::infinity();
    for (int cycles : {1, 2, 4, 8}) {
        const MGHierarchy h = build_mg_hierarchy(s.mesh, s.split, b.A0, 0, cycles);
        Vector z;
        h.apply(r, z);
        const double err = std::sqrt(b.A0.quadratic_form(z - exact));
        EXPECT_LT(err, last);
        last = err;
    }
    EXPECT_LT(last, 1e-3 * std::sqrt(b.A0.quadratic_form(exact)));
}

TEST(Multigrid, RejectsMismatchedBlock) {
    const System& s = cached(1);
    EXPECT_THROW(build_mg_hierarchy(s.mesh, s.split, SparseMatrix::identity(3)), Error);
}

TEST(Iterations, PreconditionersAtLevelThree) {
    const System& s = cached(3);
    EXPECT_NEAR(iterations(s, PreconditionerSpec::pa()), 13, 2);
    EXPECT_NEAR(iterations(s, PreconditionerSpec::pd()), 16, 3);
    const int pb = iterations(s, PreconditionerSpec::pb());
    EXPECT_LE(pb, iterations(s, PreconditionerSpec::pd()) + 4);
    EXPECT_LT(iterations(s, PreconditionerSpec::pa()), iterations(s, PreconditionerSpec::sgs()));
}

TEST(Iterations, MultigridCloseToExactInteriorSolve) {
    for (int level = 2; level <= 3; ++level) {
        const System& s = cached(level);
        EXPECT_LE(iterations(s, PreconditionerSpec::pb()), iterations(s, PreconditionerSpec::pd()) + 4) << level;
    }
}
