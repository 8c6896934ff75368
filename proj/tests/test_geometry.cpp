#include "cutfem/geometry.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace cutfem;

namespace {

const Tet kRef{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// Closed form of x^a y^b z^c over the reference tetrahedron.
double tet_monomial(int a, int b, int c) { return factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3); }

// Closed form of x^a y^b over the reference triangle.
double tri_monomial(int a, int b) { return factorial(a) * factorial(b) / factorial(a + b + 2); }

Tet random_tet(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (;;) {
        Tet t;
        for (auto& v : t) v = Vec3(u(rng), u(rng), u(rng));
        if (volume(t) > 1e-3) return t;
    }
}

// Indicator volume of {phi_h <= 0} inside t by uniform sampling.
double monte_carlo_inside_volume(const Tet& t, const std::array<double, 4>& phi, int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    int hits = 0;
    for (int i = 0; i < n; ++i) {
        // Spacings of three sorted uniforms are uniform on the simplex.
        std::array<double, 3> s{u(rng), u(rng), u(rng)};
        std::sort(s.begin(), s.end());
        const double l0 = s[0], a = s[1] - s[0], b = s[2] - s[1], c = 1.0 - s[2];
        const double value = l0 * phi[0] + a * phi[1] + b * phi[2] + c * phi[3];
        hits += value <= 0.0 ? 1 : 0;
    }
    return volume(t) * hits / n;
}

}  // namespace

TEST(LevelSet, Examples) {
    const LevelSet unit(Vec3::Zero(), 1.0);
    EXPECT_DOUBLE_EQ(levelset_eval(unit, Vec3(1, 0, 0)), 0.0);
    EXPECT_DOUBLE_EQ(levelset_eval(unit, Vec3(0, 0, 0)), -1.0);
    const LevelSet shifted(Vec3(0.001, 0.002, 0.003), 1.0);
    EXPECT_NEAR(levelset_eval(shifted, Vec3(1.501, 0.002, 0.003)), 0.5, 1e-15);
    EXPECT_THROW(LevelSet(Vec3::Zero(), 0.0), Error);
    EXPECT_TRUE(is_inside_value(0.0));
}

TEST(Quadrature, WeightsAndPointsAreValid) {
    for (int d = 1; d <= 4; ++d) {
        const auto q = simplex_quadrature(d);
        double sum = 0.0;
        for (std::size_t k = 0; k < q.size(); ++k) {
            sum += q.weights[k];
            double s = 0.0;
            for (double l : q.points[k]) {
                EXPECT_GE(l, 0.0);
                EXPECT_LE(l, 1.0);
                s += l;
            }
            EXPECT_NEAR(s, 1.0, 1e-15);
        }
        EXPECT_NEAR(sum, 1.0 / 6.0, 1e-15);
        EXPECT_GE(q.exactness_degree, d);

        const auto t = triangle_quadrature(d);
        sum = 0.0;
        for (double w : t.weights) sum += w;
        EXPECT_NEAR(sum, 0.5, 1e-15);
    }
    const auto mid = simplex_quadrature(1);
    ASSERT_EQ(mid.size(), 1u);
    for (double l : mid.points[0]) EXPECT_DOUBLE_EQ(l, 0.25);
    EXPECT_THROW(simplex_quadrature(0), Error);
    EXPECT_THROW(simplex_quadrature(5), Error);
    EXPECT_THROW(triangle_quadrature(7), Error);
}

TEST(Quadrature, DegreeTwoMonomial) {
    const auto q = simplex_quadrature(2);
    double s = 0.0, one = 0.0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        const Vec3 x = map_point(kRef, q.points[k]);
        s += q.weights[k] * x[0] * x[1];
        one += q.weights[k];
    }
    EXPECT_NEAR(s, 1.0 / 120.0, 1e-16);
    EXPECT_NEAR(one, 1.0 / 6.0, 1e-16);
}

TEST(Quadrature, RandomPolynomialsIntegratedExactly) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> coef(-1.0, 1.0);
    for (int d = 1; d <= 4; ++d) {
        const auto q = simplex_quadrature(d);
        const auto t = triangle_quadrature(d);
        for (int trial = 0; trial < 20; ++trial) {
            double exact = 0.0, approx = 0.0, scale = 0.0;
            for (int a = 0; a <= d; ++a)
                for (int b = 0; a + b <= d; ++b)
                    for (int c = 0; a + b + c <= d; ++c) {
                        const double k = coef(rng);
                        exact += k * tet_monomial(a, b, c);
                        scale += std::abs(k) * tet_monomial(a, b, c);
                        for (std::size_t i = 0; i < q.size(); ++i) {
                            const Vec3 x = map_point(kRef, q.points[i]);
                            approx += q.weights[i] * k * std::pow(x[0], a) * std::pow(x[1], b) * std::pow(x[2], c);
                        }
                    }
            EXPECT_NEAR(approx, exact, 1e-13 * scale) << "volume degree " << d;

            const Tri ref{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
            exact = approx = scale = 0.0;
            for (int a = 0; a <= d; ++a)
                for (int b = 0; a + b <= d; ++b) {
                    const double k = coef(rng);
                    exact += k * tri_monomial(a, b);
                    scale += std::abs(k) * tri_monomial(a, b);
                    for (std::size_t i = 0; i < t.size(); ++i) {
                        const Vec3 x = map_point(ref, t.points[i]);
                        approx += t.weights[i] * k * std::pow(x[0], a) * std::pow(x[1], b);
                    }
                }
            EXPECT_NEAR(approx, exact, 1e-13 * scale) << "surface degree " << d;
        }
    }
}

TEST(CutTet, UncutCases) {
    const auto inside = decompose_cut_tet(kRef, {-1, -2, -3, -4});
    ASSERT_EQ(inside.inside_simplices.size(), 1u);
    EXPECT_NEAR(inside.inside_volume(), 1.0 / 6.0, 1e-15);
    EXPECT_TRUE(inside.interface_triangles.empty());

    const auto outside = decompose_cut_tet(kRef, {1, 2, 3, 4});
    EXPECT_TRUE(outside.inside_simplices.empty());
    EXPECT_TRUE(outside.interface_triangles.empty());
}

TEST(CutTet, SingleNegativeCorner) {
    const auto cut = decompose_cut_tet(kRef, {-1, 1, 1, 1});
    EXPECT_NEAR(cut.inside_volume(), 1.0 / 48.0, 1e-15);
    std::mt19937_64 rng(3);
    EXPECT_NEAR(monte_carlo_inside_volume(kRef, {-1, 1, 1, 1}, 400000, rng), 1.0 / 48.0, 5e-4);

    ASSERT_EQ(cut.interface_triangles.size(), 1u);
    const auto& tri = cut.interface_triangles[0];
    // Cross-product area of the midpoint triangle.
    const Vec3 a(0.5, 0, 0), b(0, 0.5, 0), c(0, 0, 0.5);
    EXPECT_NEAR(area(tri.vertices), 0.5 * (b - a).cross(c - a).norm(), 1e-15);
    EXPECT_NEAR(area(tri.vertices), std::sqrt(3.0) / 8.0, 1e-15);
    for (const Vec3& v : {a, b, c}) {
        bool found = false;
        for (const Vec3& w : tri.vertices) found = found || (v - w).norm() < 1e-15;
        EXPECT_TRUE(found);
    }
    EXPECT_NEAR(tri.normal.norm(), 1.0, 1e-15);
    EXPECT_GT(tri.normal.dot(Vec3(1, 1, 1)), 0.0);
}

TEST(CutTet, DegenerateParentThrows) {
    const Tet flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
    EXPECT_THROW(decompose_cut_tet(flat, {-1, 1, 1, 1}), Error);
}

TEST(CutTet, ZeroValueCountsAsInside) {
    const auto cut = decompose_cut_tet(kRef, {0, 1, 1, 1});
    EXPECT_LE(cut.inside_volume(), 1e-15);
    const auto all = decompose_cut_tet(kRef, {0, 0, 0, 0});
    EXPECT_NEAR(all.inside_volume(), 1.0 / 6.0, 1e-15);
}

TEST(CutTet, PartitionAndInterfaceProperties) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const Tet t = random_tet(rng);
        std::array<double, 4> phi, neg;
        for (int i = 0; i < 4; ++i) {
            phi[std::size_t(i)] = u(rng);
            neg[std::size_t(i)] = -phi[std::size_t(i)];
        }
        const auto in = decompose_cut_tet(t, phi);
        const auto out = decompose_cut_tet(t, neg);
        EXPECT_NEAR(in.inside_volume() + out.inside_volume(), volume(t), 1e-12 * volume(t));
        EXPECT_LE(in.inside_volume(), volume(t) * (1 + 1e-12));
        for (const Tet& s : in.inside_simplices) EXPECT_GT(signed_volume(s), 0.0);

        EXPECT_NEAR(in.interface_area(), out.interface_area(), 1e-12);
        const Eigen::Matrix<double, 4, 3> g = barycentric_gradients(t);
        const Vec3 grad = g.transpose() * Eigen::Vector4d(phi[0], phi[1], phi[2], phi[3]);
        for (const auto& tri : in.interface_triangles) {
            EXPECT_NEAR(tri.normal.norm(), 1.0, 1e-12);
            EXPECT_GT(tri.normal.dot(grad), 0.0);
            for (const Vec3& v : tri.vertices) {
                const Eigen::Vector4d l = barycentric_coordinates(t, v);
                EXPECT_NEAR(l.dot(Eigen::Vector4d(phi[0], phi[1], phi[2], phi[3])), 0.0, 1e-12);
            }
        }
        // Interfaces of phi and -phi coincide as point sets, with flipped normals.
        if (!in.interface_triangles.empty() && !out.interface_triangles.empty()) {
            Vec3 ci = Vec3::Zero(), co = Vec3::Zero();
            for (const auto& tri : in.interface_triangles) ci += area(tri.vertices) * (tri.vertices[0] + tri.vertices[1] + tri.vertices[2]);
            for (const auto& tri : out.interface_triangles) co += area(tri.vertices) * (tri.vertices[0] + tri.vertices[1] + tri.vertices[2]);
            EXPECT_NEAR((ci - co).norm(), 0.0, 1e-12);
            EXPECT_NEAR(in.interface_triangles[0].normal.dot(out.interface_triangles[0].normal), -1.0, 1e-12);
        }
    }
}

TEST(CutTet, MonteCarloVolumeOnRandomCuts) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const Tet t = random_tet(rng);
        const std::array<double, 4> phi{u(rng), u(rng), u(rng), u(rng)};
        const double mc = monte_carlo_inside_volume(t, phi, 200000, rng);
        EXPECT_NEAR(decompose_cut_tet(t, phi).inside_volume(), mc, 0.01 * volume(t));
    }
}

TEST(Simplex, BarycentricGradients) {
    const auto g = barycentric_gradients(kRef);
    EXPECT_TRUE(g.row(0).isApprox(Eigen::RowVector3d(-1, -1, -1)));
    EXPECT_TRUE(g.row(1).isApprox(Eigen::RowVector3d(1, 0, 0)));
    EXPECT_NEAR(g.colwise().sum().norm(), 0.0, 1e-15);
    const Tet flat{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(1, 1, 0)};
    EXPECT_THROW(barycentric_gradients(flat), Error);
}
