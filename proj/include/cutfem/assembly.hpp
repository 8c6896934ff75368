#pragma once

// Stabilized Nitsche fictitious-domain discretization of the Poisson problem
// with P1 elements: element kernels, global assembly, and the comparison form
// used for norm-equivalence checks.

#include "cutfem/geometry.hpp"
#include "cutfem/mesh.hpp"
#include "cutfem/sparse.hpp"

#include <cmath>
#include <iostream>
#include <optional>

namespace cutfem {

using Matrix4 = Eigen::Matrix4d;
using Matrix8 = Eigen::Matrix<double, 8, 8>;

/// Length used for h_T (Gamma penalty) and h_F (ghost penalty).
enum class LengthScale {
    GridSpacing,  // cube side of the background lattice at the element's level
    Diameter,     // Euclidean diameter of the element or face
};

struct NitscheParams {
    double gamma = 10.0;  // Nitsche penalty
    double beta = 0.1;    // ghost penalty
    int k = 1;            // polynomial degree; only P1 is implemented
    LengthScale length_scale = LengthScale::GridSpacing;

    void validate() const {
        if (!(gamma > 0.0)) throw Error("NitscheParams: gamma must be positive");
        if (!(beta >= 0.0)) throw Error("NitscheParams: beta must be non-negative");
        if (k != 1) throw Error("NitscheParams: only k = 1 is supported");
    }
};

/// u(x) = (3 y1^2 y2 - y2^3) exp(1 - |y|^2), y = x - x0, with -Lap u = f.
struct ManufacturedSolution {
    Vec3 x0 = Vec3::Zero();

    double u(const Vec3& x) const {
        const Vec3 y = x - x0;
        return (3.0 * y[0] * y[0] * y[1] - y[1] * y[1] * y[1]) * std::exp(1.0 - y.squaredNorm());
    }
    Vec3 grad(const Vec3& x) const {
        const Vec3 y = x - x0;
        const double p = 3.0 * y[0] * y[0] * y[1] - y[1] * y[1] * y[1];
        const Vec3 dp{6.0 * y[0] * y[1], 3.0 * y[0] * y[0] - 3.0 * y[1] * y[1], 0.0};
        return std::exp(1.0 - y.squaredNorm()) * (dp - 2.0 * p * y);
    }
    double f(const Vec3& x) const { return u(x) * (-4.0 * (x - x0).squaredNorm() + 18.0); }
    double g(const Vec3& x) const { return u(x); }
};

// ---------------------------------------------------------------------------
// Element kernels

inline constexpr int kRhsVolumeDegree = 4;
inline constexpr int kSurfaceDegree = 2;
inline constexpr int kErrorDegree = 4;

/// (grad phi_i, grad phi_j) over T, or over T ∩ Omega_h when `cut` is given.
inline Matrix4 element_stiffness(const Tet& tet, const CutDecomposition* cut = nullptr) {
    const Eigen::Matrix<double, 4, 3> g = barycentric_gradients(tet);
    const double vol = cut ? cut->inside_volume() : volume(tet);
    return vol * g * g.transpose();
}

/// P1 mass matrix |T|/20 (1 + delta_ij).
inline Matrix4 element_mass(const Tet& tet) {
    return volume(tet) / 20.0 * (Matrix4::Ones() + Matrix4::Identity());
}

/// Nitsche surface terms on the interface pieces of one strip element.
inline Matrix4 element_nitsche_terms(const Tet& tet, const CutDecomposition& cut, const NitscheParams& p, double h_T) {
    const Eigen::Matrix<double, 4, 3> g = barycentric_gradients(tet);
    static const SurfaceQuadratureRule q = triangle_quadrature(kSurfaceDegree);
    Matrix4 m = Matrix4::Zero();
    for (const auto& tri : cut.interface_triangles) {
        const double jac = 2.0 * area(tri.vertices);
        const Eigen::Vector4d dn = g * tri.normal;
        Eigen::Vector4d mean = Eigen::Vector4d::Zero();
        Matrix4 mass = Matrix4::Zero();
        for (std::size_t k = 0; k < q.size(); ++k) {
            const Eigen::Vector4d phi = barycentric_coordinates(tet, map_point(tri.vertices, q.points[k]));
            const double w = q.weights[k] * jac;
            mean += w * phi;
            mass += w * phi * phi.transpose();
        }
        m -= mean * dn.transpose() + dn * mean.transpose();
        m += p.gamma / h_T * mass;
    }
    return m;
}

/// beta h_F (jump of normal derivative, same)_F for the two elements sharing F.
/// Local ordering: the four vertices of `left`, then the four of `right`.
inline Matrix8 ghost_face_penalty(const Tri& face, const Tet& left, const Tet& right, const NitscheParams& p, double h_F) {
    const Vec3 n = (face[1] - face[0]).cross(face[2] - face[0]).normalized();
    const Eigen::Matrix<double, 4, 3> gl = barycentric_gradients(left);
    const Eigen::Matrix<double, 4, 3> gr = barycentric_gradients(right);
    Eigen::Matrix<double, 8, 1> jump;
    jump.head<4>() = gl * n;
    jump.tail<4>() = -(gr * n);
    return p.beta * h_F * area(face) * jump * jump.transpose();
}

// ---------------------------------------------------------------------------
// Global assembly

inline double penalty_h_T(const ActiveMesh& mesh, std::size_t a, const NitscheParams& p) {
    return p.length_scale == LengthScale::GridSpacing ? mesh.lattice.spacing() : mesh.h_T(a);
}

inline double penalty_h_F(const ActiveMesh& mesh, const GhostFace& f, const NitscheParams& p) {
    return p.length_scale == LengthScale::GridSpacing ? mesh.lattice.spacing() : f.diameter;
}

struct AssembledSystem {
    SparseMatrix A;
    Vector b;
    SubspaceSplit split;
    NitscheParams params;
};

namespace detail {

inline void scatter(std::vector<Triplet>& out, const std::array<long, 4>& dofs, const Matrix4& m) {
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            out.push_back({std::size_t(dofs[std::size_t(i)]), std::size_t(dofs[std::size_t(j)]), m(i, j)});
}

inline Tri face_geometry(const Lattice& lat, const std::array<VertexId, 3>& f) {
    return {lat.vertex_coords(f[0]), lat.vertex_coords(f[1]), lat.vertex_coords(f[2])};
}

inline void add_ghost_terms(std::vector<Triplet>& out, const ActiveMesh& mesh, const SubspaceSplit& split,
                            const NitscheParams& p) {
    if (p.beta == 0.0) return;
    for (const auto& f : mesh.ghost_faces) {
        const auto l = std::size_t(f.left), r = std::size_t(f.right);
        const Matrix8 m = ghost_face_penalty(face_geometry(mesh.lattice, f.vertices), mesh.geometry(l),
                                             mesh.geometry(r), p, penalty_h_F(mesh, f, p));
        const auto dl = cell_dofs(mesh, split, l), dr = cell_dofs(mesh, split, r);
        const std::array<long, 8> d{dl[0], dl[1], dl[2], dl[3], dr[0], dr[1], dr[2], dr[3]};
        for (int i = 0; i < 8; ++i)
            for (int j = 0; j < 8; ++j) out.push_back({std::size_t(d[std::size_t(i)]), std::size_t(d[std::size_t(j)]), m(i, j)});
    }
}

}  // namespace detail

/// Matrix of a_h and right-hand side of the discrete problem.
inline AssembledSystem assemble_system(const ActiveMesh& mesh, const SubspaceSplit& split, const NitscheParams& p,
                                       const ManufacturedSolution& ms) {
    p.validate();
    static const QuadratureRule qv = simplex_quadrature(kRhsVolumeDegree);
    static const SurfaceQuadratureRule qs = triangle_quadrature(kSurfaceDegree);

    const std::size_t n = split.N();
    std::vector<Triplet> t;
    t.reserve(mesh.num_cells() * 16 + mesh.ghost_faces.size() * 64);
    Vector b = Vector::Zero(Eigen::Index(n));

    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const Tet tet = mesh.geometry(a);
        const auto dofs = cell_dofs(mesh, split, a);
        std::optional<CutDecomposition> cut;
        if (mesh.cut(a)) cut = decompose_cut_tet(tet, mesh.phi(a));

        Matrix4 m = element_stiffness(tet, cut ? &*cut : nullptr);
        const std::vector<Tet> whole{tet};
        const std::vector<Tet>& pieces = cut ? cut->inside_simplices : whole;
        Eigen::Vector4d rhs = Eigen::Vector4d::Zero();
        for (const Tet& s : pieces) {
            const double jac = 6.0 * volume(s);
            for (std::size_t k = 0; k < qv.size(); ++k) {
                const Vec3 x = map_point(s, qv.points[k]);
                rhs += qv.weights[k] * jac * ms.f(x) * barycentric_coordinates(tet, x);
            }
        }
        if (cut) {
            const double hT = penalty_h_T(mesh, a, p);
            if (cut->interface_triangles.empty() && cut->inside_volume() < volume(tet))
                std::cerr << "warning: strip cell " << a << " has an empty interface\n";
            m += element_nitsche_terms(tet, *cut, p, hT);
            const Eigen::Matrix<double, 4, 3> g = barycentric_gradients(tet);
            for (const auto& tri : cut->interface_triangles) {
                const double jac = 2.0 * area(tri.vertices);
                const Eigen::Vector4d dn = g * tri.normal;
                for (std::size_t k = 0; k < qs.size(); ++k) {
                    const Vec3 x = map_point(tri.vertices, qs.points[k]);
                    const double w = qs.weights[k] * jac * ms.g(x);
                    rhs += w * (p.gamma / hT * barycentric_coordinates(tet, x) - dn);
                }
            }
        }
        detail::scatter(t, dofs, m);
        for (int i = 0; i < 4; ++i) b[dofs[std::size_t(i)]] += rhs[i];
    }
    detail::add_ghost_terms(t, mesh, split, p);
    return {SparseMatrix::from_triplets(n, n, std::move(t)), std::move(b), split, p};
}

/// Matrix of b_h: gradient over all of Omega_h plus the Nitsche penalty on Gamma_h.
inline SparseMatrix assemble_b_form(const ActiveMesh& mesh, const SubspaceSplit& split, const NitscheParams& p) {
    static const SurfaceQuadratureRule qs = triangle_quadrature(kSurfaceDegree);
    std::vector<Triplet> t;
    t.reserve(mesh.num_cells() * 16);
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const Tet tet = mesh.geometry(a);
        Matrix4 m = element_stiffness(tet);
        if (mesh.cut(a)) {
            const CutDecomposition cut = decompose_cut_tet(tet, mesh.phi(a));
            const double hT = penalty_h_T(mesh, a, p);
            for (const auto& tri : cut.interface_triangles) {
                const double jac = 2.0 * area(tri.vertices);
                for (std::size_t k = 0; k < qs.size(); ++k) {
                    const Eigen::Vector4d phi = barycentric_coordinates(tet, map_point(tri.vertices, qs.points[k]));
                    m += p.gamma / hT * qs.weights[k] * jac * phi * phi.transpose();
                }
            }
        }
        detail::scatter(t, cell_dofs(mesh, split, a), m);
    }
    return SparseMatrix::from_triplets(split.N(), split.N(), std::move(t));
}

/// Nodal interpolant of a function onto V_h.
template <typename F>
Vector interpolate(const ActiveMesh& mesh, const SubspaceSplit& split, F&& fn) {
    Vector v = Vector::Zero(Eigen::Index(split.N()));
    for (std::size_t i = 0; i < split.N(); ++i) v[Eigen::Index(i)] = fn(mesh.lattice.vertex_coords(split.vertex(i)));
    return v;
}

}  // namespace cutfem
