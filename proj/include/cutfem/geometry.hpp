#pragma once

// Level-set geometry, reference-simplex quadrature and marching-tetrahedra
// decomposition of cut P1 elements.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cutfem {

using Vec3 = Eigen::Vector3d;
using Tet = std::array<Vec3, 4>;
using Tri = std::array<Vec3, 3>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Signed distance to a sphere; negative inside.
struct LevelSet {
    Vec3 center = Vec3::Zero();
    double radius = 1.0;

    LevelSet() = default;
    LevelSet(const Vec3& c, double r) : center(c), radius(r) {
        if (!(r > 0.0)) throw Error("LevelSet: radius must be positive");
    }

    double eval(const Vec3& x) const { return (x - center).norm() - radius; }
    double operator()(const Vec3& x) const { return eval(x); }
};

inline double levelset_eval(const LevelSet& ls, const Vec3& x) { return ls.eval(x); }

// Vertex values equal to zero count as inside.
inline bool is_inside_value(double phi) { return phi <= 0.0; }

// ---------------------------------------------------------------------------
// Quadrature

/// Quadrature on the reference tetrahedron (barycentric points, weights sum to 1/6).
struct QuadratureRule {
    std::vector<std::array<double, 4>> points;
    std::vector<double> weights;
    int exactness_degree = 0;

    std::size_t size() const { return weights.size(); }
};

/// Quadrature on the reference triangle (barycentric points, weights sum to 1/2).
struct SurfaceQuadratureRule {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;
    int exactness_degree = 0;

    std::size_t size() const { return weights.size(); }
};

namespace detail {

inline void add_tet_orbit_31(QuadratureRule& q, double a, double w) {
    const double b = 1.0 - 3.0 * a;
    for (int i = 0; i < 4; ++i) {
        std::array<double, 4> p{a, a, a, a};
        p[i] = b;
        q.points.push_back(p);
        q.weights.push_back(w);
    }
}

inline void add_tet_orbit_22(QuadratureRule& q, double a, double w) {
    const double b = 0.5 - a;
    static constexpr int pairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (const auto& pr : pairs) {
        std::array<double, 4> p{b, b, b, b};
        p[pr[0]] = a;
        p[pr[1]] = a;
        q.points.push_back(p);
        q.weights.push_back(w);
    }
}

inline void add_tri_orbit_21(SurfaceQuadratureRule& q, double a, double w) {
    const double b = 1.0 - 2.0 * a;
    for (int i = 0; i < 3; ++i) {
        std::array<double, 3> p{a, a, a};
        p[i] = b;
        q.points.push_back(p);
        q.weights.push_back(w);
    }
}

}  // namespace detail

/// Volume rule exact for polynomials of total degree <= `degree` (1..4).
/// Degrees 3 and 4 share a 14-point positive-weight rule of degree 5.
inline QuadratureRule simplex_quadrature(int degree) {
    QuadratureRule q;
    switch (degree) {
        case 1:
            q.points.push_back({0.25, 0.25, 0.25, 0.25});
            q.weights.push_back(1.0 / 6.0);
            q.exactness_degree = 1;
            break;
        case 2:
            detail::add_tet_orbit_31(q, 0.1381966011250105151795413165634361882280, 1.0 / 24.0);
            q.exactness_degree = 2;
            break;
        case 3:
        case 4:
            detail::add_tet_orbit_31(q, 0.0927352503108912264023194802851882, 0.01224884051939365826249620794);
            detail::add_tet_orbit_31(q, 0.3108859192633006097973457337634578, 0.01878132095300264178086712544);
            detail::add_tet_orbit_22(q, 0.0455037041256496494918805262793394, 0.00709100346284691107301157135);
            q.exactness_degree = 5;
            break;
        default:
            throw Error("simplex_quadrature: unsupported degree " + std::to_string(degree));
    }
    return q;
}

/// Triangle rule exact for polynomials of total degree <= `degree` (1..4).
inline SurfaceQuadratureRule triangle_quadrature(int degree) {
    SurfaceQuadratureRule q;
    switch (degree) {
        case 1:
            q.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
            q.weights.push_back(0.5);
            q.exactness_degree = 1;
            break;
        case 2:
            detail::add_tri_orbit_21(q, 1.0 / 6.0, 1.0 / 6.0);
            q.exactness_degree = 2;
            break;
        case 3:
        case 4:
            detail::add_tri_orbit_21(q, 0.445948490915965, 0.223381589678011 / 2.0);
            detail::add_tri_orbit_21(q, 0.091576213509771, 0.109951743655322 / 2.0);
            q.exactness_degree = 4;
            break;
        default:
            throw Error("triangle_quadrature: unsupported degree " + std::to_string(degree));
    }
    return q;
}

// ---------------------------------------------------------------------------
// Simplex helpers

inline double signed_volume(const Tet& t) {
    return (t[1] - t[0]).dot((t[2] - t[0]).cross(t[3] - t[0])) / 6.0;
}

inline double volume(const Tet& t) { return std::abs(signed_volume(t)); }

inline double area(const Tri& t) { return 0.5 * (t[1] - t[0]).cross(t[2] - t[0]).norm(); }

template <std::size_t N>
double diameter(const std::array<Vec3, N>& pts) {
    double d = 0.0;
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = i + 1; j < N; ++j) d = std::max(d, (pts[i] - pts[j]).norm());
    return d;
}

inline Vec3 map_point(const Tet& t, const std::array<double, 4>& bary) {
    return bary[0] * t[0] + bary[1] * t[1] + bary[2] * t[2] + bary[3] * t[3];
}

inline Vec3 map_point(const Tri& t, const std::array<double, 3>& bary) {
    return bary[0] * t[0] + bary[1] * t[1] + bary[2] * t[2];
}

/// Gradients of the four barycentric coordinate functions (rows), constant on the tet.
inline Eigen::Matrix<double, 4, 3> barycentric_gradients(const Tet& t) {
    Eigen::Matrix3d J;
    J.col(0) = t[1] - t[0];
    J.col(1) = t[2] - t[0];
    J.col(2) = t[3] - t[0];
    const double det = J.determinant();
    if (!(std::abs(det) > 0.0)) throw Error("degenerate tetrahedron");
    const Eigen::Matrix3d Jinv = J.inverse();
    Eigen::Matrix<double, 4, 3> g;
    g.row(1) = Jinv.row(0);
    g.row(2) = Jinv.row(1);
    g.row(3) = Jinv.row(2);
    g.row(0) = -(g.row(1) + g.row(2) + g.row(3));
    return g;
}

/// Barycentric coordinates of x with respect to t.
inline Eigen::Vector4d barycentric_coordinates(const Tet& t, const Vec3& x) {
    Eigen::Matrix3d J;
    J.col(0) = t[1] - t[0];
    J.col(1) = t[2] - t[0];
    J.col(2) = t[3] - t[0];
    const Vec3 l = J.partialPivLu().solve(x - t[0]);
    return {1.0 - l.sum(), l[0], l[1], l[2]};
}

// ---------------------------------------------------------------------------
// Cut decomposition

struct InterfaceTriangle {
    Tri vertices;
    Vec3 normal;  // unit, pointing from phi_h < 0 to phi_h > 0
};

/// Result of intersecting a tetrahedron with {phi_h <= 0}, phi_h the linear interpolant.
struct CutDecomposition {
    std::vector<Tet> inside_simplices;
    std::vector<InterfaceTriangle> interface_triangles;

    double inside_volume() const {
        double v = 0.0;
        for (const auto& t : inside_simplices) v += volume(t);
        return v;
    }
    double interface_area() const {
        double a = 0.0;
        for (const auto& t : interface_triangles) a += area(t.vertices);
        return a;
    }
};

namespace detail {

// Sub-simplices below this fraction of the parent volume are dropped; they
// arise only when a cut point collapses onto a vertex with phi == 0.
inline constexpr double kSliverFraction = 1e-14;

inline void push_tet(std::vector<Tet>& out, Tet t, double parent_volume) {
    double v = signed_volume(t);
    if (v < 0.0) {
        std::swap(t[2], t[3]);
        v = -v;
    }
    if (v > kSliverFraction * parent_volume) out.push_back(t);
}

inline void push_prism(std::vector<Tet>& out, const Tri& bottom, const Tri& top, double parent_volume) {
    // top[i] is joined to bottom[i] by a lateral edge; all lateral faces are planar.
    push_tet(out, {bottom[0], bottom[1], bottom[2], top[0]}, parent_volume);
    push_tet(out, {bottom[1], bottom[2], top[0], top[1]}, parent_volume);
    push_tet(out, {bottom[2], top[0], top[1], top[2]}, parent_volume);
}

inline void push_tri(std::vector<InterfaceTriangle>& out, const Tri& t, const Vec3& normal, double ref_area) {
    if (area(t) > kSliverFraction * ref_area) out.push_back({t, normal});
}

}  // namespace detail

/// Splits `t` by the zero level of the linear interpolant of `phi`.
/// Cut points sit at edge parameter phi_a / (phi_a - phi_b).
inline CutDecomposition decompose_cut_tet(const Tet& t, const std::array<double, 4>& phi) {
    const double parent_volume = volume(t);
    if (!(parent_volume > 0.0)) throw Error("decompose_cut_tet: degenerate parent tetrahedron");

    CutDecomposition out;
    std::array<int, 4> neg{}, pos{};
    int n_neg = 0, n_pos = 0;
    for (int i = 0; i < 4; ++i) {
        if (is_inside_value(phi[i]))
            neg[n_neg++] = i;
        else
            pos[n_pos++] = i;
    }
    if (n_pos == 0) {
        detail::push_tet(out.inside_simplices, t, parent_volume);
        return out;
    }
    if (n_neg == 0) return out;

    const Eigen::Matrix<double, 4, 3> grads = barycentric_gradients(t);
    Vec3 grad_phi = Vec3::Zero();
    for (int i = 0; i < 4; ++i) grad_phi += phi[i] * grads.row(i).transpose();
    const Vec3 normal = grad_phi.normalized();
    const double ref_area = std::pow(parent_volume, 2.0 / 3.0);

    auto cut = [&](int a, int b) -> Vec3 {
        const double s = phi[a] / (phi[a] - phi[b]);
        return t[a] + s * (t[b] - t[a]);
    };

    if (n_neg == 1) {
        const int a = neg[0];
        const Vec3 p0 = cut(a, pos[0]), p1 = cut(a, pos[1]), p2 = cut(a, pos[2]);
        detail::push_tet(out.inside_simplices, {t[a], p0, p1, p2}, parent_volume);
        detail::push_tri(out.interface_triangles, {p0, p1, p2}, normal, ref_area);
    } else if (n_neg == 3) {
        const int d = pos[0];
        const Tri bottom{t[neg[0]], t[neg[1]], t[neg[2]]};
        const Tri top{cut(neg[0], d), cut(neg[1], d), cut(neg[2], d)};
        detail::push_prism(out.inside_simplices, bottom, top, parent_volume);
        detail::push_tri(out.interface_triangles, top, normal, ref_area);
    } else {
        const int a = neg[0], b = neg[1], c = pos[0], d = pos[1];
        const Vec3 pac = cut(a, c), pad = cut(a, d), pbc = cut(b, c), pbd = cut(b, d);
        detail::push_prism(out.inside_simplices, {t[a], pac, pad}, {t[b], pbc, pbd}, parent_volume);
        detail::push_tri(out.interface_triangles, {pac, pad, pbd}, normal, ref_area);
        detail::push_tri(out.interface_triangles, {pac, pbd, pbc}, normal, ref_area);
    }
    return out;
}

}  // namespace cutfem
