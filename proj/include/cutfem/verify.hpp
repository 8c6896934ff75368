#pragma once

// Numerical measurement of the stability constants of the discretization and
// the subspace splitting: norm equivalences, element-level strengthened
// Cauchy-Schwarz, the SPD matrix lemma, the splitting constant K_a, and
// manufactured-solution error norms.

#include "cutfem/assembly.hpp"
#include "cutfem/linalg.hpp"
#include "cutfem/precond.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <iostream>
#include <limits>
#include <random>

namespace cutfem {

struct RatioInterval {
    double min = std::numeric_limits<double>::infinity();
    double max = 0.0;

    void add(double r) {
        min = std::min(min, r);
        max = std::max(max, r);
    }
    bool valid() const { return min > 0.0 && std::isfinite(min) && std::isfinite(max) && min <= max; }
};

namespace detail {

inline Vector random_vector(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> g(0.0, 1.0);
    Vector v = Vector::Zero(Eigen::Index(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = g(rng);
    return v;
}

// Matrices of ||h^-1 v||^2 and ||grad v||^2 over the strip (full cut elements).
struct StripForms {
    SparseMatrix mass_h2;
    SparseMatrix stiffness;
    SparseMatrix gamma_h1;  // sum_T h_T^-1 (v, w)_{T cap Gamma_h}
    std::vector<long> strip_dofs;
};

inline StripForms strip_forms(const ActiveMesh& mesh, const SubspaceSplit& split, const NitscheParams& p) {
    static const SurfaceQuadratureRule qs = triangle_quadrature(kSurfaceDegree);
    std::vector<Triplet> tm, tk, tg;
    std::vector<long> dofs;
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        if (!mesh.cut(a)) continue;
        const Tet tet = mesh.geometry(a);
        const auto d = cell_dofs(mesh, split, a);
        dofs.insert(dofs.end(), d.begin(), d.end());
        const double h = penalty_h_T(mesh, a, p);
        scatter(tm, d, element_mass(tet) / (h * h));
        scatter(tk, d, element_stiffness(tet));
        Matrix4 g = Matrix4::Zero();
        for (const auto& tri : decompose_cut_tet(tet, mesh.phi(a)).interface_triangles) {
            const double jac = 2.0 * area(tri.vertices);
            for (std::size_t k = 0; k < qs.size(); ++k) {
                const Eigen::Vector4d phi = barycentric_coordinates(tet, map_point(tri.vertices, qs.points[k]));
                g += qs.weights[k] * jac / h * phi * phi.transpose();
            }
        }
        scatter(tg, d, g);
    }
    std::sort(dofs.begin(), dofs.end());
    dofs.erase(std::unique(dofs.begin(), dofs.end()), dofs.end());
    const std::size_t n = split.N();
    return {SparseMatrix::from_triplets(n, n, std::move(tm)), SparseMatrix::from_triplets(n, n, std::move(tk)),
            SparseMatrix::from_triplets(n, n, std::move(tg)), std::move(dofs)};
}

}  // namespace detail

/// ||h^-1 v|| / ||grad v|| over the strip, sampled separately on V_h^0 and V_h^Gamma.
struct StripEquivalence {
    RatioInterval interior;
    RatioInterval boundary;
};

inline StripEquivalence measure_norm_equivalence_strip(const ActiveMesh& mesh, const SubspaceSplit& split,
                                                       const NitscheParams& p, int n_samples, std::mt19937_64& rng) {
    if (mesh.num_cut_cells() == 0) throw Error("measure_norm_equivalence_strip: empty strip");
    const auto f = detail::strip_forms(mesh, split, p);
    std::normal_distribution<double> g(0.0, 1.0);
    StripEquivalence out;
    for (int s = 0; s < n_samples; ++s) {
        for (int part = 0; part < 2; ++part) {
            Vector v = Vector::Zero(Eigen::Index(split.N()));
            for (long d : f.strip_dofs)
                if (split.is_boundary_dof(std::size_t(d)) == (part == 1)) v[d] = g(rng);
            const double den = f.stiffness.quadratic_form(v);
            if (!(den > 0.0)) continue;
            const double r = std::sqrt(f.mass_h2.quadratic_form(v) / den);
            (part == 0 ? out.interior : out.boundary).add(r);
        }
    }
    return out;
}

/// Max over samples in V_h of ||h^-1 v||_strip / (||h^-1/2 v||_Gamma + ||grad v||_strip).
inline double check_estfund(const ActiveMesh& mesh, const SubspaceSplit& split, const NitscheParams& p, int n_samples,
                            std::mt19937_64& rng) {
    const auto f = detail::strip_forms(mesh, split, p);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        Vector v = Vector::Zero(Eigen::Index(split.N()));
        // The first sample is the constant, which has no gradient.
        if (s == 0)
            for (long d : f.strip_dofs) v[d] = 1.0;
        else
            for (long d : f.strip_dofs) v[d] = g(rng);
        const double lhs = std::sqrt(f.mass_h2.quadratic_form(v));
        const double rhs = std::sqrt(f.gamma_h1.quadratic_form(v)) + std::sqrt(f.stiffness.quadratic_form(v));
        if (rhs > 0.0) worst = std::max(worst, lhs / rhs);
    }
    return worst;
}

/// 1 - 1/kappa of the reference P1 mass matrix.
inline double strengthened_cs_bound() {
    const Tet ref{Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0), Vec3(0, 0, 1)};
    Eigen::SelfAdjointEigenSolver<Matrix4> es(element_mass(ref));
    return 1.0 - es.eigenvalues()[0] / es.eigenvalues()[3];
}

struct CauchySchwarzReport {
    double max_ratio = 0.0;
    double bound = 0.0;
    std::size_t elements = 0;
    std::size_t skipped = 0;
};

/// |(v0, vG)_T| / (||v0||_T ||vG||_T) over random pairs on every cut element.
inline CauchySchwarzReport check_strengthened_cs(const ActiveMesh& mesh, const SubspaceSplit& split, int pairs,
                                                 std::mt19937_64& rng) {
    CauchySchwarzReport rep;
    rep.bound = strengthened_cs_bound();
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        if (!mesh.cut(a)) continue;
        const auto d = cell_dofs(mesh, split, a);
        int n_boundary = 0;
        for (long x : d) n_boundary += split.is_boundary_dof(std::size_t(x)) ? 1 : 0;
        if (n_boundary == 0 || n_boundary == 4) {
            ++rep.skipped;
            continue;
        }
        ++rep.elements;
        const Matrix4 m = element_mass(mesh.geometry(a));
        for (int s = 0; s < pairs; ++s) {
            Eigen::Vector4d v0 = Eigen::Vector4d::Zero(), vg = Eigen::Vector4d::Zero();
            const Vector r = detail::random_vector(rng, 4);
            for (int i = 0; i < 4; ++i)
                (split.is_boundary_dof(std::size_t(d[std::size_t(i)])) ? vg : v0)[i] = r[i];
            const double den = std::sqrt(v0.dot(m * v0) * vg.dot(m * vg));
            rep.max_ratio = std::max(rep.max_ratio, std::abs(v0.dot(m * vg)) / den);
        }
    }
    if (rep.skipped > 0)
        std::cerr << "warning: " << rep.skipped << " cut elements without both dof classes skipped\n";
    return rep;
}

struct MatrixLemmaReport {
    bool holds = true;
    int trials = 0;
    double max_ratio = 0.0;  // |<Mx,y>| / ((1 - 1/kappa) <Mx,x>^1/2 <My,y>^1/2)
};

/// Random SPD M = Q diag Q^T and random Euclidean-orthogonal pairs x, y.
inline MatrixLemmaReport check_matrix_lemma(int m, int n_trials, std::mt19937_64& rng) {
    MatrixLemmaReport rep;
    std::uniform_real_distribution<double> logd(0.0, std::log(1e3));
    for (int t = 0; t < n_trials; ++t) {
        Eigen::MatrixXd g(m, m);
        for (int j = 0; j < m; ++j) g.col(j) = detail::random_vector(rng, std::size_t(m));
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
        Vector diag(m);
        for (int i = 0; i < m; ++i) diag[i] = std::exp(logd(rng));
        const Eigen::MatrixXd M = q * diag.asDiagonal() * q.transpose();
        const double kappa = diag.maxCoeff() / diag.minCoeff();

        Vector x = detail::random_vector(rng, std::size_t(m));
        Vector y = detail::random_vector(rng, std::size_t(m));
        y -= (x.dot(y) / x.dot(x)) * x;
        const double lhs = std::abs(x.dot(M * y));
        const double rhs = (1.0 - 1.0 / kappa) * std::sqrt(x.dot(M * x) * y.dot(M * y));
        rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
        if (lhs > rhs + 1e-12 * std::max(1.0, rhs)) rep.holds = false;
        ++rep.trials;
    }
    return rep;
}

/// Generalized dense eigensolves are used up to this dimension.
inline constexpr std::size_t kDenseEigenLimit = 1000;

struct SplittingEstimate {
    double K_a = 0.0;
    double sampled_max = 0.0;  // Rayleigh quotients along power iterates: a lower bound
    bool dense = false;
};

/// K_a = max (|v0|_a^2 + |vG|_a^2) / |v|_a^2 = lambda_max(A^-1 blockdiag(A0, A1)).
inline SplittingEstimate estimate_splitting_constant(const SparseMatrix& a, const SubspaceSplit& split, int samples,
                                                     std::mt19937_64& rng, const LanczosOptions& opt = {}) {
    const BlockPartition part = extract_blocks(a, split);
    const std::size_t n0 = part.n0, n = a.rows();
    std::vector<Triplet> t;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = a.row_ptr()[i]; k < a.row_ptr()[i + 1]; ++k) {
            const std::size_t j = a.col_idx()[k];
            if ((i < n0) == (j < n0)) t.push_back({i, j, a.values()[k]});
        }
    const SparseMatrix d = SparseMatrix::from_triplets(n, n, std::move(t));

    SplittingEstimate est;
    if (n <= kDenseEigenLimit) {
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(d.to_dense(), a.to_dense(), Eigen::EigenvaluesOnly);
        est.K_a = es.eigenvalues().maxCoeff();
        est.dense = true;
    } else {
        BlockPreconditioner pa(PreconditionerSpec::pa(), a, split);
        est.K_a = 1.0 / estimate_condition(a, pa.as_function(), opt).lambda_min;
    }

    const SparseCholesky chol(a);
    Vector v = detail::random_vector(rng, n);
    for (int s = 0; s < samples; ++s) {
        const double q = d.quadratic_form(v) / a.quadratic_form(v);
        est.sampled_max = std::max(est.sampled_max, q);
        v = chol.solve(d * v);
        v /= v.norm();
    }
    return est;
}

/// min/max of v^T A v / v^T B v over random v.
inline RatioInterval sample_form_ratio(const SparseMatrix& a, const SparseMatrix& b, int n_samples,
                                       std::mt19937_64& rng) {
    RatioInterval r;
    for (int s = 0; s < n_samples; ++s) {
        const Vector v = detail::random_vector(rng, a.rows());
        r.add(a.quadratic_form(v) / b.quadratic_form(v));
    }
    return r;
}

struct ErrorNorms {
    double l2 = 0.0;       // over Omega
    double h1_semi = 0.0;  // over Omega
    double h1 = 0.0;       // full H1 over Omega
    double l2_omega_h = 0.0;
    double h1_semi_omega_h = 0.0;
};

/// ||u - u_h|| over the physical domain (cut quadrature) and over the active domain.
inline ErrorNorms compute_errors(const ActiveMesh& mesh, const SubspaceSplit& split, const Vector& uh,
                                 const ManufacturedSolution& ms) {
    static const QuadratureRule q = simplex_quadrature(kErrorDegree);
    double l2 = 0, h1 = 0, l2h = 0, h1h = 0;
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const Tet tet = mesh.geometry(a);
        const auto d = cell_dofs(mesh, split, a);
        const Eigen::Vector4d c{uh[d[0]], uh[d[1]], uh[d[2]], uh[d[3]]};
        const Vec3 grad_h = barycentric_gradients(tet).transpose() * c;

        auto integrate = [&](const Tet& s, double& e0, double& e1) {
            const double jac = 6.0 * volume(s);
            for (std::size_t k = 0; k < q.size(); ++k) {
                const Vec3 x = map_point(s, q.points[k]);
                const double w = q.weights[k] * jac;
                const double diff = ms.u(x) - barycentric_coordinates(tet, x).dot(c);
                e0 += w * diff * diff;
                e1 += w * (ms.grad(x) - grad_h).squaredNorm();
            }
        };
        integrate(tet, l2h, h1h);
        if (mesh.cut(a)) {
            for (const Tet& s : decompose_cut_tet(tet, mesh.phi(a)).inside_simplices) integrate(s, l2, h1);
        } else {
            integrate(tet, l2, h1);
        }
    }
    return {std::sqrt(l2), std::sqrt(h1), std::sqrt(l2 + h1), std::sqrt(l2h), std::sqrt(h1h)};
}

/// Largest factor between members of a positive sample set.
inline double variation(const std::vector<double>& v) {
    if (v.empty()) return 1.0;
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return *hi / *lo;
}

}  // namespace cutfem
