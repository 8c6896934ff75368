#pragma once

// Krylov solver, relaxation operators, sparse Cholesky and Lanczos spectrum estimates.

#include "cutfem/sparse.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/Eigenvalues>

#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace cutfem {

/// z = P^{-1} r. Implementations must be linear, symmetric and positive definite.
using Preconditioner = std::function<void(const Vector& r, Vector& z)>;

inline Preconditioner identity_preconditioner() {
    return [](const Vector& r, Vector& z) { z = r; };
}

// ---------------------------------------------------------------------------
// Relaxation

/// Diagonal scaling z = D^{-1} r.
class Jacobi {
public:
    explicit Jacobi(const SparseMatrix& a) : inv_diag_(a.diagonal()) {
        for (Eigen::Index i = 0; i < inv_diag_.size(); ++i) {
            if (inv_diag_[i] == 0.0) throw Error("Jacobi: zero diagonal entry at dof " + std::to_string(i));
            inv_diag_[i] = 1.0 / inv_diag_[i];
        }
    }
    void apply(const Vector& r, Vector& z) const { z = inv_diag_.cwiseProduct(r); }

private:
    Vector inv_diag_;
};

/// P_SGS = (D + L) D^{-1} (D + L^T); rows are swept in their stored order.
class SymmetricGaussSeidel {
public:
    explicit SymmetricGaussSeidel(const SparseMatrix& a) : a_(&a), diag_(a.diagonal()) {
        if (a.rows() != a.cols()) throw Error("SymmetricGaussSeidel: matrix is not square");
        for (Eigen::Index i = 0; i < diag_.size(); ++i)
            if (diag_[i] == 0.0) throw Error("SymmetricGaussSeidel: zero diagonal entry at dof " + std::to_string(i));
    }

    void apply(const Vector& r, Vector& z) const {
        const auto rp = a_->row_ptr();
        const auto ci = a_->col_idx();
        const auto v = a_->values();
        const std::size_t n = a_->rows();
        z.resize(Eigen::Index(n));
        // (D + L) y = r
        for (std::size_t i = 0; i < n; ++i) {
            double s = r[Eigen::Index(i)];
            for (std::size_t k = rp[i]; k < rp[i + 1] && ci[k] < i; ++k) s -= v[k] * z[Eigen::Index(ci[k])];
            z[Eigen::Index(i)] = s / diag_[Eigen::Index(i)];
        }
        // y <- D y, then (D + L^T) z = y
        for (std::size_t i = n; i-- > 0;) {
            double s = diag_[Eigen::Index(i)] * z[Eigen::Index(i)];
            for (std::size_t k = rp[i + 1]; k-- > rp[i] && ci[k] > i;) s -= v[k] * z[Eigen::Index(ci[k])];
            z[Eigen::Index(i)] = s / diag_[Eigen::Index(i)];
        }
    }

    /// One forward then one backward Gauss-Seidel sweep on A x = b, in place.
    void smooth(const Vector& b, Vector& x) const {
        const std::size_t n = a_->rows();
        for (std::size_t i = 0; i < n; ++i) relax(b, x, i);
        for (std::size_t i = n; i-- > 0;) relax(b, x, i);
    }

private:
    void relax(const Vector& b, Vector& x, std::size_t i) const {
        const auto rp = a_->row_ptr();
        const auto ci = a_->col_idx();
        const auto v = a_->values();
        double s = b[Eigen::Index(i)];
        for (std::size_t k = rp[i]; k < rp[i + 1]; ++k)
            if (ci[k] != i) s -= v[k] * x[Eigen::Index(ci[k])];
        x[Eigen::Index(i)] = s / diag_[Eigen::Index(i)];
    }

    const SparseMatrix* a_;
    Vector diag_;
};

inline Vector sgs_apply(const SparseMatrix& a, const Vector& r) {
    Vector z;
    SymmetricGaussSeidel(a).apply(r, z);
    return z;
}

// ---------------------------------------------------------------------------
// Sparse Cholesky (CHOLMOD supernodal)

class SparseCholesky {
public:
    SparseCholesky() = default;
    explicit SparseCholesky(const SparseMatrix& a) { factorize(a); }

    void factorize(const SparseMatrix& a) {
        if (a.rows() != a.cols()) throw Error("SparseCholesky: matrix is not square");
        n_ = a.rows();
        if (n_ == 0) return;
        llt_ = std::make_shared<Solver>();
        llt_->cholmod().print = 0;
        eigen_ = std::make_shared<Eigen::SparseMatrix<double>>(a.to_eigen());
        llt_->compute(*eigen_);
        if (llt_->info() != Eigen::Success) throw Error("SparseCholesky: non-positive pivot, matrix is not SPD");
    }

    Vector solve(const Vector& r) const {
        if (n_ == 0) return Vector(0);
        return llt_->solve(r);
    }
    std::size_t size() const { return n_; }

private:
    using Solver = Eigen::CholmodSupernodalLLT<Eigen::SparseMatrix<double>>;
    std::size_t n_ = 0;
    std::shared_ptr<Eigen::SparseMatrix<double>> eigen_;
    std::shared_ptr<Solver> llt_;
};

// ---------------------------------------------------------------------------
// Preconditioned conjugate gradients

struct SolveReport {
    int iterations = 0;
    std::vector<double> preconditioned_residual_history;  // ||P^{-1} r_k||_2
    double lanczos_lambda_min = 1.0;
    double lanczos_lambda_max = 1.0;
    double kappa_estimate = 1.0;
    bool converged = false;
};

namespace detail {

inline std::pair<double, double> tridiagonal_extremes(const std::vector<double>& diag, const std::vector<double>& off) {
    const auto k = Eigen::Index(diag.size());
    if (k == 0) return {1.0, 1.0};
    Vector d = Eigen::Map<const Vector>(diag.data(), k);
    Vector e = k > 1 ? Vector(Eigen::Map<const Vector>(off.data(), k - 1)) : Vector(Vector::Zero(1));
    if (k == 1) return {d[0], d[0]};
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
    return {es.eigenvalues()[0], es.eigenvalues()[k - 1]};
}

}  // namespace detail

/// CG from u = 0; stops once ||P^{-1}(b - A u_k)||_2 <= tol ||P^{-1} b||_2.
/// The report carries Lanczos extremes of P^{-1}A from the CG coefficients.
inline std::pair<Vector, SolveReport> pcg(const SparseMatrix& a, const Vector& b, const Preconditioner& prec, double tol,
                                          int maxit) {
    const auto n = Eigen::Index(a.rows());
    Vector u = Vector::Zero(n);
    SolveReport rep;
    Vector r = b;
    Vector z;
    prec(r, z);
    const double z0 = z.norm();
    rep.preconditioned_residual_history.push_back(z0);
    if (z0 == 0.0) {
        rep.converged = true;
        return {u, rep};
    }
    Vector p = z, q;
    double rz = r.dot(z);
    std::vector<double> alphas, betas;
    for (int k = 1; k <= maxit; ++k) {
        a.multiply(p, q);
        const double pap = p.dot(q);
        if (!(pap > 0.0)) throw Error("pcg: operator is not positive definite (p^T A p <= 0 at iteration " + std::to_string(k) + ")");
        const double alpha = rz / pap;
        u += alpha * p;
        r -= alpha * q;
        prec(r, z);
        const double zn = z.norm();
        rep.preconditioned_residual_history.push_back(zn);
        alphas.push_back(alpha);
        rep.iterations = k;
        if (zn <= tol * z0) {
            rep.converged = true;
            break;
        }
        const double rz_new = r.dot(z);
        const double beta = rz_new / rz;
        betas.push_back(beta);
        rz = rz_new;
        p = z + beta * p;
    }
    std::vector<double> diag(alphas.size()), off;
    for (std::size_t j = 0; j < alphas.size(); ++j) {
        diag[j] = 1.0 / alphas[j] + (j > 0 ? betas[j - 1] / alphas[j - 1] : 0.0);
        if (j + 1 < alphas.size()) off.push_back(std::sqrt(betas[j]) / alphas[j]);
    }
    const auto [lmin, lmax] = detail::tridiagonal_extremes(diag, off);
    rep.lanczos_lambda_min = lmin;
    rep.lanczos_lambda_max = lmax;
    rep.kappa_estimate = lmax / lmin;
    return {u, rep};
}

// ---------------------------------------------------------------------------
// Lanczos

struct LanczosOptions {
    int max_steps = 500;
    double tolerance = 1e-8;  // relative Ritz residual of both extreme pairs
    std::uint64_t seed = 12345;
    int max_restarts = 3;
};

struct SpectrumEstimate {
    double lambda_min = 1.0;
    double lambda_max = 1.0;
    double kappa = 1.0;
    int steps = 0;
    bool converged = false;
    std::vector<double> lambda_min_history;  // per step
    std::vector<double> lambda_max_history;
};

/// Extreme eigenvalues of P^{-1}A by Lanczos in the P inner product with full
/// reorthogonalization. Ritz values bound the spectrum from inside, so the
/// returned kappa is an estimate from below.
inline SpectrumEstimate lanczos_extremes(const std::function<void(const Vector&, Vector&)>& apply_a, std::size_t n,
                                         const Preconditioner& prec_in, const LanczosOptions& opt = {}) {
    const Preconditioner prec = prec_in ? prec_in : identity_preconditioner();
    SpectrumEstimate est;
    if (n == 0) return est;
    const auto N = Eigen::Index(n);
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    auto random_vector = [&] {
        Vector v(N);
        for (Eigen::Index i = 0; i < N; ++i) v[i] = dist(rng);
        return v;
    };

    std::vector<Vector> V, U;  // V P-orthonormal, U = P V
    std::vector<double> alpha, beta;
    auto orthogonalize = [&](Vector& w) {
        for (int pass = 0; pass < 2; ++pass)
            for (std::size_t i = 0; i < V.size(); ++i) w -= w.dot(V[i]) * U[i];
    };
    // Starts a new Krylov block from a fresh random vector; false if the space is exhausted.
    auto start = [&]() {
        Vector w = random_vector();
        orthogonalize(w);
        Vector z;
        prec(w, z);
        const double nrm2 = w.dot(z);
        if (!(nrm2 > 1e-28 * double(n))) return false;
        const double nrm = std::sqrt(nrm2);
        V.push_back(z / nrm);
        U.push_back(w / nrm);
        return true;
    };

    if (!start()) return est;
    int restarts = 0;
    const int max_steps = std::min<int>(opt.max_steps, int(n));
    Vector w, z;
    for (int j = 0; j < max_steps; ++j) {
        apply_a(V[std::size_t(j)], w);
        const double a = w.dot(V[std::size_t(j)]);
        alpha.push_back(a);
        orthogonalize(w);
        prec(w, z);
        const double b2 = w.dot(z);
        const double b = b2 > 0.0 ? std::sqrt(b2) : 0.0;

        const auto k = Eigen::Index(alpha.size());
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        Vector d = Eigen::Map<const Vector>(alpha.data(), k);
        Vector e = k > 1 ? Vector(Eigen::Map<const Vector>(beta.data(), k - 1)) : Vector(Vector::Zero(1));
        double res_min = 0.0, res_max = 0.0;
        if (k == 1) {
            est.lambda_min = est.lambda_max = d[0];
            res_min = res_max = b;
        } else {
            es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
            est.lambda_min = es.eigenvalues()[0];
            est.lambda_max = es.eigenvalues()[k - 1];
            res_min = b * std::abs(es.eigenvectors()(k - 1, 0));
            res_max = b * std::abs(es.eigenvectors()(k - 1, k - 1));
        }
        est.lambda_min_history.push_back(est.lambda_min);
        est.lambda_max_history.push_back(est.lambda_max);
        est.steps = j + 1;

        const bool breakdown = b <= 1e-12 * std::max(std::abs(a), est.lambda_max);
        if (breakdown) {
            // Invariant subspace found; continue the tridiagonal with a decoupled block.
            if (restarts >= opt.max_restarts || !start()) {
                est.converged = true;
                break;
            }
            ++restarts;
            beta.push_back(0.0);
            continue;
        }
        if (res_min <= opt.tolerance * std::abs(est.lambda_min) && res_max <= opt.tolerance * std::abs(est.lambda_max) &&
            j >= 2) {
            est.converged = true;
            break;
        }
        beta.push_back(b);
        V.push_back(z / b);
        U.push_back(w / b);
    }
    est.kappa = est.lambda_max / est.lambda_min;
    return est;
}

/// Lanczos condition estimate of P^{-1}A (or A when `prec` is empty).
inline SpectrumEstimate estimate_condition(const SparseMatrix& a, const Preconditioner& prec = {},
                                           const LanczosOptions& opt = {}) {
    return lanczos_extremes([&](const Vector& x, Vector& y) { a.multiply(x, y); }, a.rows(), prec, opt);
}

}  // namespace cutfem
