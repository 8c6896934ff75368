#pragma once

// Subspace-decomposition preconditioners for the fictitious-domain system:
// block-diagonal solves on the interior/boundary dof split, with a geometric
// multigrid V-cycle on nested interior spaces for the interior block.

#include "cutfem/linalg.hpp"
#include "cutfem/mesh.hpp"

#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_set>

namespace cutfem {

/// Principal blocks of A under the interior-first ordering.
struct BlockPartition {
    std::size_t n0 = 0;
    std::size_t n1 = 0;
    SparseMatrix A0;  // interior x interior
    SparseMatrix A1;  // boundary x boundary
};

inline BlockPartition extract_blocks(const SparseMatrix& a, std::size_t n0) {
    if (a.rows() != a.cols() || n0 > a.rows()) throw Error("extract_blocks: inconsistent split");
    const std::size_t n = a.rows();
    return {n0, n - n0, a.block(0, n0, 0, n0), a.block(n0, n, n0, n)};
}

inline BlockPartition extract_blocks(const SparseMatrix& a, const SubspaceSplit& split) {
    if (split.N() != a.rows()) throw Error("extract_blocks: split does not match the matrix");
    return extract_blocks(a, split.N0());
}

// ---------------------------------------------------------------------------
// Nested lattice hierarchy

namespace detail {

// Kuhn tet of a cube that contains the local point x in [0,1]^3 (interior points only).
inline int kuhn_tet_containing(const std::array<double, 3>& x) {
    std::array<int, 3> perm{0, 1, 2};
    std::sort(perm.begin(), perm.end(), [&](int a, int b) { return x[std::size_t(a)] > x[std::size_t(b)]; });
    return kuhn_tet_id(perm);
}

struct ChildRef {
    LatticePoint offset;  // sub-cube offset in {0,1}^3
    int tet;
};

// The eight level-(j+1) tets refining each level-j Kuhn tet.
inline const std::array<std::vector<ChildRef>, 6>& kuhn_children() {
    static const std::array<std::vector<ChildRef>, 6> table = [] {
        std::array<std::vector<ChildRef>, 6> t;
        for (int c = 0; c < 8; ++c) {
            const LatticePoint o{c & 1, (c >> 1) & 1, (c >> 2) & 1};
            for (int ft = 0; ft < 6; ++ft) {
                const Lattice fine{1, 1, 0.5};
                const auto pts = fine.cell_points({1, o, ft});
                std::array<double, 3> centroid{};
                for (const auto& p : pts)
                    for (int d = 0; d < 3; ++d) centroid[std::size_t(d)] += 0.125 * p[std::size_t(d)];
                t[std::size_t(kuhn_tet_containing(centroid))].push_back({o, ft});
            }
        }
        return t;
    }();
    return table;
}

inline CellIndex parent_cell(const CellIndex& c) {
    const Lattice fine{1, 1, 0.5};
    const auto pts = fine.cell_points({1, {c.cube[0] & 1, c.cube[1] & 1, c.cube[2] & 1}, c.tet});
    std::array<double, 3> centroid{};
    for (const auto& p : pts)
        for (int d = 0; d < 3; ++d) centroid[std::size_t(d)] += 0.125 * p[std::size_t(d)];
    return {c.level - 1, {c.cube[0] >> 1, c.cube[1] >> 1, c.cube[2] >> 1}, kuhn_tet_containing(centroid)};
}

// Level-j cells (as ids) all of whose descendants at the finest level are active.
inline std::vector<CellId> coarsen_covered(const Lattice& fine, const std::vector<CellId>& covered_fine) {
    const Lattice coarse = fine.coarser(fine.level - 1);
    std::vector<CellId> parents;
    parents.reserve(covered_fine.size() / 4);
    for (CellId id : covered_fine) parents.push_back(coarse.cell_id(parent_cell(fine.cell_index(id))));
    std::sort(parents.begin(), parents.end());
    parents.erase(std::unique(parents.begin(), parents.end()), parents.end());

    std::vector<CellId> out;
    for (CellId pid : parents) {
        const CellIndex p = coarse.cell_index(pid);
        bool all = true;
        for (const ChildRef& ch : kuhn_children()[std::size_t(p.tet)]) {
            const CellIndex c{fine.level,
                              {2 * p.cube[0] + ch.offset[0], 2 * p.cube[1] + ch.offset[1], 2 * p.cube[2] + ch.offset[2]},
                              ch.tet};
            if (!std::binary_search(covered_fine.begin(), covered_fine.end(), fine.cell_id(c))) {
                all = false;
                break;
            }
        }
        if (all) out.push_back(pid);
    }
    return out;
}

// Vertices whose whole star consists of covered cells.
inline std::vector<VertexId> interior_vertices(const Lattice& lat, const std::vector<CellId>& covered) {
    std::vector<VertexId> cand;
    for (CellId id : covered) {
        const auto v = lat.cell_vertices(lat.cell_index(id));
        cand.insert(cand.end(), v.begin(), v.end());
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    std::vector<VertexId> out;
    for (VertexId vid : cand) {
        const LatticePoint v = lat.vertex_point(vid);
        bool all = true;
        for (int c = 0; c < 8 && all; ++c) {
            const LatticePoint local{c & 1, (c >> 1) & 1, (c >> 2) & 1};
            const LatticePoint cube{v[0] - local[0], v[1] - local[1], v[2] - local[2]};
            for (int t = 0; t < 6 && all; ++t) {
                const auto pts = lat.cell_points({lat.level, {0, 0, 0}, t});
                if (std::find(pts.begin(), pts.end(), local) == pts.end()) continue;
                if (!lat.contains_cube(cube) ||
                    !std::binary_search(covered.begin(), covered.end(), lat.cell_id({lat.level, cube, t})))
                    all = false;
            }
        }
        if (all) out.push_back(vid);
    }
    return out;
}

inline long index_of(const std::vector<VertexId>& sorted, VertexId v) {
    const auto it = std::lower_bound(sorted.begin(), sorted.end(), v);
    return (it != sorted.end() && *it == v) ? long(it - sorted.begin()) : -1;
}

}  // namespace detail

struct MGLevel {
    Lattice lattice;
    std::vector<VertexId> dofs;        // interior vertices, sorted
    std::shared_ptr<const SparseMatrix> A;
    SparseMatrix prolongation;         // this level -> next finer level; empty on the finest
    std::shared_ptr<const SymmetricGaussSeidel> smoother;
};

/// Nested interior spaces V0_{h_j}, j = j_min..J, with Galerkin operators.
/// levels[0] is the coarsest; levels.back() holds A0 itself.
class MGHierarchy {
public:
    std::vector<MGLevel> levels;
    int cycles = 1;

    std::size_t num_levels() const { return levels.size(); }
    int coarsest_level() const { return levels.empty() ? -1 : levels.front().lattice.level; }

    /// z = B0^{-1} r: `cycles` symmetric V(1,1) iterations from zero with SGS smoothing.
    void apply(const Vector& r, Vector& z) const {
        z = Vector::Zero(r.size());
        const MGLevel& top = levels.back();
        for (int c = 0; c < cycles; ++c) {
            if (c == 0) {
                vcycle(levels.size() - 1, r, z);
            } else {
                Vector res = r - *top.A * z, e;
                vcycle(levels.size() - 1, res, e);
                z += e;
            }
        }
    }

    const SparseCholesky& coarse_solver() const { return coarse_; }

    friend MGHierarchy build_mg_hierarchy(const ActiveMesh&, const SubspaceSplit&, const SparseMatrix&, int, int);

private:
    void vcycle(std::size_t lvl, const Vector& r, Vector& x) const {
        if (lvl == 0) {
            x = coarse_.solve(r);
            return;
        }
        const MGLevel& L = levels[lvl];
        const MGLevel& C = levels[lvl - 1];
        x = Vector::Zero(r.size());
        L.smoother->smooth(r, x);
        const Vector res = r - *L.A * x;
        const Vector rc = C.prolongation.transpose() * res;  // restriction
        Vector ec;
        vcycle(lvl - 1, rc, ec);
        x += C.prolongation * ec;
        L.smoother->smooth(r, x);
    }

    SparseCholesky coarse_;
};

/// Builds the interior-space hierarchy below the mesh level. `max_levels` <= 0 uses every
/// level with a nonempty interior set; 1 gives a single exact level.
inline MGHierarchy build_mg_hierarchy(const ActiveMesh& mesh, const SubspaceSplit& split, const SparseMatrix& a0,
                                      int max_levels = 0, int cycles = 1) {
    if (a0.rows() != split.N0()) throw Error("build_mg_hierarchy: A0 does not match the interior dofs");
    const int J = mesh.level();

    // Covered cells and interior vertices, finest first.
    std::vector<Lattice> lats{mesh.lattice};
    std::vector<std::vector<VertexId>> dofs{split.interior_vertices};
    {
        const auto check = detail::interior_vertices(mesh.lattice, mesh.cell_ids);
        if (check != split.interior_vertices) throw Error("build_mg_hierarchy: interior dofs disagree with the mesh");
    }
    std::vector<CellId> covered = mesh.cell_ids;
    for (int j = J - 1; j >= 0; --j) {
        if (max_levels > 0 && int(lats.size()) >= max_levels) break;
        covered = detail::coarsen_covered(lats.back(), covered);
        Lattice lat = mesh.lattice.coarser(j);
        auto v = detail::interior_vertices(lat, covered);
        if (v.empty()) break;
        lats.push_back(lat);
        dofs.push_back(std::move(v));
    }
    if (lats.size() == 1 && J > 0 && max_levels != 1)
        std::cerr << "warning: multigrid hierarchy has a single level; using an exact interior solve\n";

    MGHierarchy h;
    h.cycles = cycles;
    const std::size_t L = lats.size();
    h.levels.resize(L);
    for (std::size_t k = 0; k < L; ++k) {
        h.levels[L - 1 - k].lattice = lats[k];
        h.levels[L - 1 - k].dofs = std::move(dofs[k]);
    }

    // Prolongation from level i to i+1 by P1 interpolation; every coarse hat must be reproduced.
    for (std::size_t i = 0; i + 1 < L; ++i) {
        const MGLevel& C = h.levels[i];
        const MGLevel& F = h.levels[i + 1];
        std::vector<Triplet> t;
        for (std::size_t row = 0; row < F.dofs.size(); ++row) {
            const LatticePoint f = F.lattice.vertex_point(F.dofs[row]);
            LatticePoint lo, hi;
            for (int d = 0; d < 3; ++d) {
                lo[std::size_t(d)] = f[std::size_t(d)] >> 1;
                hi[std::size_t(d)] = (f[std::size_t(d)] + 1) >> 1;
            }
            if (lo == hi) {
                const long c = detail::index_of(C.dofs, C.lattice.vertex_id(lo));
                if (c >= 0) t.push_back({row, std::size_t(c), 1.0});
            } else {
                for (const LatticePoint& p : {lo, hi}) {
                    const long c = detail::index_of(C.dofs, C.lattice.vertex_id(p));
                    if (c >= 0) t.push_back({row, std::size_t(c), 0.5});
                }
            }
        }
        h.levels[i].prolongation = SparseMatrix::from_triplets(F.dofs.size(), C.dofs.size(), std::move(t));

        // Nestedness: the fine neighbours of each coarse interior vertex must be fine interior dofs.
        for (VertexId cv : C.dofs) {
            const LatticePoint c = C.lattice.vertex_point(cv);
            const LatticePoint f{2 * c[0], 2 * c[1], 2 * c[2]};
            for (int s = -1; s <= 1; s += 2)
                for (int mask = 1; mask < 8; ++mask) {
                    LatticePoint m = f;
                    for (int d = 0; d < 3; ++d)
                        if (mask & (1 << d)) m[std::size_t(d)] += s;
                    if (detail::index_of(F.dofs, F.lattice.vertex_id(m)) < 0)
                        throw Error("build_mg_hierarchy: coarse space is not nested in the fine interior space");
                }
        }
    }

    h.levels.back().A = std::make_shared<const SparseMatrix>(a0);
    for (std::size_t i = L - 1; i-- > 0;) {
        const SparseMatrix& P = h.levels[i].prolongation;
        h.levels[i].A = std::make_shared<const SparseMatrix>(P.transpose() * (*h.levels[i + 1].A * P));
    }
    for (std::size_t i = 1; i < L; ++i) h.levels[i].smoother = std::make_shared<const SymmetricGaussSeidel>(*h.levels[i].A);
    h.coarse_.factorize(*h.levels.front().A);
    return h;
}

// ---------------------------------------------------------------------------
// Preconditioner configurations

struct PreconditionerSpec {
    enum class Kind { SGSFull, Block };
    enum class Interior { Exact, MGVCycle };
    enum class Boundary { Exact, SGS, Jacobi };

    Kind kind = Kind::Block;
    Interior b0 = Interior::Exact;
    Boundary b1 = Boundary::Exact;
    int n_cycles = 1;
    int mg_levels = 0;  // 0: all available

    static PreconditionerSpec sgs() { return {Kind::SGSFull, Interior::Exact, Boundary::Exact, 1, 0}; }
    static PreconditionerSpec pa() { return {Kind::Block, Interior::Exact, Boundary::Exact, 1, 0}; }
    static PreconditionerSpec pd() { return {Kind::Block, Interior::Exact, Boundary::SGS, 1, 0}; }
    static PreconditionerSpec pb() { return {Kind::Block, Interior::MGVCycle, Boundary::SGS, 1, 0}; }

    static PreconditionerSpec from_name(const std::string& name) {
        if (name == "sgs") return sgs();
        if (name == "pa") return pa();
        if (name == "pd") return pd();
        if (name == "pb") return pb();
        if (name == "pj") return {Kind::Block, Interior::Exact, Boundary::Jacobi, 1, 0};
        throw Error("unknown preconditioner '" + name + "' (expected sgs, pa, pd, pb or pj)");
    }
};

/// Above this size exact sub-solves switch from Cholesky to inner CG.
inline constexpr std::size_t kCholeskyLimit = 100000;

/// Exact solve of an SPD block: Cholesky, or SGS-preconditioned CG to 1e-10 for large blocks.
class ExactSolve {
public:
    ExactSolve() = default;
    explicit ExactSolve(std::shared_ptr<const SparseMatrix> a) : a_(std::move(a)) {
        if (a_->rows() <= kCholeskyLimit)
            chol_ = std::make_shared<SparseCholesky>(*a_);
        else
            sgs_ = std::make_shared<SymmetricGaussSeidel>(*a_);
    }
    void apply(const Vector& r, Vector& z) const {
        if (chol_) {
            z = chol_->solve(r);
            return;
        }
        auto prec = [this](const Vector& x, Vector& y) { sgs_->apply(x, y); };
        z = pcg(*a_, r, prec, 1e-10, 10000).first;
    }

private:
    std::shared_ptr<const SparseMatrix> a_;
    std::shared_ptr<SparseCholesky> chol_;
    std::shared_ptr<SymmetricGaussSeidel> sgs_;
};

/// Concrete preconditioner for one assembled system. Cheap to copy; state is shared.
class BlockPreconditioner {
public:
    BlockPreconditioner(const PreconditionerSpec& spec, const SparseMatrix& a, const SubspaceSplit& split,
                        const ActiveMesh* mesh = nullptr)
        : spec_(spec), n0_(split.N0()), n1_(split.N1()) {
        if (spec.kind == PreconditionerSpec::Kind::SGSFull) {
            full_ = std::make_shared<const SparseMatrix>(a);
            sgs_full_ = std::make_shared<const SymmetricGaussSeidel>(*full_);
            return;
        }
        BlockPartition part = extract_blocks(a, split);
        a0_ = std::make_shared<const SparseMatrix>(std::move(part.A0));
        a1_ = std::make_shared<const SparseMatrix>(std::move(part.A1));
        if (spec.b0 == PreconditionerSpec::Interior::Exact) {
            if (n0_ > 0) exact0_ = std::make_shared<ExactSolve>(a0_);
        } else {
            if (!mesh) throw Error("preconditioner: multigrid interior block requires the active mesh");
            if (n0_ > 0)
                mg_ = std::make_shared<MGHierarchy>(build_mg_hierarchy(*mesh, split, *a0_, spec.mg_levels, spec.n_cycles));
        }
        switch (spec.b1) {
            case PreconditionerSpec::Boundary::Exact: exact1_ = std::make_shared<ExactSolve>(a1_); break;
            case PreconditionerSpec::Boundary::SGS: sgs1_ = std::make_shared<SymmetricGaussSeidel>(*a1_); break;
            case PreconditionerSpec::Boundary::Jacobi: jac1_ = std::make_shared<Jacobi>(*a1_); break;
        }
    }

    void apply(const Vector& r, Vector& z) const {
        if (sgs_full_) {
            sgs_full_->apply(r, z);
            return;
        }
        z.resize(r.size());
        Vector zi, zb;
        const Vector ri = r.head(Eigen::Index(n0_));
        const Vector rb = r.tail(Eigen::Index(n1_));
        if (n0_ > 0) {
            if (exact0_)
                exact0_->apply(ri, zi);
            else
                mg_->apply(ri, zi);
            z.head(Eigen::Index(n0_)) = zi;
        }
        if (exact1_)
            exact1_->apply(rb, zb);
        else if (sgs1_)
            sgs1_->apply(rb, zb);
        else
            jac1_->apply(rb, zb);
        z.tail(Eigen::Index(n1_)) = zb;
    }

    Preconditioner as_function() const {
        return [self = *this](const Vector& r, Vector& z) { self.apply(r, z); };
    }

    const PreconditionerSpec& spec() const { return spec_; }
    const MGHierarchy* hierarchy() const { return mg_.get(); }
    const SparseMatrix* interior_block() const { return a0_.get(); }
    const SparseMatrix* boundary_block() const { return a1_.get(); }

private:
    PreconditionerSpec spec_;
    std::size_t n0_, n1_;
    std::shared_ptr<const SparseMatrix> full_, a0_, a1_;
    std::shared_ptr<const SymmetricGaussSeidel> sgs_full_;
    std::shared_ptr<ExactSolve> exact0_, exact1_;
    std::shared_ptr<MGHierarchy> mg_;
    std::shared_ptr<SymmetricGaussSeidel> sgs1_;
    std::shared_ptr<Jacobi> jac1_;
};

inline void apply_preconditioner(const BlockPreconditioner& p, const Vector& r, Vector& z) { p.apply(r, z); }

}  // namespace cutfem
