#pragma once

// Implicit Kuhn (Freudenthal) triangulation of a cube [-w, w]^3 and the
// fictitious-domain active mesh extracted from it.

#include "cutfem/geometry.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

namespace cutfem {

using VertexId = std::uint64_t;
using CellId = std::uint64_t;

/// Axis permutations defining the six Kuhn tetrahedra of a cube.
inline constexpr std::array<std::array<int, 3>, 6> kKuhnPermutations{{
    {0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}}};

inline int kuhn_tet_id(const std::array<int, 3>& perm) {
    for (int t = 0; t < 6; ++t)
        if (kKuhnPermutations[t] == perm) return t;
    throw Error("not a permutation");
}

using LatticePoint = std::array<int, 3>;

/// Cell of the structured background mesh: cube (i,j,k) and Kuhn tet 0..5.
struct CellIndex {
    int level = 0;
    LatticePoint cube{0, 0, 0};
    int tet = 0;

    friend bool operator==(const CellIndex&, const CellIndex&) = default;
};

/// Uniform lattice of n^3 cubes covering [-half_width, half_width]^3, n = base * 2^level.
struct Lattice {
    int level = 0;
    int base_cells = 4;
    double half_width = 1.5;

    int n() const { return base_cells << level; }
    double spacing() const { return 2.0 * half_width / n(); }
    Lattice coarser(int j) const { return Lattice{j, base_cells, half_width}; }

    VertexId vertex_id(const LatticePoint& p) const {
        const auto m = static_cast<VertexId>(n() + 1);
        return (static_cast<VertexId>(p[2]) * m + static_cast<VertexId>(p[1])) * m + static_cast<VertexId>(p[0]);
    }
    LatticePoint vertex_point(VertexId id) const {
        const auto m = static_cast<VertexId>(n() + 1);
        return {static_cast<int>(id % m), static_cast<int>((id / m) % m), static_cast<int>(id / (m * m))};
    }
    Vec3 coords(const LatticePoint& p) const {
        const double s = spacing();
        return {-half_width + s * p[0], -half_width + s * p[1], -half_width + s * p[2]};
    }
    Vec3 vertex_coords(VertexId id) const { return coords(vertex_point(id)); }

    bool contains_cube(const LatticePoint& c) const {
        const int m = n();
        return c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] < m && c[1] < m && c[2] < m;
    }

    CellId cell_id(const CellIndex& c) const {
        const auto m = static_cast<CellId>(n());
        return ((static_cast<CellId>(c.cube[2]) * m + static_cast<CellId>(c.cube[1])) * m +
                static_cast<CellId>(c.cube[0])) * 6 + static_cast<CellId>(c.tet);
    }
    CellIndex cell_index(CellId id) const {
        const auto m = static_cast<CellId>(n());
        const CellId cube = id / 6;
        return {level,
                {static_cast<int>(cube % m), static_cast<int>((cube / m) % m), static_cast<int>(cube / (m * m))},
                static_cast<int>(id % 6)};
    }

    /// Lattice points of the tet, ordered along its Kuhn chain.
    std::array<LatticePoint, 4> cell_points(const CellIndex& c) const {
        std::array<LatticePoint, 4> v;
        v[0] = c.cube;
        for (int m = 0; m < 3; ++m) {
            v[m + 1] = v[m];
            ++v[m + 1][kKuhnPermutations[c.tet][m]];
        }
        return v;
    }
    std::array<VertexId, 4> cell_vertices(const CellIndex& c) const {
        const auto p = cell_points(c);
        return {vertex_id(p[0]), vertex_id(p[1]), vertex_id(p[2]), vertex_id(p[3])};
    }
    Tet cell_geometry(const CellIndex& c) const {
        const auto p = cell_points(c);
        return {coords(p[0]), coords(p[1]), coords(p[2]), coords(p[3])};
    }

    /// Neighbor across the face opposite local vertex `opposite`; may lie outside the lattice.
    CellIndex face_neighbor(const CellIndex& c, int opposite) const {
        const auto& pi = kKuhnPermutations[c.tet];
        CellIndex nb = c;
        std::array<int, 3> perm = pi;
        if (opposite == 0) {
            ++nb.cube[pi[0]];
            perm = {pi[1], pi[2], pi[0]};
        } else if (opposite == 3) {
            --nb.cube[pi[2]];
            perm = {pi[2], pi[0], pi[1]};
        } else {
            std::swap(perm[opposite - 1], perm[opposite]);
        }
        nb.tet = kuhn_tet_id(perm);
        return nb;
    }

    /// Diameter of every Kuhn tet at this level: the cube diagonal.
    double cell_diameter() const { return std::sqrt(3.0) * spacing(); }
};

/// Interior face of the strip carrying a ghost penalty.
struct GhostFace {
    std::array<VertexId, 3> vertices;
    int left = -1;   // active-cell indices
    int right = -1;
    double diameter = 0.0;
};

/// Face of the fictitious domain boundary.
struct BoundaryFace {
    std::array<VertexId, 3> vertices;
    int cell = -1;
    double diameter = 0.0;
};

/// Active cells T_h of one refinement level with strip and face sets.
struct ActiveMesh {
    Lattice lattice;
    LevelSet levelset;
    std::vector<CellId> cell_ids;      // sorted
    std::vector<std::uint8_t> is_cut;  // parallel to cell_ids
    std::vector<GhostFace> ghost_faces;
    std::vector<BoundaryFace> outer_boundary_faces;

    int level() const { return lattice.level; }
    std::size_t num_cells() const { return cell_ids.size(); }
    CellIndex cell(std::size_t a) const { return lattice.cell_index(cell_ids[a]); }
    bool cut(std::size_t a) const { return is_cut[a] != 0; }
    std::size_t num_cut_cells() const {
        return static_cast<std::size_t>(std::count(is_cut.begin(), is_cut.end(), std::uint8_t{1}));
    }
    Tet geometry(std::size_t a) const { return lattice.cell_geometry(cell(a)); }
    std::array<VertexId, 4> vertices(std::size_t a) const { return lattice.cell_vertices(cell(a)); }
    std::array<double, 4> phi(std::size_t a) const {
        const Tet t = geometry(a);
        return {levelset(t[0]), levelset(t[1]), levelset(t[2]), levelset(t[3])};
    }
    double h_T(std::size_t a) const { return diameter(geometry(a)); }

    /// Active-cell index of `id`, or -1.
    int find(CellId id) const {
        const auto it = std::lower_bound(cell_ids.begin(), cell_ids.end(), id);
        if (it == cell_ids.end() || *it != id) return -1;
        return static_cast<int>(it - cell_ids.begin());
    }
};

namespace detail {

inline std::array<VertexId, 3> face_without(const std::array<VertexId, 4>& v, int opposite) {
    std::array<VertexId, 3> f{};
    int k = 0;
    for (int i = 0; i < 4; ++i)
        if (i != opposite) f[k++] = v[i];
    std::sort(f.begin(), f.end());
    return f;
}

inline double face_diameter(const Lattice& lat, const std::array<VertexId, 3>& f) {
    return diameter(std::array<Vec3, 3>{lat.vertex_coords(f[0]), lat.vertex_coords(f[1]), lat.vertex_coords(f[2])});
}

}  // namespace detail

/// Builds strip flags and face sets for an explicit set of active cells.
/// A cell is cut iff its vertex values of `ls` have mixed signs (zero counts as inside),
/// or it has a face on the fictitious-domain boundary.
inline ActiveMesh make_active_mesh(const Lattice& lattice, const LevelSet& ls, std::vector<CellId> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

    ActiveMesh mesh;
    mesh.lattice = lattice;
    mesh.levelset = ls;
    mesh.cell_ids = std::move(ids);
    mesh.is_cut.assign(mesh.cell_ids.size(), 0);

    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const auto phi = mesh.phi(a);
        const bool any_in = std::any_of(phi.begin(), phi.end(), is_inside_value);
        const bool any_out = !std::all_of(phi.begin(), phi.end(), is_inside_value);
        if (any_in && any_out) mesh.is_cut[a] = 1;
    }
    // Cells with a face on the domain boundary join the strip even with all-inside vertices;
    // this only happens for hand-built cell sets.
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        if (mesh.is_cut[a]) continue;
        const CellIndex c = mesh.cell(a);
        for (int f = 0; f < 4; ++f) {
            const CellIndex nb = lattice.face_neighbor(c, f);
            if (!lattice.contains_cube(nb.cube) || mesh.find(lattice.cell_id(nb)) < 0) {
                mesh.is_cut[a] = 1;
                break;
            }
        }
    }

    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        if (!mesh.cut(a)) continue;
        const CellIndex c = mesh.cell(a);
        const auto verts = lattice.cell_vertices(c);
        for (int f = 0; f < 4; ++f) {
            const auto fv = detail::face_without(verts, f);
            const CellIndex nb = lattice.face_neighbor(c, f);
            const int b = lattice.contains_cube(nb.cube) ? mesh.find(lattice.cell_id(nb)) : -1;
            const double hf = detail::face_diameter(lattice, fv);
            if (b < 0) {
                mesh.outer_boundary_faces.push_back({fv, static_cast<int>(a), hf});
            } else if (!mesh.cut(static_cast<std::size_t>(b)) || static_cast<std::size_t>(b) > a) {
                mesh.ghost_faces.push_back({fv, static_cast<int>(a), b, hf});
            }
        }
    }
    return mesh;
}

/// Active mesh at `level`: all background tets with some vertex value <= 0.
inline ActiveMesh build_active_mesh(const Lattice& lattice, const LevelSet& ls) {
    if (lattice.level < 0) throw Error("build_active_mesh: negative level");
    const double w = lattice.half_width;
    for (int d = 0; d < 3; ++d) {
        if (!(ls.center[d] - ls.radius > -w && ls.center[d] + ls.radius < w))
            throw Error("build_active_mesh: sphere is not strictly inside the background box");
    }
    const int n = lattice.n();
    const int m = n + 1;
    std::vector<double> phi(static_cast<std::size_t>(m) * m * m);
    for (int k = 0; k < m; ++k)
        for (int j = 0; j < m; ++j)
            for (int i = 0; i < m; ++i)
                phi[(static_cast<std::size_t>(k) * m + j) * m + i] = ls(lattice.coords({i, j, k}));
    auto value = [&](const LatticePoint& p) {
        return phi[(static_cast<std::size_t>(p[2]) * m + p[1]) * m + p[0]];
    };

    std::vector<CellId> ids;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                bool any = false;
                for (int c = 0; c < 8 && !any; ++c)
                    any = is_inside_value(value({i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)}));
                if (!any) continue;
                for (int t = 0; t < 6; ++t) {
                    const CellIndex cell{lattice.level, {i, j, k}, t};
                    const auto pts = lattice.cell_points(cell);
                    if (std::any_of(pts.begin(), pts.end(), [&](const LatticePoint& p) { return is_inside_value(value(p)); }))
                        ids.push_back(lattice.cell_id(cell));
                }
            }
    return make_active_mesh(lattice, ls, std::move(ids));
}

inline ActiveMesh build_active_mesh(int level, const LevelSet& ls) {
    return build_active_mesh(Lattice{level, 4, 1.5}, ls);
}

// ---------------------------------------------------------------------------
// Degrees of freedom

/// Dof numbering: interior vertices of Omega_h first, boundary vertices last,
/// lexicographic inside each class.
struct SubspaceSplit {
    std::vector<VertexId> interior_vertices;  // sorted
    std::vector<VertexId> boundary_vertices;  // sorted

    std::size_t N0() const { return interior_vertices.size(); }
    std::size_t N1() const { return boundary_vertices.size(); }
    std::size_t N() const { return N0() + N1(); }

    bool is_boundary_dof(std::size_t dof) const { return dof >= N0(); }

    /// Dof of a lattice vertex, or -1 if it carries none.
    long dof(VertexId v) const {
        auto it = std::lower_bound(interior_vertices.begin(), interior_vertices.end(), v);
        if (it != interior_vertices.end() && *it == v) return it - interior_vertices.begin();
        it = std::lower_bound(boundary_vertices.begin(), boundary_vertices.end(), v);
        if (it != boundary_vertices.end() && *it == v)
            return static_cast<long>(N0()) + (it - boundary_vertices.begin());
        return -1;
    }
    VertexId vertex(std::size_t dof) const {
        return dof < N0() ? interior_vertices[dof] : boundary_vertices[dof - N0()];
    }
};

inline SubspaceSplit classify_dofs(const ActiveMesh& mesh) {
    std::vector<VertexId> all;
    all.reserve(mesh.num_cells() * 4);
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const auto v = mesh.vertices(a);
        all.insert(all.end(), v.begin(), v.end());
    }
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());

    SubspaceSplit split;
    for (const auto& f : mesh.outer_boundary_faces)
        split.boundary_vertices.insert(split.boundary_vertices.end(), f.vertices.begin(), f.vertices.end());
    std::sort(split.boundary_vertices.begin(), split.boundary_vertices.end());
    split.boundary_vertices.erase(std::unique(split.boundary_vertices.begin(), split.boundary_vertices.end()),
                                  split.boundary_vertices.end());
    std::set_difference(all.begin(), all.end(), split.boundary_vertices.begin(), split.boundary_vertices.end(),
                        std::back_inserter(split.interior_vertices));
    return split;
}

/// Local-to-global dof map of an active cell.
inline std::array<long, 4> cell_dofs(const ActiveMesh& mesh, const SubspaceSplit& split, std::size_t a) {
    const auto v = mesh.vertices(a);
    return {split.dof(v[0]), split.dof(v[1]), split.dof(v[2]), split.dof(v[3])};
}

/// True iff the strip coincides with the active cells touching the domain boundary.
inline bool validate_assumption(const ActiveMesh& mesh, const SubspaceSplit& split) {
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const auto d = cell_dofs(mesh, split, a);
        const bool touches = std::any_of(d.begin(), d.end(), [&](long i) { return split.is_boundary_dof(static_cast<std::size_t>(i)); });
        if (touches != mesh.cut(a)) return false;
    }
    return true;
}

inline bool validate_assumption(const ActiveMesh& mesh) { return validate_assumption(mesh, classify_dofs(mesh)); }

/// Legacy ASCII VTK: cell scalar 0 = interior / 1 = cut, point scalar 0 = interior dof / 1 = boundary dof.
inline void write_vtk(std::ostream& os, const ActiveMesh& mesh, const SubspaceSplit& split) {
    os << "# vtk DataFile Version 3.0\n";
    os << "active mesh level " << mesh.level() << "\n";
    os << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
    os.precision(17);
    os << "POINTS " << split.N() << " double\n";
    for (std::size_t i = 0; i < split.N(); ++i) {
        const Vec3 x = mesh.lattice.vertex_coords(split.vertex(i));
        os << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
    }
    os << "CELLS " << mesh.num_cells() << ' ' << 5 * mesh.num_cells() << '\n';
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) {
        const auto d = cell_dofs(mesh, split, a);
        os << 4 << ' ' << d[0] << ' ' << d[1] << ' ' << d[2] << ' ' << d[3] << '\n';
    }
    os << "CELL_TYPES " << mesh.num_cells() << '\n';
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) os << "10\n";
    os << "CELL_DATA " << mesh.num_cells() << "\nSCALARS cut int 1\nLOOKUP_TABLE default\n";
    for (std::size_t a = 0; a < mesh.num_cells(); ++a) os << int(mesh.is_cut[a]) << '\n';
    os << "POINT_DATA " << split.N() << "\nSCALARS dof_class int 1\nLOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < split.N(); ++i) os << (split.is_boundary_dof(i) ? 1 : 0) << '\n';
}

inline void write_vtk(const std::string& path, const ActiveMesh& mesh, const SubspaceSplit& split) {
    std::ofstream os(path);
    if (!os) throw Error("cannot open " + path);
    write_vtk(os, mesh, split);
}

}  // namespace cutfem
