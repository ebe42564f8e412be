#pragma once

// Structured triangulations of the perforated unit cell Y* = Y \ T and of the
// perforated domain built by scaling and tiling the cell mesh.

#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "steklov/mesh.hpp"

namespace steklov {

enum class HoleKind { none, square, disk };

struct CellGeometry {
    HoleKind hole_kind = HoleKind::square;
    Vec2 hole_center{0.5, 0.5};
    double hole_size = 0.5; // square side length, or disk radius
    int subdivisions = 8;   // grid resolution m per unit length
};

struct EpsilonLevel {
    int n = 2; // epsilon = 1/n

    explicit EpsilonLevel(int n_) : n(n_) {
        if (n < 2) throw config_error("epsilon level requires n >= 2");
    }
    double epsilon() const { return 1.0 / n; }
};

namespace detail {

// Integer-keyed coordinate hash at 1e-12 resolution.
struct CoordKey {
    std::int64_t x;
    std::int64_t y;
    bool operator==(const CoordKey&) const = default;
};

struct CoordKeyHash {
    std::size_t operator()(const CoordKey& k) const {
        std::uint64_t h = fnv1a64({reinterpret_cast<const char*>(&k), sizeof(k)});
        return static_cast<std::size_t>(h);
    }
};

inline CoordKey coord_key(Vec2 p) {
    return {static_cast<std::int64_t>(std::llround(p.x * 1e12)),
            static_cast<std::int64_t>(std::llround(p.y * 1e12))};
}

inline void validate_cell_geometry(const CellGeometry& g) {
    const int m = g.subdivisions;
    if (g.hole_kind == HoleKind::none) {
        if (m < 2) throw config_error("cell mesh needs subdivisions >= 2");
        return;
    }
    if (m < 8) throw config_error("cell mesh with a hole needs subdivisions >= 8");
    if (!(g.hole_size > 0.0)) throw config_error("hole size must be positive");

    const double half = g.hole_kind == HoleKind::square ? 0.5 * g.hole_size : g.hole_size;
    const double lo_x = g.hole_center.x - half;
    const double hi_x = g.hole_center.x + half;
    const double lo_y = g.hole_center.y - half;
    const double hi_y = g.hole_center.y + half;
    const double margin = 1.0 / m;
    if (lo_x < margin - 1e-12 || lo_y < margin - 1e-12 || hi_x > 1.0 - margin + 1e-12 ||
        hi_y > 1.0 - margin + 1e-12)
        throw config_error("hole too large or too close to cell faces: margin < 1/m");

    if (g.hole_kind == HoleKind::square) {
        for (double c : {lo_x, hi_x, lo_y, hi_y}) {
            const double scaled = c * m;
            if (std::abs(scaled - std::llround(scaled)) > 1e-9)
                throw config_error(
                    "square hole boundary is not aligned to multiples of 1/m at resolution m");
        }
        if (std::llround(hi_x * m) - std::llround(lo_x * m) < 1)
            throw config_error("subdivisions too small to resolve hole");
    } else {
        if (2.0 * g.hole_size < 2.0 / m)
            throw config_error("subdivisions too small to resolve hole");
    }
}

} // namespace detail

/// Structured triangulation of [0,1]^2 at resolution m with the hole removed.
/// Faces are tagged FACE_*; hole boundary is tagged HOLE; periodic pairs link
/// right->left and top->bottom face nodes.
inline Mesh build_cell_mesh(const CellGeometry& g) {
    detail::validate_cell_geometry(g);
    const int m = g.subdivisions;
    const double h = 1.0 / m;

    // Cell (i,j) covers [i,i+1]x[j,j+1] in grid units.
    auto cell_removed = [&](int i, int j) -> bool {
        if (g.hole_kind == HoleKind::none) return false;
        if (g.hole_kind == HoleKind::square) {
            const double lo_x = (g.hole_center.x - 0.5 * g.hole_size) * m;
            const double hi_x = (g.hole_center.x + 0.5 * g.hole_size) * m;
            const double lo_y = (g.hole_center.y - 0.5 * g.hole_size) * m;
            const double hi_y = (g.hole_center.y + 0.5 * g.hole_size) * m;
            return i + 1 <= hi_x + 1e-9 && i >= lo_x - 1e-9 && j + 1 <= hi_y + 1e-9 &&
                   j >= lo_y - 1e-9;
        }
        const Vec2 centroid{(i + 0.5) * h, (j + 0.5) * h};
        return norm(centroid - g.hole_center) < g.hole_size;
    };

    // Grid nodes that belong to at least one kept cell.
    std::vector<int> node_id(static_cast<std::size_t>(m + 1) * (m + 1), -1);
    auto gid = [&](int i, int j) { return j * (m + 1) + i; };

    // Node on the kept/removed interface (cells off the grid count as kept).
    auto removed_at = [&](int i, int j) {
        return i >= 0 && j >= 0 && i < m && j < m && cell_removed(i, j);
    };
    auto interface_node = [&](int i, int j) {
        bool rm = false, kp = false;
        for (int di = -1; di <= 0; ++di)
            for (int dj = -1; dj <= 0; ++dj)
                (removed_at(i + di, j + dj) ? rm : kp) = true;
        return rm && kp;
    };

    Mesh mesh;
    auto touch_node = [&](int i, int j) -> int {
        int& id = node_id[gid(i, j)];
        if (id < 0) {
            id = mesh.node_count();
            mesh.nodes.push_back({static_cast<double>(i) / m, static_cast<double>(j) / m});
        }
        return id;
    };

    for (int j = 0; j < m; ++j) {
        for (int i = 0; i < m; ++i) {
            if (cell_removed(i, j)) continue;
            const int n00 = touch_node(i, j);
            const int n10 = touch_node(i + 1, j);
            const int n01 = touch_node(i, j + 1);
            const int n11 = touch_node(i + 1, j + 1);
            // Split along the diagonal that avoids triangles with all three
            // vertices on the hole boundary; those degenerate once the disk
            // boundary nodes are projected onto the circle.
            const bool flip_diag = interface_node(i, j) && interface_node(i + 1, j + 1) &&
                                   !(interface_node(i + 1, j) && interface_node(i, j + 1));
            if (flip_diag) {
                mesh.triangles.push_back({n00, n10, n01});
                mesh.triangles.push_back({n10, n11, n01});
            } else {
                mesh.triangles.push_back({n00, n10, n11});
                mesh.triangles.push_back({n00, n11, n01});
            }
        }
    }
    if (mesh.triangles.empty()) throw config_error("hole removes the entire cell");

    // Boundary edges: used by exactly one triangle.
    std::map<std::pair<int, int>, int> edge_use;
    for (const auto& tr : mesh.triangles) {
        ++edge_use[std::minmax(tr.a, tr.b)];
        ++edge_use[std::minmax(tr.b, tr.c)];
        ++edge_use[std::minmax(tr.c, tr.a)];
    }
    const double tol = 1e-12;
    for (const auto& [e, uses] : edge_use) {
        if (uses != 1) continue;
        const Vec2 pa = mesh.nodes[e.first];
        const Vec2 pb = mesh.nodes[e.second];
        BoundaryTag tag;
        if (std::abs(pa.x) <= tol && std::abs(pb.x) <= tol)
            tag = BoundaryTag::FACE_LEFT;
        else if (std::abs(pa.x - 1.0) <= tol && std::abs(pb.x - 1.0) <= tol)
            tag = BoundaryTag::FACE_RIGHT;
        else if (std::abs(pa.y) <= tol && std::abs(pb.y) <= tol)
            tag = BoundaryTag::FACE_BOTTOM;
        else if (std::abs(pa.y - 1.0) <= tol && std::abs(pb.y - 1.0) <= tol)
            tag = BoundaryTag::FACE_TOP;
        else
            tag = BoundaryTag::HOLE;
        mesh.boundary_edges.push_back({e.first, e.second, tag});
    }

    // Project disk hole boundary nodes onto the exact circle.
    if (g.hole_kind == HoleKind::disk) {
        std::vector<bool> on_hole = mesh.nodes_on_tag(BoundaryTag::HOLE);
        for (int i = 0; i < mesh.node_count(); ++i) {
            if (!on_hole[i]) continue;
            const Vec2 d = mesh.nodes[i] - g.hole_center;
            const double r = norm(d);
            if (r <= 0.0) throw numeric_error("disk hole boundary node at hole center");
            mesh.nodes[i] = g.hole_center + (g.hole_size / r) * d;
        }
    }

    // Periodic pairs: right face -> left face, top face -> bottom face.
    // The (1,1) corner pairs to (0,1); constraint chains are flattened by DofMap.
    for (int j = 0; j <= m; ++j) {
        const int right = node_id[gid(m, j)];
        const int left = node_id[gid(0, j)];
        if (right >= 0 && left >= 0) mesh.periodic_pairs.push_back({right, left});
    }
    for (int i = 0; i < m; ++i) { // i == m handled by the right-face column
        const int top = node_id[gid(i, m)];
        const int bottom = node_id[gid(i, 0)];
        if (top >= 0 && bottom >= 0) mesh.periodic_pairs.push_back({top, bottom});
    }

    mesh.validate();
    return mesh;
}

/// The cell mesh scaled by 1/n and tiled n x n over the unit square.
/// All hole boundaries keep tag HOLE; the outer square boundary is DIRICHLET;
/// no periodic pairs. `max_dofs` bounds the pre-merge node count.
inline Mesh build_perforated_domain_mesh(const CellGeometry& g, int n, int max_dofs = 200000) {
    if (g.hole_kind == HoleKind::none)
        throw config_error("perforated domain requires a hole in the reference cell");
    if (n < 1) throw config_error("tiling count must be >= 1");
    const Mesh cell = build_cell_mesh(g);

    const std::int64_t estimate =
        static_cast<std::int64_t>(n) * n * static_cast<std::int64_t>(cell.node_count());
    if (estimate > max_dofs)
        throw config_error("perforated mesh would exceed the dof budget: " +
                           std::to_string(estimate) + " > " + std::to_string(max_dofs));

    Mesh mesh;
    std::unordered_map<detail::CoordKey, int, detail::CoordKeyHash> merged;
    merged.reserve(static_cast<std::size_t>(estimate));

    std::vector<int> local(cell.node_count());
    for (int ty = 0; ty < n; ++ty) {
        for (int tx = 0; tx < n; ++tx) {
            for (int i = 0; i < cell.node_count(); ++i) {
                const Vec2 p{(tx + cell.nodes[i].x) / n, (ty + cell.nodes[i].y) / n};
                const auto key = detail::coord_key(p);
                auto it = merged.find(key);
                if (it == merged.end()) {
                    const int id = mesh.node_count();
                    merged.emplace(key, id);
                    mesh.nodes.push_back(p);
                    local[i] = id;
                } else {
                    local[i] = it->second;
                }
            }
            for (const auto& tr : cell.triangles)
                mesh.triangles.push_back({local[tr.a], local[tr.b], local[tr.c]});
        }
    }

    // Rebuild boundary edges after the merge; interface edges are now interior.
    std::map<std::pair<int, int>, int> edge_use;
    for (const auto& tr : mesh.triangles) {
        ++edge_use[std::minmax(tr.a, tr.b)];
        ++edge_use[std::minmax(tr.b, tr.c)];
        ++edge_use[std::minmax(tr.c, tr.a)];
    }
    const double tol = 1e-12;
    auto on_outer_line = [&](Vec2 p) {
        return std::abs(p.x) <= tol || std::abs(p.x - 1.0) <= tol || std::abs(p.y) <= tol ||
               std::abs(p.y - 1.0) <= tol;
    };
    for (const auto& [e, uses] : edge_use) {
        if (uses != 1) continue;
        const Vec2 pa = mesh.nodes[e.first];
        const Vec2 pb = mesh.nodes[e.second];
        const BoundaryTag tag = (on_outer_line(pa) && on_outer_line(pb)) ? BoundaryTag::DIRICHLET
                                                                         : BoundaryTag::HOLE;
        mesh.boundary_edges.push_back({e.first, e.second, tag});
    }

    mesh.validate();
    return mesh;
}

} // namespace steklov
