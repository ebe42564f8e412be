#pragma once

// P1 triangle mesh with tagged boundary edges and periodic node pairing.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "steklov/common.hpp"

namespace steklov {

enum class BoundaryTag : int {
    HOLE = 1,
    DIRICHLET = 2,
    FACE_LEFT = 3,
    FACE_RIGHT = 4,
    FACE_BOTTOM = 5,
    FACE_TOP = 6,
};

struct BoundaryEdge {
    int a = -1;
    int b = -1;
    BoundaryTag tag = BoundaryTag::HOLE;
};

struct Triangle {
    int a = -1;
    int b = -1;
    int c = -1;
};

/// (slave, master): slave node coordinates equal master + (1,0) or (0,1).
struct PeriodicPair {
    int slave = -1;
    int master = -1;
};

struct Mesh {
    std::vector<Vec2> nodes;
    std::vector<Triangle> triangles;
    std::vector<BoundaryEdge> boundary_edges;
    std::vector<PeriodicPair> periodic_pairs;

    int node_count() const { return static_cast<int>(nodes.size()); }
    int triangle_count() const { return static_cast<int>(triangles.size()); }

    double triangle_area(int t) const {
        const Triangle& tr = triangles[t];
        return 0.5 * cross(nodes[tr.b] - nodes[tr.a], nodes[tr.c] - nodes[tr.a]);
    }

    double total_area() const {
        double s = 0.0;
        for (int t = 0; t < triangle_count(); ++t) s += triangle_area(t);
        return s;
    }

    double edge_length(const BoundaryEdge& e) const { return norm(nodes[e.b] - nodes[e.a]); }

    double tagged_perimeter(BoundaryTag tag) const {
        double s = 0.0;
        for (const auto& e : boundary_edges)
            if (e.tag == tag) s += edge_length(e);
        return s;
    }

    int tagged_edge_count(BoundaryTag tag) const {
        int c = 0;
        for (const auto& e : boundary_edges)
            if (e.tag == tag) ++c;
        return c;
    }

    bool has_tag(BoundaryTag tag) const {
        for (const auto& e : boundary_edges)
            if (e.tag == tag) return true;
        return false;
    }

    std::vector<bool> nodes_on_tag(BoundaryTag tag) const {
        std::vector<bool> on(nodes.size(), false);
        for (const auto& e : boundary_edges) {
            if (e.tag == tag) {
                on[e.a] = true;
                on[e.b] = true;
            }
        }
        return on;
    }

    /// Structural validity: positive areas, conforming edges, no orphans,
    /// well-formed boundary loops, periodic pair offsets. Throws on failure.
    void validate() const {
        if (nodes.empty() || triangles.empty()) throw numeric_error("mesh: empty");
        for (int t = 0; t < triangle_count(); ++t) {
            const Triangle& tr = triangles[t];
            for (int v : {tr.a, tr.b, tr.c})
                if (v < 0 || v >= node_count()) throw numeric_error("mesh: node index out of range");
            if (!(triangle_area(t) > 0.0))
                throw numeric_error("mesh: nonpositive triangle area at triangle " +
                                    std::to_string(t));
        }

        // Each interior edge in exactly 2 triangles, each boundary edge in exactly 1.
        std::map<std::pair<int, int>, int> edge_use;
        for (const auto& tr : triangles) {
            const std::array<std::pair<int, int>, 3> edges = {
                std::minmax(tr.a, tr.b), std::minmax(tr.b, tr.c), std::minmax(tr.c, tr.a)};
            for (auto e : edges) ++edge_use[e];
        }
        for (const auto& [e, uses] : edge_use)
            if (uses > 2) throw numeric_error("mesh: edge shared by more than 2 triangles");

        std::map<std::pair<int, int>, int> bedge_seen;
        for (const auto& be : boundary_edges) {
            if (be.a < 0 || be.a >= node_count() || be.b < 0 || be.b >= node_count())
                throw numeric_error("mesh: boundary edge node out of range");
            auto key = std::minmax(be.a, be.b);
            auto it = edge_use.find(key);
            if (it == edge_use.end()) throw numeric_error("mesh: boundary edge not a mesh edge");
            if (it->second != 1) throw numeric_error("mesh: boundary edge has 2 triangles");
            if (++bedge_seen[key] > 1) throw numeric_error("mesh: duplicate boundary edge");
        }
        for (const auto& [e, uses] : edge_use) {
            if (uses == 1 && bedge_seen.find(e) == bedge_seen.end())
                throw numeric_error("mesh: untagged boundary edge");
        }

        // Orphan nodes.
        std::vector<bool> used(nodes.size(), false);
        for (const auto& tr : triangles) used[tr.a] = used[tr.b] = used[tr.c] = true;
        for (std::size_t i = 0; i < used.size(); ++i)
            if (!used[i]) throw numeric_error("mesh: orphan node " + std::to_string(i));

        // HOLE edges form closed loops: every HOLE node has exactly two HOLE edges.
        std::vector<int> hole_degree(nodes.size(), 0);
        bool any_hole = false;
        for (const auto& be : boundary_edges) {
            if (be.tag == BoundaryTag::HOLE) {
                ++hole_degree[be.a];
                ++hole_degree[be.b];
                any_hole = true;
            }
        }
        if (any_hole)
            for (int d : hole_degree)
                if (d != 0 && d != 2) throw numeric_error("mesh: hole boundary is not a closed loop");

        for (const auto& pp : periodic_pairs) {
            if (pp.slave < 0 || pp.slave >= node_count() || pp.master < 0 ||
                pp.master >= node_count())
                throw numeric_error("mesh: periodic pair node out of range");
            const Vec2 d = nodes[pp.slave] - nodes[pp.master];
            const bool shift_x = std::abs(d.x - 1.0) <= 1e-12 && std::abs(d.y) <= 1e-12;
            const bool shift_y = std::abs(d.x) <= 1e-12 && std::abs(d.y - 1.0) <= 1e-12;
            if (!shift_x && !shift_y)
                throw numeric_error("mesh: periodic pair offset is not (1,0) or (0,1)");
        }
    }

    /// Number of closed HOLE loops (connected components of HOLE edges).
    int hole_loop_count() const {
        std::vector<int> parent(nodes.size());
        for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = static_cast<int>(i);
        auto find = [&](int x) {
            while (parent[x] != x) x = parent[x] = parent[parent[x]];
            return x;
        };
        bool any = false;
        for (const auto& be : boundary_edges) {
            if (be.tag != BoundaryTag::HOLE) continue;
            any = true;
            parent[find(be.a)] = find(be.b);
        }
        if (!any) return 0;
        std::vector<int> roots;
        std::vector<bool> on = nodes_on_tag(BoundaryTag::HOLE);
        for (int i = 0; i < node_count(); ++i)
            if (on[i]) roots.push_back(find(i));
        std::sort(roots.begin(), roots.end());
        roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
        return static_cast<int>(roots.size());
    }

    /// Count of distinct mesh edges (for Euler characteristic checks).
    int edge_count() const {
        std::map<std::pair<int, int>, int> edges;
        for (const auto& tr : triangles) {
            edges[std::minmax(tr.a, tr.b)] = 1;
            edges[std::minmax(tr.b, tr.c)] = 1;
            edges[std::minmax(tr.c, tr.a)] = 1;
        }
        return static_cast<int>(edges.size());
    }
};

} // namespace steklov
