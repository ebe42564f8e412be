#pragma once

// Line-oriented mesh text format, versioned "steklovmesh 1":
//   steklovmesh 1
//   nodes <N>
//   <idx> <x> <y>
//   tris <M>
//   <idx> <a> <b> <c>
//   bedges <K>
//   <idx> <a> <b> <tag>
//   ppairs <P>
//   <slave> <master>

#include <fstream>
#include <sstream>
#include <string>

#include "steklov/mesh.hpp"

namespace steklov {

inline void mesh_write(const Mesh& mesh, std::ostream& os) {
    os << "steklovmesh 1\n";
    os << "nodes " << mesh.node_count() << "\n";
    for (int i = 0; i < mesh.node_count(); ++i)
        os << i << " " << fmt_g17(mesh.nodes[i].x) << " " << fmt_g17(mesh.nodes[i].y) << "\n";
    os << "tris " << mesh.triangle_count() << "\n";
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const Triangle& tr = mesh.triangles[t];
        os << t << " " << tr.a << " " << tr.b << " " << tr.c << "\n";
    }
    os << "bedges " << mesh.boundary_edges.size() << "\n";
    for (std::size_t i = 0; i < mesh.boundary_edges.size(); ++i) {
        const BoundaryEdge& e = mesh.boundary_edges[i];
        os << i << " " << e.a << " " << e.b << " " << static_cast<int>(e.tag) << "\n";
    }
    os << "ppairs " << mesh.periodic_pairs.size() << "\n";
    for (const auto& pp : mesh.periodic_pairs) os << pp.slave << " " << pp.master << "\n";
}

inline void mesh_write(const Mesh& mesh, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path + "' for writing");
    mesh_write(mesh, os);
    if (!os) throw io_error("failed writing mesh to '" + path + "'");
}

inline Mesh mesh_read(std::istream& is) {
    auto fail = [](const std::string& what) -> void { throw io_error("mesh read: " + what); };

    std::string line;
    if (!std::getline(is, line) || line != "steklovmesh 1") fail("bad header");

    auto read_count = [&](const char* section) -> int {
        std::string word;
        long count = -1;
        if (!(is >> word >> count) || word != section || count < 0)
            fail(std::string("bad '") + section + "' header");
        return static_cast<int>(count);
    };

    Mesh mesh;
    const int n_nodes = read_count("nodes");
    mesh.nodes.resize(n_nodes);
    for (int i = 0; i < n_nodes; ++i) {
        int idx;
        double x, y;
        if (!(is >> idx >> x >> y) || idx != i) fail("bad node line");
        if (!std::isfinite(x) || !std::isfinite(y)) fail("nonfinite node coordinate");
        mesh.nodes[i] = {x, y};
    }
    const int n_tris = read_count("tris");
    mesh.triangles.resize(n_tris);
    for (int t = 0; t < n_tris; ++t) {
        int idx, a, b, c;
        if (!(is >> idx >> a >> b >> c) || idx != t) fail("bad triangle line");
        mesh.triangles[t] = {a, b, c};
    }
    const int n_bedges = read_count("bedges");
    mesh.boundary_edges.resize(n_bedges);
    for (int i = 0; i < n_bedges; ++i) {
        int idx, a, b, tag;
        if (!(is >> idx >> a >> b >> tag) || idx != i) fail("bad boundary edge line");
        if (tag < 1 || tag > 6) fail("unknown boundary tag");
        mesh.boundary_edges[i] = {a, b, static_cast<BoundaryTag>(tag)};
    }
    const int n_pairs = read_count("ppairs");
    mesh.periodic_pairs.resize(n_pairs);
    for (int i = 0; i < n_pairs; ++i) {
        int s, m;
        if (!(is >> s >> m)) fail("bad periodic pair line");
        mesh.periodic_pairs[i] = {s, m};
    }

    try {
        mesh.validate();
    } catch (const numeric_error& e) {
        fail(e.what());
    }
    return mesh;
}

inline Mesh mesh_read(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open '" + path + "' for reading");
    return mesh_read(is);
}

} // namespace steklov
