#pragma once

// Constraint bookkeeping: Dirichlet elimination, periodic slave/master
// identification (chains flattened so every slave points at a free master),
// optional mean-zero handling via pin-then-recenter.

#include <vector>

#include "steklov/mesh.hpp"
#include "steklov/sparse.hpp"

namespace steklov {

class DofMap {
public:
    enum class Kind : unsigned char { free_dof, dirichlet, slave };

    explicit DofMap(int node_count) : kind_(node_count, Kind::free_dof), master_(node_count, -1) {}

    /// Dirichlet (value 0) on every node touching an edge with `tag`.
    static DofMap dirichlet_on(const Mesh& mesh, BoundaryTag tag) {
        DofMap dm(mesh.node_count());
        const auto on = mesh.nodes_on_tag(tag);
        for (int i = 0; i < mesh.node_count(); ++i)
            if (on[i]) dm.set_dirichlet(i);
        dm.build();
        return dm;
    }

    /// Dirichlet on all outer-face tags (for full-square limit meshes).
    static DofMap dirichlet_on_outer(const Mesh& mesh) {
        DofMap dm(mesh.node_count());
        for (BoundaryTag t : {BoundaryTag::DIRICHLET, BoundaryTag::FACE_LEFT,
                              BoundaryTag::FACE_RIGHT, BoundaryTag::FACE_BOTTOM,
                              BoundaryTag::FACE_TOP}) {
            const auto on = mesh.nodes_on_tag(t);
            for (int i = 0; i < mesh.node_count(); ++i)
                if (on[i]) dm.set_dirichlet(i);
        }
        dm.build();
        return dm;
    }

    /// Periodic identification from mesh pairs. With `pin_one_node`, the
    /// lowest-indexed free node is fixed to zero (mean-zero spaces are then
    /// realized by recentering solutions).
    static DofMap periodic(const Mesh& mesh, bool pin_one_node) {
        DofMap dm(mesh.node_count());
        for (const auto& pp : mesh.periodic_pairs) dm.set_slave(pp.slave, pp.master);
        dm.flatten_chains();
        if (pin_one_node) {
            for (int i = 0; i < dm.node_count(); ++i) {
                if (dm.kind_[i] == Kind::free_dof) {
                    dm.set_dirichlet(i);
                    dm.pinned_node_ = i;
                    break;
                }
            }
            dm.flatten_chains(); // periodic copies of the pinned node pin too
        }
        dm.build();
        return dm;
    }

    void set_dirichlet(int node) { kind_[node] = Kind::dirichlet; }

    void set_slave(int node, int master) {
        kind_[node] = Kind::slave;
        master_[node] = master;
    }

    void flatten_chains() {
        for (std::size_t i = 0; i < kind_.size(); ++i) {
            if (kind_[i] != Kind::slave) continue;
            int m = master_[i];
            int guard = 0;
            while (kind_[m] == Kind::slave) {
                m = master_[m];
                if (++guard > node_count()) throw numeric_error("periodic constraint cycle");
            }
            if (kind_[m] == Kind::dirichlet) {
                kind_[i] = Kind::dirichlet;
            } else {
                master_[i] = m;
            }
        }
    }

    void build() {
        reduced_of_.assign(kind_.size(), -1);
        int next = 0;
        for (std::size_t i = 0; i < kind_.size(); ++i)
            if (kind_[i] == Kind::free_dof) reduced_of_[i] = next++;
        reduced_dim_ = next;
        for (std::size_t i = 0; i < kind_.size(); ++i) {
            if (kind_[i] == Kind::slave) {
                const int m = master_[i];
                if (kind_[m] != Kind::free_dof)
                    throw numeric_error("slave's master is not a free dof");
                reduced_of_[i] = reduced_of_[m];
            }
        }
    }

    int node_count() const { return static_cast<int>(kind_.size()); }
    int reduced_dim() const { return reduced_dim_; }
    int pinned_node() const { return pinned_node_; }
    Kind kind(int node) const { return kind_[node]; }

    /// Reduced index for a node, or -1 for eliminated (Dirichlet) nodes.
    int reduced_index(int node) const { return reduced_of_[node]; }

    std::vector<double> reduce_vector(const std::vector<double>& full) const {
        std::vector<double> r(reduced_dim_, 0.0);
        for (int i = 0; i < node_count(); ++i)
            if (reduced_of_[i] >= 0) r[reduced_of_[i]] += full[i];
        return r;
    }

    /// Expand reduced values to all nodes; Dirichlet (and pinned) nodes get 0,
    /// slaves copy their master's value exactly.
    std::vector<double> expand_vector(const std::vector<double>& reduced) const {
        std::vector<double> full(node_count(), 0.0);
        for (int i = 0; i < node_count(); ++i)
            if (reduced_of_[i] >= 0) full[i] = reduced[reduced_of_[i]];
        return full;
    }

private:
    std::vector<Kind> kind_;
    std::vector<int> master_;
    std::vector<int> reduced_of_;
    int reduced_dim_ = 0;
    int pinned_node_ = -1;
};

/// Congruence reduction P^T A P for the constraint map: Dirichlet rows/columns
/// dropped, slave rows/columns folded into masters.
inline SparseSymMatrix reduce(const SparseSymMatrix& matrix, const DofMap& dofmap) {
    if (matrix.dimension() != dofmap.node_count())
        throw numeric_error("reduce: matrix/dofmap dimension mismatch");
    if (dofmap.reduced_dim() == 0) throw numeric_error("reduce: no free dofs remain");
    SparseSymMatrix out(dofmap.reduced_dim());
    for (const auto& e : matrix.entries()) {
        const int I = dofmap.reduced_index(e.row);
        const int J = dofmap.reduced_index(e.col);
        if (I < 0 || J < 0) continue;
        if (e.row != e.col && I == J)
            out.add(I, I, 2.0 * e.value); // off-diagonal pair folded onto the diagonal
        else
            out.add(I, J, e.value);
    }
    out.finalize();
    return out;
}

} // namespace steklov
