#pragma once

// Symmetric sparse matrix in canonical upper-triangle coordinate storage with
// a compressed full-pattern form for fast matrix-vector products.

#include <algorithm>
#include <cmath>
#include <vector>

#include "steklov/common.hpp"

namespace steklov {

namespace vecops {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(double alpha, std::vector<double>& x) {
    for (double& v : x) v *= alpha;
}

} // namespace vecops

class SparseSymMatrix {
public:
    struct Entry {
        int row;
        int col; // row <= col
        double value;
    };

    /// Builder-style accumulation; entries are canonicalized by `finalize`.
    explicit SparseSymMatrix(int dimension) : n_(dimension) {
        if (dimension < 1) throw numeric_error("sparse matrix dimension must be >= 1");
    }

    int dimension() const { return n_; }

    void add(int i, int j, double v) {
        if (i > j) std::swap(i, j);
        coo_.push_back({i, j, v});
        finalized_ = false;
    }

    /// Sort entries, sum duplicates, drop exact zeros, build the apply pattern.
    void finalize() {
        if (finalized_) return;
        std::sort(coo_.begin(), coo_.end(), [](const Entry& a, const Entry& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        std::vector<Entry> merged;
        merged.reserve(coo_.size());
        for (const Entry& e : coo_) {
            if (!std::isfinite(e.value)) throw numeric_error("sparse matrix: nonfinite entry");
            if (!merged.empty() && merged.back().row == e.row && merged.back().col == e.col)
                merged.back().value += e.value;
            else
                merged.push_back(e);
        }
        merged.erase(std::remove_if(merged.begin(), merged.end(),
                                    [](const Entry& e) { return e.value == 0.0; }),
                     merged.end());
        coo_ = std::move(merged);
        build_csr();
        finalized_ = true;
    }

    const std::vector<Entry>& entries() const {
        require_finalized();
        return coo_;
    }

    /// y = A x (full symmetric product).
    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        require_finalized();
        y.assign(n_, 0.0);
        for (int r = 0; r < n_; ++r) {
            double acc = 0.0;
            for (int k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) acc += val_[k] * x[col_[k]];
            y[r] = acc;
        }
    }

    std::vector<double> apply(const std::vector<double>& x) const {
        std::vector<double> y;
        apply(x, y);
        return y;
    }

    double quadratic_form(const std::vector<double>& x) const {
        std::vector<double> y;
        apply(x, y);
        return vecops::dot(x, y);
    }

    std::vector<double> diagonal() const {
        require_finalized();
        std::vector<double> d(n_, 0.0);
        for (const Entry& e : coo_)
            if (e.row == e.col) d[e.row] = e.value;
        return d;
    }

    /// Max absolute row sum (equals the 1-norm for symmetric matrices).
    double norm_1() const {
        require_finalized();
        std::vector<double> rowsum(n_, 0.0);
        for (const Entry& e : coo_) {
            rowsum[e.row] += std::abs(e.value);
            if (e.row != e.col) rowsum[e.col] += std::abs(e.value);
        }
        double m = 0.0;
        for (double v : rowsum) m = std::max(m, v);
        return m;
    }

    /// Signed row sums of the full symmetric matrix.
    std::vector<double> row_sums() const {
        require_finalized();
        std::vector<double> rs(n_, 0.0);
        for (const Entry& e : coo_) {
            rs[e.row] += e.value;
            if (e.row != e.col) rs[e.col] += e.value;
        }
        return rs;
    }

    SparseSymMatrix scaled(double s) const {
        require_finalized();
        SparseSymMatrix out(n_);
        out.coo_ = coo_;
        for (Entry& e : out.coo_) e.value *= s;
        out.build_csr();
        out.finalized_ = true;
        return out;
    }

private:
    void require_finalized() const {
        if (!finalized_) throw numeric_error("sparse matrix used before finalize()");
    }

    void build_csr() {
        row_ptr_.assign(n_ + 1, 0);
        for (const Entry& e : coo_) {
            ++row_ptr_[e.row + 1];
            if (e.row != e.col) ++row_ptr_[e.col + 1];
        }
        for (int r = 0; r < n_; ++r) row_ptr_[r + 1] += row_ptr_[r];
        col_.assign(row_ptr_[n_], 0);
        val_.assign(row_ptr_[n_], 0.0);
        std::vector<int> cursor(row_ptr_.begin(), row_ptr_.end() - 1);
        for (const Entry& e : coo_) {
            col_[cursor[e.row]] = e.col;
            val_[cursor[e.row]++] = e.value;
            if (e.row != e.col) {
                col_[cursor[e.col]] = e.row;
                val_[cursor[e.col]++] = e.value;
            }
        }
    }

    int n_;
    bool finalized_ = false;
    std::vector<Entry> coo_;
    std::vector<int> row_ptr_;
    std::vector<int> col_;
    std::vector<double> val_;
};

} // namespace steklov
