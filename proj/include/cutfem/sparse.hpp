#pragma once

// Compressed-row sparse matrix with both triangles stored, plus Matrix Market I/O.

#include "cutfem/geometry.hpp"

#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace cutfem {

using Vector = Eigen::VectorXd;

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// CSR matrix. Rows hold sorted, unique column indices.
class SparseMatrix {
public:
    SparseMatrix() = default;
    SparseMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {}

    /// Duplicates are summed in input order, so equal input gives identical bits.
    static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> t) {
        std::stable_sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
            return a.row != b.row ? a.row < b.row : a.col < b.col;
        });
        SparseMatrix m(rows, cols);
        for (std::size_t k = 0; k < t.size();) {
            const std::size_t r = t[k].row, c = t[k].col;
            if (r >= rows || c >= cols) throw Error("from_triplets: index out of range");
            double v = 0.0;
            while (k < t.size() && t[k].row == r && t[k].col == c) v += t[k++].value;
            m.col_idx_.push_back(c);
            m.values_.push_back(v);
            ++m.row_ptr_[r + 1];
        }
        std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
        return m;
    }

    static SparseMatrix identity(std::size_t n) {
        std::vector<Triplet> t;
        for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
        return from_triplets(n, n, std::move(t));
    }

    static SparseMatrix from_dense(const Eigen::MatrixXd& d) {
        std::vector<Triplet> t;
        for (Eigen::Index i = 0; i < d.rows(); ++i)
            for (Eigen::Index j = 0; j < d.cols(); ++j)
                if (d(i, j) != 0.0) t.push_back({std::size_t(i), std::size_t(j), d(i, j)});
        return from_triplets(std::size_t(d.rows()), std::size_t(d.cols()), std::move(t));
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t nnz() const { return values_.size(); }

    std::span<const std::size_t> row_ptr() const { return row_ptr_; }
    std::span<const std::size_t> col_idx() const { return col_idx_; }
    std::span<const double> values() const { return values_; }

    double coeff(std::size_t r, std::size_t c) const {
        const auto b = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r]);
        const auto e = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[r + 1]);
        const auto it = std::lower_bound(b, e, c);
        return (it != e && *it == c) ? values_[std::size_t(it - col_idx_.begin())] : 0.0;
    }

    void multiply(const Vector& x, Vector& y) const {
        y.resize(Eigen::Index(rows_));
        for (std::size_t r = 0; r < rows_; ++r) {
            double s = 0.0;
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) s += values_[k] * x[Eigen::Index(col_idx_[k])];
            y[Eigen::Index(r)] = s;
        }
    }
    Vector operator*(const Vector& x) const {
        Vector y;
        multiply(x, y);
        return y;
    }

    double quadratic_form(const Vector& x) const { return x.dot(*this * x); }

    Vector diagonal() const {
        Vector d = Vector::Zero(Eigen::Index(std::min(rows_, cols_)));
        for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = coeff(std::size_t(i), std::size_t(i));
        return d;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }

    SparseMatrix transpose() const {
        std::vector<Triplet> t;
        t.reserve(nnz());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({col_idx_[k], r, values_[k]});
        return from_triplets(cols_, rows_, std::move(t));
    }

    /// max |A_ij - A_ji|
    double asymmetry() const {
        if (rows_ != cols_) throw Error("asymmetry: matrix is not square");
        double m = 0.0;
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                m = std::max(m, std::abs(values_[k] - coeff(col_idx_[k], r)));
        return m;
    }

    /// Rows [r0, r1) x columns [c0, c1).
    SparseMatrix block(std::size_t r0, std::size_t r1, std::size_t c0, std::size_t c1) const {
        std::vector<Triplet> t;
        for (std::size_t r = r0; r < r1; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                if (col_idx_[k] >= c0 && col_idx_[k] < c1) t.push_back({r - r0, col_idx_[k] - c0, values_[k]});
        return from_triplets(r1 - r0, c1 - c0, std::move(t));
    }

    SparseMatrix operator-(const SparseMatrix& o) const { return axpy(-1.0, o); }
    SparseMatrix operator+(const SparseMatrix& o) const { return axpy(1.0, o); }

    /// this + alpha * o
    SparseMatrix axpy(double alpha, const SparseMatrix& o) const {
        if (rows_ != o.rows_ || cols_ != o.cols_) throw Error("axpy: dimension mismatch");
        std::vector<Triplet> t;
        t.reserve(nnz() + o.nnz());
        for (std::size_t r = 0; r < rows_; ++r) {
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) t.push_back({r, col_idx_[k], values_[k]});
            for (std::size_t k = o.row_ptr_[r]; k < o.row_ptr_[r + 1]; ++k)
                t.push_back({r, o.col_idx_[k], alpha * o.values_[k]});
        }
        return from_triplets(rows_, cols_, std::move(t));
    }

    SparseMatrix operator*(const SparseMatrix& b) const {
        if (cols_ != b.rows_) throw Error("matrix product: dimension mismatch");
        SparseMatrix c(rows_, b.cols_);
        std::vector<double> acc(b.cols_, 0.0);
        std::vector<char> used(b.cols_, 0);
        std::vector<std::size_t> pattern;
        for (std::size_t r = 0; r < rows_; ++r) {
            pattern.clear();
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) {
                const std::size_t m = col_idx_[k];
                for (std::size_t l = b.row_ptr_[m]; l < b.row_ptr_[m + 1]; ++l) {
                    const std::size_t j = b.col_idx_[l];
                    if (!used[j]) {
                        used[j] = 1;
                        pattern.push_back(j);
                    }
                    acc[j] += values_[k] * b.values_[l];
                }
            }
            std::sort(pattern.begin(), pattern.end());
            for (std::size_t j : pattern) {
                c.col_idx_.push_back(j);
                c.values_.push_back(acc[j]);
                acc[j] = 0.0;
                used[j] = 0;
            }
            c.row_ptr_[r + 1] = c.col_idx_.size();
        }
        return c;
    }

    Eigen::SparseMatrix<double> to_eigen() const {
        std::vector<Eigen::Triplet<double>> t;
        t.reserve(nnz());
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k)
                t.emplace_back(Eigen::Index(r), Eigen::Index(col_idx_[k]), values_[k]);
        Eigen::SparseMatrix<double> m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
        m.setFromTriplets(t.begin(), t.end());
        return m;
    }

    Eigen::MatrixXd to_dense() const {
        Eigen::MatrixXd d = Eigen::MatrixXd::Zero(Eigen::Index(rows_), Eigen::Index(cols_));
        for (std::size_t r = 0; r < rows_; ++r)
            for (std::size_t k = row_ptr_[r]; k < row_ptr_[r + 1]; ++k) d(Eigen::Index(r), Eigen::Index(col_idx_[k])) = values_[k];
        return d;
    }

private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Matrix Market

/// Coordinate format, 1-based. Symmetric matrices are written as their lower triangle.
inline void write_matrix_market(std::ostream& os, const SparseMatrix& a, bool symmetric = true) {
    os << "%%MatrixMarket matrix coordinate real " << (symmetric ? "symmetric" : "general") << '\n';
    std::size_t count = 0;
    const auto rp = a.row_ptr();
    const auto ci = a.col_idx();
    const auto v = a.values();
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = rp[r]; k < rp[r + 1]; ++k)
            if (!symmetric || ci[k] <= r) ++count;
    os << a.rows() << ' ' << a.cols() << ' ' << count << '\n';
    os << std::setprecision(17);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t k = rp[r]; k < rp[r + 1]; ++k)
            if (!symmetric || ci[k] <= r) os << r + 1 << ' ' << ci[k] + 1 << ' ' << v[k] << '\n';
}

/// Dense array format for a vector.
inline void write_matrix_market(std::ostream& os, const Vector& b) {
    os << "%%MatrixMarket matrix array real general\n" << b.size() << " 1\n" << std::setprecision(17);
    for (Eigen::Index i = 0; i < b.size(); ++i) os << b[i] << '\n';
}

inline SparseMatrix read_matrix_market(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("%%MatrixMarket", 0) != 0) throw Error("matrix market: missing banner");
    std::istringstream banner(line);
    std::string tag, object, format, field, symmetry;
    banner >> tag >> object >> format >> field >> symmetry;
    std::transform(format.begin(), format.end(), format.begin(), ::tolower);
    std::transform(symmetry.begin(), symmetry.end(), symmetry.begin(), ::tolower);
    std::transform(field.begin(), field.end(), field.begin(), ::tolower);
    if (format != "coordinate") throw Error("matrix market: only coordinate format is supported");
    if (field != "real" && field != "integer") throw Error("matrix market: unsupported field " + field);
    const bool sym = symmetry == "symmetric";
    if (!sym && symmetry != "general") throw Error("matrix market: unsupported symmetry " + symmetry);

    while (std::getline(is, line))
        if (!line.empty() && line[0] != '%') break;
    std::istringstream header(line);
    std::size_t rows = 0, cols = 0, entries = 0;
    if (!(header >> rows >> cols >> entries)) throw Error("matrix market: bad size line");
    std::vector<Triplet> t;
    t.reserve(sym ? 2 * entries : entries);
    for (std::size_t e = 0; e < entries; ++e) {
        std::size_t r = 0, c = 0;
        double v = 0.0;
        if (!(is >> r >> c >> v)) throw Error("matrix market: truncated entry list");
        if (r < 1 || c < 1 || r > rows || c > cols) throw Error("matrix market: index out of range");
        t.push_back({r - 1, c - 1, v});
        if (sym && r != c) t.push_back({c - 1, r - 1, v});
    }
    return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

/// Dense array format with a single column.
inline Vector read_matrix_market_vector(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("%%MatrixMarket", 0) != 0) throw Error("matrix market: missing banner");
    if (line.find("array") == std::string::npos) throw Error("matrix market: vector must be in array format");
    while (std::getline(is, line))
        if (!line.empty() && line[0] != '%') break;
    std::istringstream header(line);
    std::size_t rows = 0, cols = 0;
    if (!(header >> rows >> cols) || cols != 1) throw Error("matrix market: expected a single column");
    Vector b = Vector::Zero(Eigen::Index(rows));
    for (Eigen::Index i = 0; i < b.size(); ++i)
        if (!(is >> b[i])) throw Error("matrix market: truncated vector");
    return b;
}

inline SparseMatrix read_matrix_market(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open " + path);
    return read_matrix_market(is);
}

}  // namespace cutfem
