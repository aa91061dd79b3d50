#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace apde {

/// Thrown when LU factorization encounters a structurally or numerically
/// singular pivot. `pivot_index` is the column at which elimination broke down.
class SingularMatrixError : public std::runtime_error {
public:
    SingularMatrixError(std::size_t pivot_index, double pivot_value)
        : std::runtime_error("singular matrix: pivot " + std::to_string(pivot_index) +
                             " has magnitude " + std::to_string(pivot_value)),
          pivot_index(pivot_index),
          pivot_value(pivot_value) {}

    std::size_t pivot_index;
    double pivot_value;
};

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

/// Real sparse matrix in compressed-row storage. Column indices are strictly
/// increasing within each row and duplicates are summed at construction.
class SparseMatrix {
public:
    SparseMatrix() = default;

    /// Assembles an n_rows x n_cols matrix from (row, col, value) triplets.
    /// Duplicate coordinates are summed. Out-of-range indices raise
    /// std::out_of_range naming the offending triplet.
    static SparseMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                      std::vector<Triplet> triplets);

    /// Square variant.
    static SparseMatrix from_triplets(std::size_t n, std::vector<Triplet> triplets) {
        return from_triplets(n, n, std::move(triplets));
    }

    static SparseMatrix identity(std::size_t n);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return n_cols_; }
    std::size_t nnz() const { return values_.size(); }

    std::span<const std::size_t> row_ptr() const { return row_ptr_; }
    std::span<const std::size_t> col_idx() const { return col_idx_; }
    std::span<const double> values() const { return values_; }
    std::span<double> values_mut() { return values_; }

    double at(std::size_t row, std::size_t col) const;

    std::vector<double> multiply(std::span<const double> x) const;
    std::vector<double> multiply_transpose(std::span<const double> x) const;

    SparseMatrix transpose() const;

    /// A + s * B, patterns need not match.
    static SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double scale_b = 1.0);

    SparseMatrix scaled(double s) const;

    std::vector<std::vector<double>> to_dense() const;

private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<std::size_t> row_ptr_{0};
    std::vector<std::size_t> col_idx_;
    std::vector<double> values_;
};

/// Sparse matrix-vector product.
std::vector<double> spmv(const SparseMatrix& a, std::span<const double> x);

/// Kronecker product: (A (x) B)[i*p+k, j*q+l] = A[i,j] * B[k,l] for B of shape p x q.
SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b);

/// n x n lower shift matrix with ones exactly on the subdiagonal.
SparseMatrix shift_matrix(std::size_t n);

/// MatrixMarket coordinate-format dump (1-based indices), for debugging.
std::string to_matrix_market(const SparseMatrix& a);

/// Sparse LU with partial pivoting (left-looking, Gilbert-Peierls). Supports
/// both solve and transpose solve off the same factors, which is what the
/// reverse-mode rules for linear systems need.
class LuFactorization {
public:
    explicit LuFactorization(const SparseMatrix& a);

    std::size_t dim() const { return n_; }

    /// Solves A x = b.
    std::vector<double> solve(std::span<const double> b) const;

    /// Solves A^T x = b.
    std::vector<double> solve_transpose(std::span<const double> b) const;

private:
    // Factors stored column-wise in pivoted row coordinates; L has unit
    // diagonal (implicit), U keeps its diagonal in u_diag_.
    std::size_t n_ = 0;
    std::vector<std::size_t> l_colptr_, l_rowidx_;
    std::vector<double> l_values_;
    std::vector<std::size_t> u_colptr_, u_rowidx_;
    std::vector<double> u_values_;
    std::vector<double> u_diag_;
    std::vector<std::size_t> perm_;  // pivot row k came from original row perm_[k]
};

/// Factorizes a square sparse matrix. Pivots whose magnitude falls below
/// 1e-14 of their row's largest entry raise SingularMatrixError.
LuFactorization lu_factorize(const SparseMatrix& a);

}  // namespace apde
