#include "apde/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace apde {

namespace {
constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
constexpr double kPivotRelTol = 1e-14;
}  // namespace

SparseMatrix SparseMatrix::from_triplets(std::size_t n_rows, std::size_t n_cols,
                                         std::vector<Triplet> triplets) {
    for (const Triplet& t : triplets) {
        if (t.row >= n_rows || t.col >= n_cols) {
            throw std::out_of_range("triplet (" + std::to_string(t.row) + ", " +
                                    std::to_string(t.col) + ", " + std::to_string(t.value) +
                                    ") outside " + std::to_string(n_rows) + "x" +
                                    std::to_string(n_cols) + " matrix");
        }
    }
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });

    SparseMatrix m;
    m.n_rows_ = n_rows;
    m.n_cols_ = n_cols;
    m.row_ptr_.assign(n_rows + 1, 0);
    m.col_idx_.reserve(triplets.size());
    m.values_.reserve(triplets.size());

    std::size_t i = 0;
    for (std::size_t row = 0; row < n_rows; ++row) {
        while (i < triplets.size() && triplets[i].row == row) {
            double v = triplets[i].value;
            std::size_t col = triplets[i].col;
            ++i;
            while (i < triplets.size() && triplets[i].row == row && triplets[i].col == col) {
                v += triplets[i].value;  // duplicates sum
                ++i;
            }
            m.col_idx_.push_back(col);
            m.values_.push_back(v);
        }
        m.row_ptr_[row + 1] = m.col_idx_.size();
    }
    return m;
}

SparseMatrix SparseMatrix::identity(std::size_t n) {
    std::vector<Triplet> t;
    t.reserve(n);
    for (std::size_t i = 0; i < n; ++i) t.push_back({i, i, 1.0});
    return from_triplets(n, n, std::move(t));
}

double SparseMatrix::at(std::size_t row, std::size_t col) const {
    for (std::size_t p = row_ptr_[row]; p < row_ptr_[row + 1]; ++p) {
        if (col_idx_[p] == col) return values_[p];
    }
    return 0.0;
}

std::vector<double> SparseMatrix::multiply(std::span<const double> x) const {
    if (x.size() != n_cols_) throw std::invalid_argument("spmv: dimension mismatch");
    std::vector<double> y(n_rows_, 0.0);
    for (std::size_t row = 0; row < n_rows_; ++row) {
        double acc = 0.0;
        for (std::size_t p = row_ptr_[row]; p < row_ptr_[row + 1]; ++p) {
            acc += values_[p] * x[col_idx_[p]];
        }
        y[row] = acc;
    }
    return y;
}

std::vector<double> SparseMatrix::multiply_transpose(std::span<const double> x) const {
    if (x.size() != n_rows_) throw std::invalid_argument("spmv_transpose: dimension mismatch");
    std::vector<double> y(n_cols_, 0.0);
    for (std::size_t row = 0; row < n_rows_; ++row) {
        const double xr = x[row];
        if (xr == 0.0) continue;
        for (std::size_t p = row_ptr_[row]; p < row_ptr_[row + 1]; ++p) {
            y[col_idx_[p]] += values_[p] * xr;
        }
    }
    return y;
}

SparseMatrix SparseMatrix::transpose() const {
    std::vector<Triplet> t;
    t.reserve(nnz());
    for (std::size_t row = 0; row < n_rows_; ++row) {
        for (std::size_t p = row_ptr_[row]; p < row_ptr_[row + 1]; ++p) {
            t.push_back({col_idx_[p], row, values_[p]});
        }
    }
    return from_triplets(n_cols_, n_rows_, std::move(t));
}

SparseMatrix SparseMatrix::add(const SparseMatrix& a, const SparseMatrix& b, double scale_b) {
    if (a.n_rows() != b.n_rows() || a.n_cols() != b.n_cols()) {
        throw std::invalid_argument("sparse add: shape mismatch");
    }
    std::vector<Triplet> t;
    t.reserve(a.nnz() + b.nnz());
    for (std::size_t row = 0; row < a.n_rows_; ++row) {
        for (std::size_t p = a.row_ptr_[row]; p < a.row_ptr_[row + 1]; ++p) {
            t.push_back({row, a.col_idx_[p], a.values_[p]});
        }
    }
    for (std::size_t row = 0; row < b.n_rows_; ++row) {
        for (std::size_t p = b.row_ptr_[row]; p < b.row_ptr_[row + 1]; ++p) {
            t.push_back({row, b.col_idx_[p], scale_b * b.values_[p]});
        }
    }
    return from_triplets(a.n_rows(), a.n_cols(), std::move(t));
}

SparseMatrix SparseMatrix::scaled(double s) const {
    SparseMatrix m = *this;
    for (double& v : m.values_) v *= s;
    return m;
}

std::vector<std::vector<double>> SparseMatrix::to_dense() const {
    std::vector<std::vector<double>> d(n_rows_, std::vector<double>(n_cols_, 0.0));
    for (std::size_t row = 0; row < n_rows_; ++row) {
        for (std::size_t p = row_ptr_[row]; p < row_ptr_[row + 1]; ++p) {
            d[row][col_idx_[p]] = values_[p];
        }
    }
    return d;
}

std::vector<double> spmv(const SparseMatrix& a, std::span<const double> x) {
    return a.multiply(x);
}

SparseMatrix kron(const SparseMatrix& a, const SparseMatrix& b) {
    std::vector<Triplet> t;
    t.reserve(a.nnz() * b.nnz());
    const std::size_t bp = b.n_rows();
    const std::size_t bq = b.n_cols();
    for (std::size_t i = 0; i < a.n_rows(); ++i) {
        for (std::size_t pa = a.row_ptr()[i]; pa < a.row_ptr()[i + 1]; ++pa) {
            const std::size_t j = a.col_idx()[pa];
            const double av = a.values()[pa];
            for (std::size_t k = 0; k < bp; ++k) {
                for (std::size_t pb = b.row_ptr()[k]; pb < b.row_ptr()[k + 1]; ++pb) {
                    t.push_back({i * bp + k, j * bq + b.col_idx()[pb], av * b.values()[pb]});
                }
            }
        }
    }
    return SparseMatrix::from_triplets(a.n_rows() * bp, a.n_cols() * bq, std::move(t));
}

SparseMatrix shift_matrix(std::size_t n) {
    if (n < 1) throw std::invalid_argument("shift_matrix: n must be >= 1");
    std::vector<Triplet> t;
    for (std::size_t i = 1; i < n; ++i) t.push_back({i, i - 1, 1.0});
    return SparseMatrix::from_triplets(n, n, std::move(t));
}

std::string to_matrix_market(const SparseMatrix& a) {
    std::string out = "%%MatrixMarket matrix coordinate real general\n";
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%zu %zu %zu\n", a.n_rows(), a.n_cols(), a.nnz());
    out += buf;
    for (std::size_t row = 0; row < a.n_rows(); ++row) {
        for (std::size_t p = a.row_ptr()[row]; p < a.row_ptr()[row + 1]; ++p) {
            std::snprintf(buf, sizeof(buf), "%zu %zu %.17g\n", row + 1, a.col_idx()[p] + 1,
                          a.values()[p]);
            out += buf;
        }
    }
    return out;
}

LuFactorization::LuFactorization(const SparseMatrix& a) {
    if (a.n_rows() != a.n_cols()) {
        throw std::invalid_argument("lu_factorize: matrix must be square");
    }
    n_ = a.n_rows();
    const std::size_t n = n_;

    // Row-wise magnitude maxima drive the relative singularity test.
    std::vector<double> row_max(n, 0.0);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t p = a.row_ptr()[row]; p < a.row_ptr()[row + 1]; ++p) {
            row_max[row] = std::max(row_max[row], std::abs(a.values()[p]));
        }
    }

    // Column-compressed copy of A (rows sorted by construction).
    std::vector<std::size_t> a_colptr(n + 1, 0);
    for (std::size_t p = 0; p < a.nnz(); ++p) a_colptr[a.col_idx()[p] + 1]++;
    for (std::size_t c = 0; c < n; ++c) a_colptr[c + 1] += a_colptr[c];
    std::vector<std::size_t> a_rowidx(a.nnz());
    std::vector<double> a_values(a.nnz());
    {
        std::vector<std::size_t> next = a_colptr;
        for (std::size_t row = 0; row < n; ++row) {
            for (std::size_t p = a.row_ptr()[row]; p < a.row_ptr()[row + 1]; ++p) {
                const std::size_t c = a.col_idx()[p];
                a_rowidx[next[c]] = row;
                a_values[next[c]] = a.values()[p];
                ++next[c];
            }
        }
    }

    // L columns during elimination hold original row indices; the first entry
    // of each column is the pivot row with value 1.
    l_colptr_.assign(1, 0);
    u_colptr_.assign(1, 0);
    u_diag_.assign(n, 0.0);
    perm_.assign(n, kNone);
    std::vector<std::size_t> pinv(n, kNone);

    std::vector<double> x(n, 0.0);
    std::vector<std::size_t> topo;      // reach in topological order
    std::vector<std::size_t> dfs_node;  // explicit DFS stacks
    std::vector<std::size_t> dfs_ptr;
    std::vector<unsigned char> visited(n, 0);
    topo.reserve(n);

    for (std::size_t k = 0; k < n; ++k) {
        // Symbolic step: nodes reachable from pattern of A[:,k] through L.
        topo.clear();
        for (std::size_t p = a_colptr[k]; p < a_colptr[k + 1]; ++p) {
            std::size_t start = a_rowidx[p];
            if (visited[start]) continue;
            dfs_node.assign(1, start);
            dfs_ptr.assign(1, 0);
            visited[start] = 1;
            while (!dfs_node.empty()) {
                const std::size_t i = dfs_node.back();
                const std::size_t lcol = pinv[i];
                bool descended = false;
                if (lcol != kNone) {
                    const std::size_t begin = l_colptr_[lcol] + 1;  // skip unit diagonal
                    const std::size_t end = l_colptr_[lcol + 1];
                    std::size_t ptr = dfs_ptr.back();
                    while (begin + ptr < end) {
                        const std::size_t child = l_rowidx_[begin + ptr];
                        ++ptr;
                        if (!visited[child]) {
                            visited[child] = 1;
                            dfs_ptr.back() = ptr;
                            dfs_node.push_back(child);
                            dfs_ptr.push_back(0);
                            descended = true;
                            break;
                        }
                    }
                    if (!descended) dfs_ptr.back() = ptr;
                }
                if (!descended) {
                    topo.push_back(i);
                    dfs_node.pop_back();
                    dfs_ptr.pop_back();
                }
            }
        }
        // topo now holds DFS postorder: dependencies of a node appear after it,
        // so iterate in reverse for the triangular solve.
        for (const std::size_t i : topo) visited[i] = 0;

        // Numeric step: x = L \ A[:,k] on the reach set.
        for (std::size_t p = a_colptr[k]; p < a_colptr[k + 1]; ++p) {
            x[a_rowidx[p]] = a_values[p];
        }
        for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
            const std::size_t i = *it;
            const std::size_t lcol = pinv[i];
            if (lcol == kNone) continue;
            const double xi = x[i];
            for (std::size_t p = l_colptr_[lcol] + 1; p < l_colptr_[lcol + 1]; ++p) {
                x[l_rowidx_[p]] -= l_values_[p] * xi;
            }
        }

        // Partial pivoting over rows not yet pivotal.
        std::size_t ipiv = kNone;
        double pmag = -1.0;
        for (const std::size_t i : topo) {
            if (pinv[i] != kNone) continue;
            const double mag = std::abs(x[i]);
            if (mag > pmag) {
                pmag = mag;
                ipiv = i;
            }
        }
        if (ipiv == kNone || pmag <= kPivotRelTol * row_max[ipiv] || pmag == 0.0) {
            for (const std::size_t i : topo) x[i] = 0.0;
            throw SingularMatrixError(k, pmag < 0 ? 0.0 : pmag);
        }
        const double pivot = x[ipiv];

        // Emit U[:,k] (rows already pivotal) and L[:,k] (multipliers).
        for (const std::size_t i : topo) {
            if (pinv[i] != kNone) {
                u_rowidx_.push_back(pinv[i]);
                u_values_.push_back(x[i]);
            }
        }
        u_diag_[k] = pivot;
        u_colptr_.push_back(u_rowidx_.size());

        l_rowidx_.push_back(ipiv);
        l_values_.push_back(1.0);
        for (const std::size_t i : topo) {
            if (pinv[i] == kNone && i != ipiv) {
                l_rowidx_.push_back(i);
                l_values_.push_back(x[i] / pivot);
            }
        }
        l_colptr_.push_back(l_rowidx_.size());

        pinv[ipiv] = k;
        perm_[k] = ipiv;
        for (const std::size_t i : topo) x[i] = 0.0;
    }

    // Remap L's row indices into pivot coordinates.
    for (std::size_t& r : l_rowidx_) r = pinv[r];
}

std::vector<double> LuFactorization::solve(std::span<const double> b) const {
    if (b.size() != n_) throw std::invalid_argument("solve: dimension mismatch");
    std::vector<double> y(n_);
    for (std::size_t k = 0; k < n_; ++k) y[k] = b[perm_[k]];
    // Forward substitution L y = P b (unit diagonal).
    for (std::size_t k = 0; k < n_; ++k) {
        const double yk = y[k];
        for (std::size_t p = l_colptr_[k] + 1; p < l_colptr_[k + 1]; ++p) {
            y[l_rowidx_[p]] -= l_values_[p] * yk;
        }
    }
    // Back substitution U x = y.
    for (std::size_t k = n_; k-- > 0;) {
        const double xk = y[k] / u_diag_[k];
        y[k] = xk;
        for (std::size_t p = u_colptr_[k]; p < u_colptr_[k + 1]; ++p) {
            y[u_rowidx_[p]] -= u_values_[p] * xk;
        }
    }
    return y;
}

std::vector<double> LuFactorization::solve_transpose(std::span<const double> b) const {
    if (b.size() != n_) throw std::invalid_argument("solve_transpose: dimension mismatch");
    // A^T x = b with A = P^T L U: solve U^T w = b, then L^T z = w, then x = P^T z.
    std::vector<double> w(b.begin(), b.end());
    for (std::size_t k = 0; k < n_; ++k) {
        double acc = w[k];
        for (std::size_t p = u_colptr_[k]; p < u_colptr_[k + 1]; ++p) {
            acc -= u_values_[p] * w[u_rowidx_[p]];
        }
        w[k] = acc / u_diag_[k];
    }
    for (std::size_t k = n_; k-- > 0;) {
        double acc = w[k];
        for (std::size_t p = l_colptr_[k] + 1; p < l_colptr_[k + 1]; ++p) {
            acc -= l_values_[p] * w[l_rowidx_[p]];
        }
        w[k] = acc;
    }
    std::vector<double> x(n_);
    for (std::size_t k = 0; k < n_; ++k) x[perm_[k]] = w[k];
    return x;
}

LuFactorization lu_factorize(const SparseMatrix& a) { return LuFactorization(a); }

}  // namespace apde
