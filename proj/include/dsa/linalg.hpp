#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace dsa::linalg {

// Dense row-major matrix. The project keeps its training math on this type;
// every kernel below exists in a serial reference form and an OpenMP form
// that produce bit-identical results (parallelism is over output elements,
// so per-element summation order never changes).
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {a.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {a.data() + r * cols, cols}; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

// Process-wide switch consulted by the dispatching kernels. Tests flip it to
// compare both paths; the CLI leaves it on.
void set_parallel(bool enabled);
bool parallel_enabled();

// C = A * B
void matmul_serial(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_omp(const Matrix& A, const Matrix& B, Matrix& C);
void matmul(const Matrix& A, const Matrix& B, Matrix& C);

// C = A * B^T  (batch x out given batch x in and out x in)
void matmul_nt_serial(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_nt_omp(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_nt(const Matrix& A, const Matrix& B, Matrix& C);

// C = A^T * B  (out x in gradient accumulation over the batch dimension)
void matmul_tn_serial(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_tn_omp(const Matrix& A, const Matrix& B, Matrix& C);
void matmul_tn(const Matrix& A, const Matrix& B, Matrix& C);

// out[j] = sum_r A(r, j)
void col_sums_serial(const Matrix& A, std::vector<double>& out);
void col_sums_omp(const Matrix& A, std::vector<double>& out);
void col_sums(const Matrix& A, std::vector<double>& out);

inline void check(bool cond, const char* msg) {
    if (!cond) throw std::invalid_argument(msg);
}

} // namespace dsa::linalg
