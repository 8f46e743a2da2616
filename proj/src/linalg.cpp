#include "dsa/linalg.hpp"

#include <atomic>

namespace dsa::linalg {

namespace {
std::atomic<bool> g_parallel{true};

// Below this many output elements the OpenMP fork/join overhead dominates.
constexpr std::size_t kParallelCutoff = 4096;

bool use_omp(std::size_t out_elems) {
    return g_parallel.load(std::memory_order_relaxed) && out_elems >= kParallelCutoff;
}
} // namespace

void set_parallel(bool enabled) { g_parallel.store(enabled, std::memory_order_relaxed); }
bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }

void matmul_serial(const Matrix& A, const Matrix& B, Matrix& C) {
    check(A.cols == B.rows, "matmul: inner dimension mismatch");
    C = Matrix(A.rows, B.cols);
    for (std::size_t i = 0; i < A.rows; ++i)
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A(i, k);
            if (aik == 0.0) continue;
            const double* brow = &B.a[k * B.cols];
            double* crow = &C.a[i * C.cols];
            for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
}

void matmul_omp(const Matrix& A, const Matrix& B, Matrix& C) {
    check(A.cols == B.rows, "matmul: inner dimension mismatch");
    C = Matrix(A.rows, B.cols);
    const long n = long(A.rows);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < A.cols; ++k) {
            const double aik = A(std::size_t(i), k);
            if (aik == 0.0) continue;
            const double* brow = &B.a[k * B.cols];
            double* crow = &C.a[std::size_t(i) * C.cols];
            for (std::size_t j = 0; j < B.cols; ++j) crow[j] += aik * brow[j];
        }
    }
}

void matmul(const Matrix& A, const Matrix& B, Matrix& C) {
    if (use_omp(A.rows * B.cols)) matmul_omp(A, B, C);
    else matmul_serial(A, B, C);
}

void matmul_nt_serial(const Matrix& A, const Matrix& B, Matrix& C) {
    check(A.cols == B.cols, "matmul_nt: inner dimension mismatch");
    C = Matrix(A.rows, B.rows);
    for (std::size_t i = 0; i < A.rows; ++i) {
        const double* arow = &A.a[i * A.cols];
        for (std::size_t j = 0; j < B.rows; ++j) {
            const double* brow = &B.a[j * B.cols];
            double s = 0.0;
            for (std::size_t k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
            C(i, j) = s;
        }
    }
}

void matmul_nt_omp(const Matrix& A, const Matrix& B, Matrix& C) {
    check(A.cols == B.cols, "matmul_nt: inner dimension mismatch");
    C = Matrix(A.rows, B.rows);
    const long n = long(A.rows);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const double* arow = &A.a[std::size_t(i) * A.cols];
        for (std::size_t j = 0; j < B.rows; ++j) {
            const double* brow = &B.a[j * B.cols];
            double s = 0.0;
            for (std::size_t k = 0; k < A.cols; ++k) s += arow[k] * brow[k];
            C(std::size_t(i), j) = s;
        }
    }
}

void matmul_nt(const Matrix& A, const Matrix& B, Matrix& C) {
    if (use_omp(A.rows * B.rows)) matmul_nt_omp(A, B, C);
    else matmul_nt_serial(A, B, C);
}

void matmul_tn_serial(const Matrix& A, const Matrix& B, Matrix& C) {
    check(A.rows == B.rows, "matmul_tn: inner dimension mismatch");
    C = Matrix(A.cols, B.cols);
    for (std::size_t i = 0; i < A.cols; ++i)
        for (std::size_t j = 0; j < B.cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < A.rows; ++r) s += A(r, i) * B(r, j);
            C(i, j) = s;
        }
}

void matmul_tn_omp(const Matrix& A, const Matrix& B, Matrix& C) {
    check(A.rows == B.rows, "matmul_tn: inner dimension mismatch");
    C = Matrix(A.cols, B.cols);
    const long n = long(A.cols);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i)
        for (std::size_t j = 0; j < B.cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < A.rows; ++r) s += A(r, std::size_t(i)) * B(r, j);
            C(std::size_t(i), j) = s;
        }
}

void matmul_tn(const Matrix& A, const Matrix& B, Matrix& C) {
    if (use_omp(A.cols * B.cols)) matmul_tn_omp(A, B, C);
    else matmul_tn_serial(A, B, C);
}

void col_sums_serial(const Matrix& A, std::vector<double>& out) {
    out.assign(A.cols, 0.0);
    for (std::size_t j = 0; j < A.cols; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < A.rows; ++r) s += A(r, j);
        out[j] = s;
    }
}

void col_sums_omp(const Matrix& A, std::vector<double>& out) {
    out.assign(A.cols, 0.0);
    const long n = long(A.cols);
#pragma omp parallel for schedule(static)
    for (long j = 0; j < n; ++j) {
        double s = 0.0;
        for (std::size_t r = 0; r < A.rows; ++r) s += A(r, std::size_t(j));
        out[std::size_t(j)] = s;
    }
}

void col_sums(const Matrix& A, std::vector<double>& out) {
    if (use_omp(A.rows * A.cols)) col_sums_omp(A, out);
    else col_sums_serial(A, out);
}

} // namespace dsa::linalg
