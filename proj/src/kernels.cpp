#include "a2pd/kernels.hpp"

#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace a2pd::kernels {

namespace serial {

void matmul_nn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

void matmul_nt(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] = acc;
        }
}

void matmul_tn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p)
                acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] = acc;
        }
}

void tanh_ew(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void exp_ew(double* y, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::exp(x[i]);
}

// Blocked reduction with a fixed block size so the summation order does
// not depend on thread count.
double sum(const double* x, std::size_t n) {
    constexpr std::size_t block = 1024;
    double total = 0.0;
    for (std::size_t b = 0; b < n; b += block) {
        std::size_t end = b + block < n ? b + block : n;
        double part = 0.0;
        for (std::size_t i = b; i < end; ++i) part += x[i];
        total += part;
    }
    return total;
}

void row_sum(double* y, const double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t cidx = 0; cidx < cols; ++cidx) acc += x[r * cols + cidx];
        y[r] = acc;
    }
}

void col_sum(double* y, const double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t cidx = 0; cidx < cols; ++cidx) y[cidx] = 0.0;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t cidx = 0; cidx < cols; ++cidx) y[cidx] += x[r * cols + cidx];
}

} // namespace serial

void matmul_nn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m * n * k >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p)
                    acc += a[(std::size_t)i * k + p] * b[p * n + j];
                c[(std::size_t)i * n + j] = acc;
            }
        return;
    }
#endif
    serial::matmul_nn(c, a, b, m, k, n);
}

void matmul_nt(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m * n * k >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p)
                    acc += a[(std::size_t)i * k + p] * b[j * k + p];
                c[(std::size_t)i * n + j] = acc;
            }
        return;
    }
#endif
    serial::matmul_nt(c, a, b, m, k, n);
}

void matmul_tn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n) {
#ifdef _OPENMP
    if (m * n * k >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p)
                    acc += a[p * m + (std::size_t)i] * b[p * n + j];
                c[(std::size_t)i * n + j] = acc;
            }
        return;
    }
#endif
    serial::matmul_tn(c, a, b, m, k, n);
}

void tanh_ew(double* y, const double* x, std::size_t n) {
#ifdef _OPENMP
    if (n >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)n; ++i) y[i] = std::tanh(x[i]);
        return;
    }
#endif
    serial::tanh_ew(y, x, n);
}

void exp_ew(double* y, const double* x, std::size_t n) {
#ifdef _OPENMP
    if (n >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long i = 0; i < (long long)n; ++i) y[i] = std::exp(x[i]);
        return;
    }
#endif
    serial::exp_ew(y, x, n);
}

double sum(const double* x, std::size_t n) {
#ifdef _OPENMP
    constexpr std::size_t block = 1024;
    if (n >= kParallelThreshold) {
        std::size_t nblocks = (n + block - 1) / block;
        std::vector<double> parts(nblocks, 0.0);
#pragma omp parallel for schedule(static)
        for (long long b = 0; b < (long long)nblocks; ++b) {
            std::size_t lo = (std::size_t)b * block;
            std::size_t hi = lo + block < n ? lo + block : n;
            double part = 0.0;
            for (std::size_t i = lo; i < hi; ++i) part += x[i];
            parts[(std::size_t)b] = part;
        }
        double total = 0.0;
        for (double p : parts) total += p;
        return total;
    }
#endif
    return serial::sum(x, n);
}

void row_sum(double* y, const double* x, std::size_t rows, std::size_t cols) {
#ifdef _OPENMP
    if (rows * cols >= kParallelThreshold) {
#pragma omp parallel for schedule(static)
        for (long long r = 0; r < (long long)rows; ++r) {
            double acc = 0.0;
            for (std::size_t cidx = 0; cidx < cols; ++cidx)
                acc += x[(std::size_t)r * cols + cidx];
            y[r] = acc;
        }
        return;
    }
#endif
    serial::row_sum(y, x, rows, cols);
}

void col_sum(double* y, const double* x, std::size_t rows, std::size_t cols) {
    // column reduction stays serial: outputs are short and the fixed
    // accumulation order is what keeps parallel runs bit-identical
    serial::col_sum(y, x, rows, cols);
}

} // namespace a2pd::kernels
