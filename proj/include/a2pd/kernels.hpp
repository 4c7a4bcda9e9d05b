#pragma once

#include <cstddef>

namespace a2pd::kernels {

// Dense kernels used by the tape. Every kernel has a serial reference
// implementation under kernels::serial; the unqualified entry points
// dispatch to OpenMP loops above a size threshold and must produce
// bit-identical results to the serial versions (per-element summation
// order is fixed, reductions are blocked deterministically).

namespace serial {

// C[m,n] = A[m,k] * B[k,n]
void matmul_nn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n);
// C[m,n] = A[m,k] * B[n,k]^T
void matmul_nt(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n);
// C[m,n] = A[k,m]^T * B[k,n]
void matmul_tn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n);

void tanh_ew(double* y, const double* x, std::size_t n);
void exp_ew(double* y, const double* x, std::size_t n);

double sum(const double* x, std::size_t n);
void row_sum(double* y, const double* x, std::size_t rows, std::size_t cols);
void col_sum(double* y, const double* x, std::size_t rows, std::size_t cols);

} // namespace serial

void matmul_nn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_nt(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n);
void matmul_tn(double* c, const double* a, const double* b,
               std::size_t m, std::size_t k, std::size_t n);

void tanh_ew(double* y, const double* x, std::size_t n);
void exp_ew(double* y, const double* x, std::size_t n);

double sum(const double* x, std::size_t n);
void row_sum(double* y, const double* x, std::size_t rows, std::size_t cols);
void col_sum(double* y, const double* x, std::size_t rows, std::size_t cols);

// Work below this element count stays serial; OpenMP overhead dominates
// on the small matrices this project runs.
constexpr std::size_t kParallelThreshold = 1u << 19;

} // namespace a2pd::kernels
