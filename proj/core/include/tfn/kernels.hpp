#pragma once

#include <cstddef>
#include <span>

namespace tfn::kernels {

// Row-major GEMM variants. Every output element is reduced in a fixed order
// that does not depend on the thread count, so results are reproducible
// bit-for-bit on a given build.

// C[m,n] (+)= A[m,k] * B[k,n]
template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// C[k,n] (+)= A[m,k]^T * B[m,n]
template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate);

// C[m,k] (+)= A[m,n] * B[k,n]^T
template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate);

// out[cols, rows] = in[rows, cols]^T
template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows,
               std::size_t cols);

int max_threads();
void set_threads(int n);

} // namespace tfn::kernels
