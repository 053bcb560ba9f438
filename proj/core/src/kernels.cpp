#include "tfn/kernels.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace tfn::kernels {
namespace {

// Work below this many multiply-adds is not worth a parallel region.
constexpr std::size_t kParallelThreshold = 1u << 18;

// Two register-tiled micro-kernels cover every GEMM variant:
//   dot:   C(i,j) = sum_p A[i,p] * B[j,p]   (both operands contiguous in p)
//   bcast: C(i,j) = sum_p X(i,p) * Y[p,j]   (vectorized along j)
// Each output element is reduced in a fixed order that depends only on the
// problem shape, never on the tiling of neighbours or the thread count.

template <typename T>
struct Vec {
  static constexpr std::size_t lanes = 32 / sizeof(T);
  typedef T type __attribute__((vector_size(32)));
};

template <typename T>
using vec_t = typename Vec<T>::type;

template <typename T>
[[gnu::always_inline]] inline vec_t<T> load(const T *p) {
  vec_t<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

template <typename T>
[[gnu::always_inline]] inline void store(T *p, vec_t<T> v) {
  std::memcpy(p, &v, sizeof v);
}

template <typename T>
[[gnu::always_inline]] inline T hsum(vec_t<T> v) {
  T r = 0;
  for (std::size_t l = 0; l < Vec<T>::lanes; ++l)
    r += v[l];
  return r;
}

// out(r,q) for an R x Q tile of dot products of length len.
template <typename T, int R, int Q>
[[gnu::always_inline]] inline void dot_tile(const T *a, std::size_t lda, const T *b,
                                            std::size_t ldb, std::size_t len, T *c,
                                            std::size_t ldc, bool accumulate) {
  constexpr std::size_t L = Vec<T>::lanes;
  vec_t<T> acc[R][Q] = {};
  std::size_t p = 0;
  for (; p + L <= len; p += L) {
    vec_t<T> av[R], bv[Q];
    for (int r = 0; r < R; ++r)
      av[r] = load(a + r * lda + p);
    for (int q = 0; q < Q; ++q)
      bv[q] = load(b + q * ldb + p);
    for (int r = 0; r < R; ++r)
      for (int q = 0; q < Q; ++q)
        acc[r][q] += av[r] * bv[q];
  }
  for (int r = 0; r < R; ++r)
    for (int q = 0; q < Q; ++q) {
      T s = hsum<T>(acc[r][q]);
      for (std::size_t t = p; t < len; ++t)
        s += a[r * lda + t] * b[q * ldb + t];
      T &dst = c[r * ldc + q];
      dst = accumulate ? dst + s : s;
    }
}

// C[m,n] (+)= A[m,len] * B[n,len]^T
template <typename T>
void dot_gemm(const T *A, std::size_t lda, const T *B, std::size_t ldb, T *C,
              std::size_t ldc, std::size_t m, std::size_t n, std::size_t len,
              bool accumulate) {
  constexpr std::size_t RB = 4, QB = 4;
  const std::size_t row_blocks = (m + RB - 1) / RB;
  const bool par = m * n * len >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t sb = 0; sb < static_cast<std::ptrdiff_t>(row_blocks); ++sb) {
    const std::size_t i = static_cast<std::size_t>(sb) * RB;
    const T *a = A + i * lda;
    T *c = C + i * ldc;
    if (i + RB <= m) {
      std::size_t j = 0;
      for (; j + QB <= n; j += QB)
        dot_tile<T, 4, 4>(a, lda, B + j * ldb, ldb, len, c + j, ldc, accumulate);
      for (; j < n; ++j)
        dot_tile<T, 4, 1>(a, lda, B + j * ldb, ldb, len, c + j, ldc, accumulate);
    } else {
      for (std::size_t ii = 0; ii < m - i; ++ii)
        for (std::size_t j = 0; j < n; ++j)
          dot_tile<T, 1, 1>(a + ii * lda, lda, B + j * ldb, ldb, len, c + ii * ldc + j, ldc,
                            accumulate);
    }
  }
}

// R rows x V vectors of output columns starting at column j.
template <typename T, int R, int V>
[[gnu::always_inline]] inline void bcast_tile(const T *X, std::size_t xsi, std::size_t xsp,
                                              const T *Y, std::size_t ldy, std::size_t len,
                                              T *C, std::size_t csi, std::size_t csj,
                                              bool accumulate) {
  constexpr std::size_t L = Vec<T>::lanes;
  vec_t<T> acc[R][V] = {};
  for (std::size_t p = 0; p < len; ++p) {
    vec_t<T> yv[V];
    for (int v = 0; v < V; ++v)
      yv[v] = load(Y + p * ldy + v * L);
    for (int r = 0; r < R; ++r) {
      const T x = X[r * xsi + p * xsp];
      for (int v = 0; v < V; ++v)
        acc[r][v] += x * yv[v];
    }
  }
  if (csj == 1 && !accumulate) {
    for (int r = 0; r < R; ++r)
      for (int v = 0; v < V; ++v)
        store(C + r * csi + v * L, acc[r][v]);
    return;
  }
  T tmp[R][V * L];
  for (int r = 0; r < R; ++r)
    for (int v = 0; v < V; ++v)
      store(&tmp[r][v * L], acc[r][v]);
  for (int r = 0; r < R; ++r)
    for (std::size_t q = 0; q < V * L; ++q) {
      T &dst = C[r * csi + q * csj];
      dst = accumulate ? dst + tmp[r][q] : tmp[r][q];
    }
}

// Scalar column tail of bcast_tile with the same per-element order.
template <typename T>
inline void bcast_scalar(const T *X, std::size_t xsi, std::size_t xsp, const T *Y,
                         std::size_t ldy, std::size_t len, T *C, std::size_t csi,
                         std::size_t csj, std::size_t rows, std::size_t cols,
                         bool accumulate) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t q = 0; q < cols; ++q) {
      T s = 0;
      for (std::size_t p = 0; p < len; ++p)
        s += X[r * xsi + p * xsp] * Y[p * ldy + q];
      T &dst = C[r * csi + q * csj];
      dst = accumulate ? dst + s : s;
    }
}

// C(i,j) (+)= sum_p X(i,p) * Y[p,j], X(i,p) = X[i*xsi + p*xsp], Y row-major
// with leading dimension ldy, C(i,j) = C[i*csi + j*csj].
template <typename T>
void bcast_gemm(const T *X, std::size_t xsi, std::size_t xsp, const T *Y, std::size_t ldy,
                T *C, std::size_t csi, std::size_t csj, std::size_t m, std::size_t n,
                std::size_t len, bool accumulate) {
  constexpr std::size_t L = Vec<T>::lanes;
  constexpr std::size_t RB = 4, VB = 2, CB = VB * L;
  const std::size_t row_blocks = (m + RB - 1) / RB;
  const std::size_t col_blocks = (n + CB - 1) / CB;
  const std::size_t tiles = row_blocks * col_blocks;
  const bool par = m * n * len >= kParallelThreshold;
#pragma omp parallel for schedule(static) if (par)
  for (std::ptrdiff_t st = 0; st < static_cast<std::ptrdiff_t>(tiles); ++st) {
    const std::size_t i = (static_cast<std::size_t>(st) / col_blocks) * RB;
    const std::size_t j = (static_cast<std::size_t>(st) % col_blocks) * CB;
    const std::size_t rows = std::min(RB, m - i);
    const std::size_t cols = std::min(CB, n - j);
    const T *x = X + i * xsi;
    const T *y = Y + j;
    T *c = C + i * csi + j * csj;
    std::size_t done = 0;
    if (rows == RB) {
      if (cols == CB) {
        bcast_tile<T, 4, 2>(x, xsi, xsp, y, ldy, len, c, csi, csj, accumulate);
        done = CB;
      } else if (cols >= L) {
        bcast_tile<T, 4, 1>(x, xsi, xsp, y, ldy, len, c, csi, csj, accumulate);
        done = L;
      }
    } else {
      for (std::size_t r = 0; r < rows; ++r) {
        std::size_t q = 0;
        for (; q + L <= cols; q += L)
          bcast_tile<T, 1, 1>(x + r * xsi, xsi, xsp, y + q, ldy, len, c + r * csi + q * csj,
                              csi, csj, accumulate);
        done = q;
      }
    }
    if (done < cols)
      bcast_scalar(x, xsi, xsp, y + done, ldy, len, c + done * csj, csi, csj, rows,
                   cols - done, accumulate);
  }
}

// The dot kernel needs a reduction of at least this length to fill vectors;
// the broadcast kernel needs at least this many output columns.
constexpr std::size_t kMinDotLength = 32;
constexpr std::size_t kMinBcastWidth = 16;

} // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) {
#ifdef _OPENMP
  if (n > 0)
    omp_set_num_threads(n);
#else
  (void)n;
#endif
}

template <typename T>
void transpose(std::span<const T> in, std::span<T> out, std::size_t rows,
               std::size_t cols) {
  constexpr std::size_t B = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += B)
    for (std::size_t c0 = 0; c0 < cols; c0 += B) {
      const std::size_t r1 = std::min(rows, r0 + B);
      const std::size_t c1 = std::min(cols, c0 + B);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c)
          out[c * rows + r] = in[r * cols + c];
    }
}

template <typename T>
void gemm_nn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (n >= kMinBcastWidth || k < kMinDotLength) {
    bcast_gemm(a.data(), k, 1, b.data(), n, c.data(), n, 1, m, n, k, accumulate);
    return;
  }
  std::vector<T> bt(k * n);
  transpose<T>(b, bt, k, n);
  dot_gemm(a.data(), k, bt.data(), k, c.data(), n, m, n, k, accumulate);
}

template <typename T>
void gemm_tn(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // C^T[n,k] = B^T A: rows of C^T are vectorized along k, stored transposed.
  bcast_gemm(b.data(), 1, n, a.data(), k, c.data(), 1, n, n, k, m, accumulate);
}

template <typename T>
void gemm_nt(std::span<const T> a, std::span<const T> b, std::span<T> c,
             std::size_t m, std::size_t n, std::size_t k, bool accumulate) {
  if (n >= kMinDotLength) {
    dot_gemm(a.data(), n, b.data(), n, c.data(), k, m, k, n, accumulate);
    return;
  }
  std::vector<T> bt(n * k);
  transpose<T>(b, bt, k, n);
  bcast_gemm(a.data(), n, 1, bt.data(), k, c.data(), k, 1, m, k, n, accumulate);
}

#define TFN_INSTANTIATE(T)                                                     \
  template void gemm_nn<T>(std::span<const T>, std::span<const T>,             \
                           std::span<T>, std::size_t, std::size_t,             \
                           std::size_t, bool);                                 \
  template void gemm_tn<T>(std::span<const T>, std::span<const T>,             \
                           std::span<T>, std::size_t, std::size_t,             \
                           std::size_t, bool);                                 \
  template void gemm_nt<T>(std::span<const T>, std::span<const T>,             \
                           std::span<T>, std::size_t, std::size_t,             \
                           std::size_t, bool);                                 \
  template void transpose<T>(std::span<const T>, std::span<T>, std::size_t,    \
                             std::size_t);

TFN_INSTANTIATE(float)
TFN_INSTANTIATE(double)
#undef TFN_INSTANTIATE

} // namespace tfn::kernels
