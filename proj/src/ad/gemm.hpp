#pragma once

#include <cstddef>
#include <cstring>
#include <vector>

// Small dense GEMM kernels shared by matmul, bmm and conv3d. All matrices are
// row-major with explicit leading dimensions; results accumulate into c.
// Register blocks are one cache line wide so the inner loops vectorize
// without reassociating any sum.
namespace vqsf::ad::detail {

template <class T>
inline constexpr std::size_t kLane = 64 / sizeof(T);

// One cache line as a GCC/Clang vector; unaligned access goes through memcpy.
template <class T>
struct LineOf;
template <>
struct LineOf<float> {
  typedef float type __attribute__((vector_size(64)));
};
template <>
struct LineOf<double> {
  typedef double type __attribute__((vector_size(64)));
};
template <class T>
using Line = typename LineOf<T>::type;

template <class T>
inline Line<T> load(const T* p) {
  Line<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
template <class T>
inline void store(T* p, Line<T> v) {
  std::memcpy(p, &v, sizeof v);
}

// c[m,n] += a[m,k] * b[k,n]. Zero entries of a are skipped.
template <class T>
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a, std::size_t lda,
             const T* __restrict b, std::size_t ldb, T* __restrict c, std::size_t ldc) {
  constexpr std::size_t L = kLane<T>;
  std::size_t j0 = 0;
  for (; j0 + L <= n; j0 += L) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      T* c0 = c + i * ldc + j0;
      Line<T> acc0 = load(c0), acc1 = load(c0 + ldc), acc2 = load(c0 + 2 * ldc), acc3 = load(c0 + 3 * ldc);
      const T* ar = a + i * lda;
      for (std::size_t p = 0; p < k; ++p) {
        const T a0 = ar[p], a1 = ar[lda + p], a2 = ar[2 * lda + p], a3 = ar[3 * lda + p];
        if (a0 == T(0) && a1 == T(0) && a2 == T(0) && a3 == T(0)) continue;
        const Line<T> br = load(b + p * ldb + j0);
        acc0 += a0 * br;
        acc1 += a1 * br;
        acc2 += a2 * br;
        acc3 += a3 * br;
      }
      store(c0, acc0);
      store(c0 + ldc, acc1);
      store(c0 + 2 * ldc, acc2);
      store(c0 + 3 * ldc, acc3);
    }
    for (; i < m; ++i) {
      Line<T> acc = load(c + i * ldc + j0);
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * lda + p];
        if (av == T(0)) continue;
        acc += av * load(b + p * ldb + j0);
      }
      store(c + i * ldc + j0, acc);
    }
  }
  if (j0 < n) {
    for (std::size_t i = 0; i < m; ++i) {
      T* cr = c + i * ldc;
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * lda + p];
        if (av == T(0)) continue;
        const T* br = b + p * ldb;
        for (std::size_t j = j0; j < n; ++j) cr[j] += av * br[j];
      }
    }
  }
}

// c[k,n] += a[m,k]^T * b[m,n]. Zero entries of a are skipped.
template <class T>
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const T* __restrict a, std::size_t lda,
             const T* __restrict b, std::size_t ldb, T* __restrict c, std::size_t ldc) {
  constexpr std::size_t L = kLane<T>;
  std::size_t j0 = 0;
  for (; j0 + L <= n; j0 += L) {
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      T* c0 = c + p * ldc + j0;
      Line<T> acc0 = load(c0), acc1 = load(c0 + ldc), acc2 = load(c0 + 2 * ldc), acc3 = load(c0 + 3 * ldc);
      for (std::size_t i = 0; i < m; ++i) {
        const T* ar = a + i * lda + p;
        const T a0 = ar[0], a1 = ar[1], a2 = ar[2], a3 = ar[3];
        if (a0 == T(0) && a1 == T(0) && a2 == T(0) && a3 == T(0)) continue;
        const Line<T> br = load(b + i * ldb + j0);
        acc0 += a0 * br;
        acc1 += a1 * br;
        acc2 += a2 * br;
        acc3 += a3 * br;
      }
      store(c0, acc0);
      store(c0 + ldc, acc1);
      store(c0 + 2 * ldc, acc2);
      store(c0 + 3 * ldc, acc3);
    }
    for (; p < k; ++p) {
      Line<T> acc = load(c + p * ldc + j0);
      for (std::size_t i = 0; i < m; ++i) {
        const T av = a[i * lda + p];
        if (av == T(0)) continue;
        acc += av * load(b + i * ldb + j0);
      }
      store(c + p * ldc + j0, acc);
    }
  }
  if (j0 < n) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T av = a[i * lda + p];
        if (av == T(0)) continue;
        const T* br = b + i * ldb;
        T* cr = c + p * ldc;
        for (std::size_t j = j0; j < n; ++j) cr[j] += av * br[j];
      }
  }
}

template <class T>
std::vector<T> transposed(const T* b, std::size_t rows, std::size_t cols) {
  std::vector<T> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

// c[m,n] += a[m,k] * b[n,k]^T
template <class T>
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const T* a, std::size_t lda, const T* b, std::size_t ldb,
             T* c, std::size_t ldc) {
  std::vector<T> bt(k * n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + r] = b[r * ldb + p];
  gemm_nn(m, k, n, a, lda, bt.data(), n, c, ldc);
}

}  // namespace vqsf::ad::detail
