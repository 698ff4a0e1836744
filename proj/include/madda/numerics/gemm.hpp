#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

namespace madda::numerics {

enum class Transpose { no, yes };

namespace detail {

inline constexpr std::size_t kGemmRows = 8;
inline constexpr std::size_t kGemmCols = 32;
inline constexpr std::size_t kVectorBytes = 64;

// op(M)(r, c) for a row-major matrix with leading dimension ld.
template <typename T>
inline T element(const T* m, std::size_t ld, Transpose t, std::size_t r, std::size_t c) {
  return t == Transpose::no ? m[r * ld + c] : m[c * ld + r];
}

// Register tile of kGemmRows x kGemmCols accumulators held as GCC/Clang
// vector-extension values so they stay in SIMD registers.
template <typename T>
inline void micro_kernel(std::size_t k, const T* __restrict a_panel, const T* __restrict b_panel,
                         T* __restrict out) {
  constexpr std::size_t lanes = kVectorBytes / sizeof(T);
  constexpr std::size_t vecs = kGemmCols / lanes;
  typedef T vec __attribute__((vector_size(kVectorBytes), aligned(sizeof(T))));
  vec acc[kGemmRows][vecs];
  for (auto& row : acc)
    for (auto& v : row) v = vec{};
  for (std::size_t p = 0; p < k; ++p) {
    vec bv[vecs];
    for (std::size_t v = 0; v < vecs; ++v)
      std::memcpy(&bv[v], b_panel + p * kGemmCols + v * lanes, sizeof(vec));
    const T* a = a_panel + p * kGemmRows;
    for (std::size_t r = 0; r < kGemmRows; ++r) {
      const T ar = a[r];
      for (std::size_t v = 0; v < vecs; ++v) acc[r][v] += ar * bv[v];
    }
  }
  for (std::size_t r = 0; r < kGemmRows; ++r)
    for (std::size_t v = 0; v < vecs; ++v)
      std::memcpy(out + r * kGemmCols + v * lanes, &acc[r][v], sizeof(vec));
}

}  // namespace detail

// C(m x n) = op(A)(m x k) * op(B)(k x n), or C += ... when accumulate is set.
//
// Every output element is produced by the same kernel, summing its k
// products in ascending order starting from zero, so a row of C does not
// depend on how many other rows or columns are computed alongside it. Edge
// tiles are zero-padded rather than handled by a separate scalar path.
template <typename T>
void gemm(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  using detail::kGemmCols;
  using detail::kGemmRows;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T{0});
    return;
  }

  const std::size_t col_panels = (n + kGemmCols - 1) / kGemmCols;
  std::vector<T> b_packed(col_panels * k * kGemmCols, T{0});
  for (std::size_t jp = 0; jp < col_panels; ++jp) {
    T* dst = b_packed.data() + jp * k * kGemmCols;
    const std::size_t j0 = jp * kGemmCols;
    const std::size_t width = std::min(kGemmCols, n - j0);
    if (tb == Transpose::no) {
      for (std::size_t p = 0; p < k; ++p) {
        const T* src = b + p * ldb + j0;
        std::copy(src, src + width, dst + p * kGemmCols);
      }
    } else {
      for (std::size_t j = 0; j < width; ++j) {
        const T* src = b + (j0 + j) * ldb;
        for (std::size_t p = 0; p < k; ++p) dst[p * kGemmCols + j] = src[p];
      }
    }
  }

  std::vector<T> a_packed(k * kGemmRows);
  T tile[kGemmRows * kGemmCols];
  for (std::size_t i0 = 0; i0 < m; i0 += kGemmRows) {
    const std::size_t height = std::min(kGemmRows, m - i0);
    std::fill(a_packed.begin(), a_packed.end(), T{0});
    for (std::size_t r = 0; r < height; ++r)
      for (std::size_t p = 0; p < k; ++p)
        a_packed[p * kGemmRows + r] = detail::element(a, lda, ta, i0 + r, p);

    for (std::size_t jp = 0; jp < col_panels; ++jp) {
      detail::micro_kernel(k, a_packed.data(), b_packed.data() + jp * k * kGemmCols, tile);
      const std::size_t j0 = jp * kGemmCols;
      const std::size_t width = std::min(kGemmCols, n - j0);
      for (std::size_t r = 0; r < height; ++r) {
        T* crow = c + (i0 + r) * ldc + j0;
        const T* trow = tile + r * kGemmCols;
        if (accumulate) {
          for (std::size_t j = 0; j < width; ++j) crow[j] += trow[j];
        } else {
          std::copy(trow, trow + width, crow);
        }
      }
    }
  }
}

}  // namespace madda::numerics
