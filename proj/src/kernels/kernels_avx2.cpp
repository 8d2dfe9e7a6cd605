// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.
#include "kernels_impl.hpp"

#include <immintrin.h>

#include <cmath>

namespace dynfilt::kernels::detail {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline void axpy_column(const double* col, double xj, std::size_t rows, double* y) {
  const std::size_t vec_end = rows & ~std::size_t{3};
  const __m256d xv = _mm256_set1_pd(xj);
  std::size_t i = 0;
  for (; i < vec_end; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(_mm256_loadu_pd(col + i), xv, _mm256_loadu_pd(y + i)));
  }
  for (; i < rows; ++i) y[i] = std::fma(col[i], xj, y[i]);
}

// Nonzero columns are gathered four at a time so y is loaded and stored once per group.
void gemv_avx2(const double* a, std::size_t rows, std::size_t cols, const double* x, double* y) {
  const std::size_t vec_end = rows & ~std::size_t{3};
  for (std::size_t i = 0; i < rows; ++i) y[i] = 0.0;
  std::size_t idx[4];
  int count = 0;
  for (std::size_t j = 0; j < cols; ++j) {
    if (x[j] == 0.0) continue;
    idx[count++] = j;
    if (count < 4) continue;
    count = 0;
    const double* c0 = a + idx[0] * rows;
    const double* c1 = a + idx[1] * rows;
    const double* c2 = a + idx[2] * rows;
    const double* c3 = a + idx[3] * rows;
    const __m256d x0 = _mm256_set1_pd(x[idx[0]]);
    const __m256d x1 = _mm256_set1_pd(x[idx[1]]);
    const __m256d x2 = _mm256_set1_pd(x[idx[2]]);
    const __m256d x3 = _mm256_set1_pd(x[idx[3]]);
    std::size_t i = 0;
    for (; i < vec_end; i += 4) {
      __m256d acc = _mm256_loadu_pd(y + i);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(c0 + i), x0, acc);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(c1 + i), x1, acc);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(c2 + i), x2, acc);
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(c3 + i), x3, acc);
      _mm256_storeu_pd(y + i, acc);
    }
    for (; i < rows; ++i) {
      double acc = y[i];
      acc = std::fma(c0[i], x[idx[0]], acc);
      acc = std::fma(c1[i], x[idx[1]], acc);
      acc = std::fma(c2[i], x[idx[2]], acc);
      y[i] = std::fma(c3[i], x[idx[3]], acc);
    }
  }
  for (int k = 0; k < count; ++k) axpy_column(a + idx[k] * rows, x[idx[k]], rows, y);
}

// Four columns per pass so each load of x feeds four accumulators.
void gemv_t_avx2(const double* a, std::size_t rows, std::size_t cols, const double* x,
                 double* y) {
  const std::size_t vec_end = rows & ~std::size_t{3};
  std::size_t j = 0;
  for (; j + 4 <= cols; j += 4) {
    const double* c0 = a + j * rows;
    const double* c1 = c0 + rows;
    const double* c2 = c1 + rows;
    const double* c3 = c2 + rows;
    __m256d s0 = _mm256_setzero_pd();
    __m256d s1 = _mm256_setzero_pd();
    __m256d s2 = _mm256_setzero_pd();
    __m256d s3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i < vec_end; i += 4) {
      const __m256d xv = _mm256_loadu_pd(x + i);
      s0 = _mm256_fmadd_pd(_mm256_loadu_pd(c0 + i), xv, s0);
      s1 = _mm256_fmadd_pd(_mm256_loadu_pd(c1 + i), xv, s1);
      s2 = _mm256_fmadd_pd(_mm256_loadu_pd(c2 + i), xv, s2);
      s3 = _mm256_fmadd_pd(_mm256_loadu_pd(c3 + i), xv, s3);
    }
    double r0 = hsum(s0);
    double r1 = hsum(s1);
    double r2 = hsum(s2);
    double r3 = hsum(s3);
    for (; i < rows; ++i) {
      r0 += c0[i] * x[i];
      r1 += c1[i] * x[i];
      r2 += c2[i] * x[i];
      r3 += c3[i] * x[i];
    }
    y[j] = r0;
    y[j + 1] = r1;
    y[j + 2] = r2;
    y[j + 3] = r3;
  }
  for (; j < cols; ++j) {
    const double* col = a + j * rows;
    __m256d s = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i < vec_end; i += 4) s = _mm256_fmadd_pd(_mm256_loadu_pd(col + i), _mm256_loadu_pd(x + i), s);
    double r = hsum(s);
    for (; i < rows; ++i) r += col[i] * x[i];
    y[j] = r;
  }
}

inline __m256d shrink4(__m256d u, __m256d t) {
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  const __m256d mag = _mm256_sub_pd(_mm256_andnot_pd(sign_mask, u), t);
  const __m256d positive = _mm256_cmp_pd(mag, _mm256_setzero_pd(), _CMP_GT_OQ);
  const __m256d signed_mag = _mm256_or_pd(mag, _mm256_and_pd(sign_mask, u));
  // Entries at or below the threshold become +0.0, matching the scalar path.
  return _mm256_and_pd(signed_mag, positive);
}

inline double shrink1(double u, double t) {
  const double mag = std::fabs(u) - t;
  if (mag <= 0.0) return 0.0;
  return std::copysign(mag, u);
}

void soft_threshold_avx2(const double* u, const double* t, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, shrink4(_mm256_loadu_pd(u + i), _mm256_loadu_pd(t + i)));
  }
  for (; i < n; ++i) out[i] = shrink1(u[i], t[i]);
}

void soft_threshold_uniform_avx2(const double* u, double t, std::size_t n, double* out) {
  const __m256d tv = _mm256_set1_pd(t);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, shrink4(_mm256_loadu_pd(u + i), tv));
  for (; i < n; ++i) out[i] = shrink1(u[i], t);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d s0 = _mm256_setzero_pd();
  __m256d s1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
    s1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), s1);
  }
  for (; i + 4 <= n; i += 4) s0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), s0);
  double r = hsum(_mm256_add_pd(s0, s1));
  for (; i < n; ++i) r += a[i] * b[i];
  return r;
}

void axpy_avx2(double alpha, const double* x, std::size_t n, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = std::fma(alpha, x[i], y[i]);
}

}  // namespace

const KernelTable kAvx2Table{
    Backend::kAvx2,       "avx2",
    &gemv_avx2,           &gemv_t_avx2,
    &soft_threshold_avx2, &soft_threshold_uniform_avx2,
    &dot_avx2,            &axpy_avx2,
};

}  // namespace dynfilt::kernels::detail
