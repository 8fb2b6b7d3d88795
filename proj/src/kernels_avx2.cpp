// AVX2+FMA variants of the dense kernels. This translation unit is compiled
// with -mavx2 -mfma on x86-64 only; callers must check avx2_supported()
// before routing through this table.

#include "kernels_detail.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define F0LAB_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define F0LAB_HAVE_AVX2_BUILD 0
#endif

namespace f0lab::kernels::detail {

#if F0LAB_HAVE_AVX2_BUILD

namespace avx2 {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void matvec(const double* w, std::size_t rows, std::size_t cols,
            const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w + r * cols, x, cols);
}

void matvec_acc(const double* w, std::size_t rows, std::size_t cols,
                const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot(w + r * cols, x, cols);
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols,
                  const double* dy, double* dx) {
  for (std::size_t r = 0; r < rows; ++r) axpy(dy[r], w + r * cols, dx, cols);
}

void ger_acc(double* w, std::size_t rows, std::size_t cols,
             const double* dy, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) axpy(dy[r], x, w + r * cols, cols);
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i];
  return s;
}

double sumsq(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

double sq_diff_sum(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void acc_moments(const double* x, std::size_t n, double* sum_acc, double* sq_acc) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(sum_acc + i, _mm256_add_pd(_mm256_loadu_pd(sum_acc + i), v));
    _mm256_storeu_pd(sq_acc + i, _mm256_fmadd_pd(v, v, _mm256_loadu_pd(sq_acc + i)));
  }
  for (; i < n; ++i) {
    sum_acc[i] += x[i];
    sq_acc[i] += x[i] * x[i];
  }
}

}  // namespace avx2

namespace {
const KernelTable kAvx2Table = {
    avx2::matvec, avx2::matvec_acc, avx2::matvec_t_acc, avx2::ger_acc,
    avx2::dot,    avx2::axpy,       avx2::sum,          avx2::sumsq,
    avx2::sq_diff_sum, avx2::acc_moments,
};
}  // namespace

const KernelTable* avx2_table() { return &kAvx2Table; }

bool avx2_supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

#else  // !F0LAB_HAVE_AVX2_BUILD

const KernelTable* avx2_table() { return nullptr; }
bool avx2_supported() { return false; }

#endif

}  // namespace f0lab::kernels::detail
