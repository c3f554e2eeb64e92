// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; callers must check avx2::supported() first.

#include "bidlab/kernels.hpp"

#ifdef BIDLAB_NO_AVX2

namespace bidlab::kernels::avx2 {
bool supported() { return false; }
double dot(const double* x, const double* y, std::size_t n) {
  return scalar::dot(x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  scalar::axpy(a, x, y, n);
}
void scale(double a, double* x, std::size_t n) { scalar::scale(a, x, n); }
double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t m, std::size_t n) {
  scalar::matvec(w, x, b, out, m, n);
}
void matvec_t(const double* w, const double* v, double* out, std::size_t m,
              std::size_t n) {
  scalar::matvec_t(w, v, out, m, n);
}
void outer_acc(const double* v, const double* x, double* g, std::size_t m,
               std::size_t n) {
  scalar::outer_acc(v, x, g, m, n);
}
}  // namespace bidlab::kernels::avx2

#else

#include <immintrin.h>

#include <cstring>

namespace bidlab::kernels::avx2 {

bool supported() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double r = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) r += x[i] * y[i];
  return r;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void scale(double a, double* x, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) x[i] *= a;
}

double sum(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc);
  double r = lanes[0] + lanes[1] + lanes[2] + lanes[3];
  for (; i < n; ++i) r += x[i];
  return r;
}

void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    out[i] = dot(w + i * n, x, n) + (b ? b[i] : 0.0);
}

void matvec_t(const double* w, const double* v, double* out, std::size_t m,
              std::size_t n) {
  std::memset(out, 0, n * sizeof(double));
  for (std::size_t i = 0; i < m; ++i) axpy(v[i], w + i * n, out, n);
}

void outer_acc(const double* v, const double* x, double* g, std::size_t m,
               std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) axpy(v[i], x, g + i * n, n);
}

}  // namespace bidlab::kernels::avx2

#endif  // BIDLAB_NO_AVX2
