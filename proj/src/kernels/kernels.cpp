#include "bidlab/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace bidlab::kernels {

namespace scalar {

double dot(const double* x, const double* y, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(double a, double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] *= a;
}

double sum(const double* x, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
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

}  // namespace scalar

namespace {

struct Ops {
  std::string name;
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scale)(double, double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  void (*matvec)(const double*, const double*, const double*, double*,
                 std::size_t, std::size_t);
  void (*matvec_t)(const double*, const double*, double*, std::size_t,
                   std::size_t);
  void (*outer_acc)(const double*, const double*, double*, std::size_t,
                    std::size_t);
};

Ops make_scalar_ops() {
  return {"scalar",         scalar::dot,      scalar::axpy,
          scalar::scale,    scalar::sum,      scalar::matvec,
          scalar::matvec_t, scalar::outer_acc};
}

Ops make_avx2_ops() {
  return {"avx2",         avx2::dot,      avx2::axpy,
          avx2::scale,    avx2::sum,      avx2::matvec,
          avx2::matvec_t, avx2::outer_acc};
}

Ops select_ops() {
  const char* force = std::getenv("BIDLAB_SIMD");
  if (force) {
    std::string f(force);
    if (f == "scalar") return make_scalar_ops();
    if (f == "avx2" && avx2::supported()) return make_avx2_ops();
    return make_scalar_ops();  // unknown or unsupported request
  }
  if (avx2::supported()) return make_avx2_ops();
  return make_scalar_ops();
}

const Ops& ops() {
  static const Ops selected = select_ops();
  return selected;
}

}  // namespace

const std::string& active_variant() { return ops().name; }

double dot(const double* x, const double* y, std::size_t n) {
  return ops().dot(x, y, n);
}
void axpy(double a, const double* x, double* y, std::size_t n) {
  ops().axpy(a, x, y, n);
}
void scale(double a, double* x, std::size_t n) { ops().scale(a, x, n); }
double sum(const double* x, std::size_t n) { return ops().sum(x, n); }
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t m, std::size_t n) {
  ops().matvec(w, x, b, out, m, n);
}
void matvec_t(const double* w, const double* v, double* out, std::size_t m,
              std::size_t n) {
  ops().matvec_t(w, v, out, m, n);
}
void outer_acc(const double* v, const double* x, double* g, std::size_t m,
               std::size_t n) {
  ops().outer_acc(v, x, g, m, n);
}

}  // namespace bidlab::kernels
