#pragma once

// Dense double-precision vector kernels used by the hot loops (network
// forward/backward passes, simplex row operations, Monte Carlo sweeps).
// Every kernel has a scalar reference implementation and may have SIMD
// variants; the active variant is chosen once at startup from CPUID and
// can be forced with the environment variable BIDLAB_SIMD=scalar|avx2.

#include <cstddef>
#include <string>

namespace bidlab::kernels {

// out-of-line reference implementations; always available
namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);  // y += a*x
void scale(double a, double* x, std::size_t n);                  // x *= a
double sum(const double* x, std::size_t n);
// W is row-major m x n. out = W*x + b (b may be nullptr).
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t m, std::size_t n);
// out = W^T * v, overwriting out (length n).
void matvec_t(const double* w, const double* v, double* out, std::size_t m,
              std::size_t n);
// G += v * x^T, G row-major m x n.
void outer_acc(const double* v, const double* x, double* g, std::size_t m,
               std::size_t n);
}  // namespace scalar

// AVX2+FMA variants; call only when avx2_supported() is true
namespace avx2 {
bool supported();
double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t m, std::size_t n);
void matvec_t(const double* w, const double* v, double* out, std::size_t m,
              std::size_t n);
void outer_acc(const double* v, const double* x, double* g, std::size_t m,
               std::size_t n);
}  // namespace avx2

// name of the variant the dispatcher selected ("scalar" or "avx2")
const std::string& active_variant();

double dot(const double* x, const double* y, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double a, double* x, std::size_t n);
double sum(const double* x, std::size_t n);
void matvec(const double* w, const double* x, const double* b, double* out,
            std::size_t m, std::size_t n);
void matvec_t(const double* w, const double* v, double* out, std::size_t m,
              std::size_t n);
void outer_acc(const double* v, const double* x, double* g, std::size_t m,
               std::size_t n);

}  // namespace bidlab::kernels
