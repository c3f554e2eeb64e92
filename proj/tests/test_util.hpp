#pragma once

// Shared helpers for test-side oracles: finite differences, determinants,
// and small dense utilities kept independent of the library under test.

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <vector>

namespace testutil {

// central-difference Jacobian of f: R^n -> R^m
inline std::vector<std::vector<double>> fd_jacobian(
    const std::function<std::vector<double>(const std::vector<double>&)>& f,
    const std::vector<double>& x, double h) {
  const std::size_t n = x.size();
  std::vector<std::vector<double>> cols(n);
  for (std::size_t j = 0; j < n; ++j) {
    auto xp = x, xm = x;
    xp[j] += h;
    xm[j] -= h;
    const auto fp = f(xp), fm = f(xm);
    cols[j].resize(fp.size());
    for (std::size_t i = 0; i < fp.size(); ++i)
      cols[j][i] = (fp[i] - fm[i]) / (2.0 * h);
  }
  // transpose to row-major m x n
  const std::size_t m = cols.empty() ? 0 : cols[0].size();
  std::vector<std::vector<double>> jac(m, std::vector<double>(n));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) jac[i][j] = cols[j][i];
  return jac;
}

// determinant by LU with partial pivoting (destroys its copy)
inline double det(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double d = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::fabs(a[i][k]) > std::fabs(a[piv][k])) piv = i;
    if (a[piv][k] == 0.0) return 0.0;
    if (piv != k) {
      std::swap(a[piv], a[k]);
      d = -d;
    }
    d *= a[k][k];
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
    }
  }
  return d;
}

inline double rel_err(double got, double want) {
  return std::fabs(got - want) / std::max(1e-300, std::fabs(want));
}

inline std::vector<double> random_unit_box(std::mt19937_64& rng, std::size_t k,
                                           double margin = 1e-3) {
  std::uniform_real_distribution<double> dist(margin, 1.0 - margin);
  std::vector<double> v(k);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace testutil
