#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bidlab/kernels.hpp"
#include "bidlab/learn.hpp"

namespace bidlab::learn {

Mlp::Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (int d : dims_)
    if (d < 1) throw std::invalid_argument("Mlp: nonpositive layer width");
  int off = 0;
  for (size_t l = 1; l < dims_.size(); ++l) {
    w_off_.push_back(off);
    off += dims_[l] * dims_[l - 1];
    b_off_.push_back(off);
    off += dims_[l];
  }
  param_count_ = off;
}

std::vector<double> Mlp::init(std::mt19937_64& rng, double out_gain) const {
  std::vector<double> p(param_count_, 0.0);
  for (size_t l = 1; l < dims_.size(); ++l) {
    int fan_in = dims_[l - 1], fan_out = dims_[l];
    double a = std::sqrt(6.0 / (fan_in + fan_out));
    if (l + 1 == dims_.size()) a *= out_gain;
    std::uniform_real_distribution<double> u(-a, a);
    double* w = p.data() + w_off_[l - 1];
    for (int i = 0; i < fan_out * fan_in; ++i) w[i] = u(rng);
    // biases stay zero
  }
  return p;
}

void Mlp::forward(const std::vector<double>& params, const double* x, Workspace& ws) const {
  const size_t L = dims_.size() - 1;
  ws.acts.resize(L + 1);
  ws.acts[0].assign(x, x + dims_[0]);
  for (size_t l = 1; l <= L; ++l) {
    int m = dims_[l], n = dims_[l - 1];
    ws.acts[l].resize(m);
    kernels::matvec(params.data() + w_off_[l - 1], ws.acts[l - 1].data(),
                    params.data() + b_off_[l - 1], ws.acts[l].data(), m, n);
    if (l < L)
      for (double& v : ws.acts[l]) v = std::tanh(v);
  }
}

void Mlp::backward(const std::vector<double>& params, const Workspace& ws, const double* dout,
                   std::vector<double>& dparams, double* dinput) const {
  const size_t L = dims_.size() - 1;
  if (ws.acts.size() != L + 1) throw std::logic_error("Mlp::backward: stale workspace");
  std::vector<double> g(dout, dout + dims_[L]);  // dL/dh for the current layer
  std::vector<double> g_prev;
  for (size_t l = L; l >= 1; --l) {
    int m = dims_[l], n = dims_[l - 1];
    if (l < L)  // undo tanh: acts[l] holds tanh(h)
      for (int i = 0; i < m; ++i) g[i] *= 1.0 - ws.acts[l][i] * ws.acts[l][i];
    kernels::outer_acc(g.data(), ws.acts[l - 1].data(), dparams.data() + w_off_[l - 1], m, n);
    kernels::axpy(1.0, g.data(), dparams.data() + b_off_[l - 1], m);
    if (l > 1 || dinput != nullptr) {
      g_prev.resize(n);
      kernels::matvec_t(params.data() + w_off_[l - 1], g.data(), g_prev.data(), m, n);
      g.swap(g_prev);
    }
    if (l == 1) break;
  }
  if (dinput != nullptr) std::copy(g.begin(), g.end(), dinput);
}

Adam::Adam(int n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::vector<double>& params, const std::vector<double>& grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("Adam::step: size mismatch");
  if (lr_ == 0.0) return;  // parameters must stay bitwise identical
  ++t_;
  double bc1 = 1.0 - std::pow(beta1_, t_);
  double bc2 = 1.0 - std::pow(beta2_, t_);
  for (size_t i = 0; i < m_.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    double mhat = m_[i] / bc1;
    double vhat = v_[i] / bc2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
  }
}

double clip_grad_norm(std::vector<double>& grad, double max_norm) {
  double norm = std::sqrt(kernels::dot(grad.data(), grad.data(), grad.size()));
  if (max_norm > 0.0 && norm > max_norm && norm > 0.0)
    kernels::scale(max_norm / norm, grad.data(), grad.size());
  return norm;
}

GradCheckResult grad_check(const std::function<double(const std::vector<double>&)>& loss,
                           const std::vector<double>& params,
                           const std::vector<double>& analytic_grad, int n_coords, double h,
                           std::mt19937_64& rng) {
  if (params.size() != analytic_grad.size())
    throw std::invalid_argument("grad_check: size mismatch");
  std::vector<size_t> idx(params.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::shuffle(idx.begin(), idx.end(), rng);
  size_t count = std::min<size_t>(n_coords, idx.size());

  GradCheckResult res;
  res.coords_checked = static_cast<int>(count);
  std::vector<double> p = params;
  for (size_t c = 0; c < count; ++c) {
    size_t i = idx[c];
    double saved = p[i];
    p[i] = saved + h;
    double up = loss(p);
    p[i] = saved - h;
    double dn = loss(p);
    p[i] = saved;
    double fd = (up - dn) / (2.0 * h);
    double a = analytic_grad[i];
    double rel = std::abs(a - fd) / std::max({1e-6, std::abs(a), std::abs(fd)});
    res.max_rel_err = std::max(res.max_rel_err, rel);
  }
  return res;
}

}  // namespace bidlab::learn
