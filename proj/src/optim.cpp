#include "forec/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace forec::ad {

namespace {

void check_target(const ParamSet& params, const std::string& name, const Tensor& g) {
  if (!params.contains(name)) {
    throw std::invalid_argument("optimizer: gradient for unknown param " + name);
  }
  if (params.frozen(name)) {
    throw std::invalid_argument("optimizer: gradient for frozen param " + name);
  }
  if (!params.value(name).same_shape(g)) {
    throw std::invalid_argument("optimizer: gradient shape mismatch for " + name);
  }
}

}  // namespace

void sgd_step(ParamSet& params, const GradMap& grads, double lr, double l2) {
  for (const auto& [name, g] : grads) {
    check_target(params, name, g);
    const Tensor& theta = params.value(name);
    std::vector<double> next(static_cast<size_t>(theta.size()));
    for (long i = 0; i < theta.size(); ++i) {
      const double v = theta[i] - lr * (g[i] + 2.0 * l2 * theta[i]);
      if (!std::isfinite(v)) {
        throw std::runtime_error("sgd_step: non-finite update for " + name);
      }
      next[static_cast<size_t>(i)] = v;
    }
    params.set_value(name, Tensor(theta.shape(), std::move(next)));
  }
}

void AdamOptimizer::step(ParamSet& params, const GradMap& grads) {
  for (const auto& [name, g] : grads) {
    check_target(params, name, g);
    const Tensor& theta = params.value(name);
    const size_t n = static_cast<size_t>(theta.size());
    Moments& st = state_[name];
    if (st.m.empty()) {
      st.m.assign(n, 0.0);
      st.v.assign(n, 0.0);
    }
    st.t += 1;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(st.t));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(st.t));
    std::vector<double> next(n);
    for (size_t i = 0; i < n; ++i) {
      const long li = static_cast<long>(i);
      const double gi = g[li] + 2.0 * l2_ * theta[li];
      st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * gi;
      st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = st.m[i] / bc1;
      const double vhat = st.v[i] / bc2;
      const double v = theta[li] - lr_ * mhat / (std::sqrt(vhat) + eps_);
      if (!std::isfinite(v)) {
        throw std::runtime_error("adam: non-finite update for " + name);
      }
      next[i] = v;
    }
    params.set_value(name, Tensor(theta.shape(), std::move(next)));
  }
}

}  // namespace forec::ad
