#pragma once

#include <map>
#include <string>
#include <vector>

#include "forec/params.hpp"
#include "forec/tape.hpp"

namespace forec::ad {

// theta <- theta - lr * (g + 2 * l2 * theta) for every entry named in grads.
// Grads may only name non-frozen entries; frozen tensors are never touched.
void sgd_step(ParamSet& params, const GradMap& grads, double lr, double l2);

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double l2, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), l2_(l2), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamSet& params, const GradMap& grads);
  void reset() { state_.clear(); }

 private:
  struct Moments {
    std::vector<double> m, v;
    long t = 0;
  };

  double lr_, l2_, beta1_, beta2_, eps_;
  std::map<std::string, Moments> state_;
};

}  // namespace forec::ad
