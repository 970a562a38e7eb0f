#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "motctl/nn.hpp"
#include "motctl/tape.hpp"

namespace testutil {

using Mat = Eigen::MatrixXd;

struct GradCheckResult {
  double max_rel_err = 0;
  std::string worst;  // "param[i,j]"
  int checked = 0;
};

// Central finite differences of a scalar loss against every trainable entry
// of the store. `build` must construct the loss graph from the current store
// values on a fresh tape. Relative error uses max(1, |num| + |ana|) as the
// denominator so tiny gradients compare absolutely.
inline GradCheckResult check_gradients(
    motctl::nn::ParameterStore& store,
    const std::function<motctl::ad::Val(motctl::ad::Tape&)>& build,
    double h = 1e-5) {
  GradCheckResult res;

  std::map<std::string, Mat> analytic;
  {
    motctl::ad::Tape tape;
    motctl::ad::Val loss = build(tape);
    store.zero_grad();
    tape.backward(loss);
    for (const auto& [name, entry] : store.entries()) analytic[name] = entry.grad;
  }

  auto eval = [&]() {
    motctl::ad::Tape tape;
    return tape.scalar(build(tape));
  };

  for (const auto& [name, entry] : store.entries()) {
    Mat& v = store.value_mut(name);
    for (Eigen::Index i = 0; i < v.rows(); ++i)
      for (Eigen::Index j = 0; j < v.cols(); ++j) {
        double saved = v(i, j);
        v(i, j) = saved + h;
        double up = eval();
        v(i, j) = saved - h;
        double dn = eval();
        v(i, j) = saved;
        double num = (up - dn) / (2 * h);
        double ana = analytic[name](i, j);
        double rel = std::abs(num - ana) / std::max(1.0, std::abs(num) + std::abs(ana));
        ++res.checked;
        if (rel > res.max_rel_err) {
          res.max_rel_err = rel;
          res.worst = name + "[" + std::to_string(i) + "," + std::to_string(j) + "]";
        }
      }
  }
  return res;
}

}  // namespace testutil
