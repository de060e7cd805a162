#pragma once

#include "graphprompt/autograd.hpp"

#include <string>
#include <vector>

namespace gprompt {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

// First-order optimizer over a fixed list of parameter matrices.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // params[i] -= update(grads[i]). Shapes must match across calls.
  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads);

  OptimizerKind kind() const { return kind_; }
  double learning_rate() const { return lr_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace gprompt
