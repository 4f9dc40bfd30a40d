#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

namespace ntkf {

enum class OptimizerKind { kGd, kAdam };

OptimizerKind parse_optimizer(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kGd;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double epsilon = 1e-8;
};

/// Plain gradient descent (no momentum) or Adam with bias correction.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : cfg_(config) {}

  const OptimizerConfig& config() const noexcept { return cfg_; }
  long steps() const noexcept { return t_; }

  void step(std::vector<Eigen::MatrixXd>& weights, const std::vector<Eigen::MatrixXd>& grads);

 private:
  OptimizerConfig cfg_;
  long t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;
};

}  // namespace ntkf
