#include "ntkfilter/optimizer.hpp"

#include <cmath>

#include "ntkfilter/errors.hpp"

namespace ntkf {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "gd") return OptimizerKind::kGd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + name + "'");
}

void Optimizer::step(std::vector<Eigen::MatrixXd>& w, const std::vector<Eigen::MatrixXd>& g) {
  if (w.size() != g.size()) throw ShapeError("gradient does not match weights");
  ++t_;
  if (cfg_.kind == OptimizerKind::kGd) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg_.learning_rate * g[i];
    return;
  }
  if (m_.empty()) {
    for (const auto& x : w) {
      m_.push_back(Eigen::MatrixXd::Zero(x.rows(), x.cols()));
      v_.push_back(Eigen::MatrixXd::Zero(x.rows(), x.cols()));
    }
  }
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < w.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i].cwiseAbs2();
    w[i].array() -= cfg_.learning_rate * (m_[i].array() / bc1) /
                    ((v_[i].array() / bc2).sqrt() + cfg_.epsilon);
  }
}

}  // namespace ntkf
