#include "ntkfilter/gp.hpp"

#include <Eigen/Cholesky>

#include "ntkfilter/errors.hpp"

namespace ntkf {

GpPosterior gp_posterior(const KernelMatrix& sigma_z, const ImageTensor& y, double sigma_noise) {
  const Eigen::Index d = sigma_z.dim();
  if (static_cast<Eigen::Index>(y.pixels()) != d) throw ShapeError("prior does not match image");
  if (sigma_noise < 0.0) throw ConfigError("noise level must be non-negative");
  const Eigen::MatrixXd& s = sigma_z.matrix();

  GpPosterior out;
  Eigen::MatrixXd sys = s;
  sys.diagonal().array() += sigma_noise * sigma_noise;
  Eigen::LLT<Eigen::MatrixXd> llt(sys);
  if (llt.info() != Eigen::Success) {
    sys.diagonal().array() += 1e-8 * std::max(s.diagonal().mean(), 1e-300);
    llt.compute(sys);
    out.jitter_added = true;
    if (llt.info() != Eigen::Success) throw Error("GP system is not positive definite");
  }
  out.mean = ImageTensor(y.channels(), y.geometry());
  for (int c = 0; c < y.channels(); ++c) {
    out.mean.channel_vector(c) = s * llt.solve(Eigen::VectorXd(y.channel_vector(c)));
  }
  // diag(S - S (S + s^2 I)^{-1} S)
  const Eigen::MatrixXd sol = llt.solve(s);
  out.variance = s.diagonal() - (s.array() * sol.array()).colwise().sum().transpose().matrix();
  return out;
}

}  // namespace ntkf
