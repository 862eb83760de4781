#include "nlrspirit/shrinkage.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <string>

namespace nlrspirit {

std::string_view to_string(ShrinkMode m) { return m == ShrinkMode::weighted ? "weighted" : "nuclear"; }

ShrinkMode parse_shrink_mode(std::string_view s) {
  if (s == "weighted") return ShrinkMode::weighted;
  if (s == "nuclear") return ShrinkMode::nuclear;
  throw std::invalid_argument("unknown shrink mode '" + std::string(s) + "'");
}

void ShrinkageParams::validate() const {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (!(b0 > 0.0)) throw std::invalid_argument("b0 must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
}

Eigen::VectorXd wnn_weights(const Eigen::VectorXd& singular_values, std::size_t m, const ShrinkageParams& params) {
  const double md2 = static_cast<double>(m) * params.delta * params.delta;
  const double numerator = params.b0 * std::sqrt(static_cast<double>(m));
  Eigen::VectorXd w(singular_values.size());
  for (Eigen::Index j = 0; j < singular_values.size(); ++j) {
    const double s = singular_values(j);
    const double s_hat = std::sqrt(std::max(s * s - md2, 0.0));
    w(j) = numerator / (s_hat + params.epsilon);
  }
  return w;
}

Eigen::VectorXd shrink_thresholds(const Eigen::VectorXd& singular_values, std::size_t m, const ShrinkageParams& params) {
  if (params.mode == ShrinkMode::weighted) return wnn_weights(singular_values, m, params);
  return Eigen::VectorXd::Constant(singular_values.size(), 0.5 * params.delta * params.delta);
}

PatchGroupMatrix shrink_group(const PatchGroupMatrix& v, const ShrinkageParams& params) {
  if (!v.allFinite()) throw std::domain_error("patch group holds non-finite values");
  if (v.size() == 0 || v.isZero(0.0)) return v;

  Eigen::BDCSVD<PatchGroupMatrix> svd(v, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& sigma = svd.singularValues();
  const Eigen::VectorXd w = shrink_thresholds(sigma, static_cast<std::size_t>(v.cols()), params);

  Eigen::Index keep = 0;
  Eigen::VectorXd gamma(sigma.size());
  for (Eigen::Index j = 0; j < sigma.size(); ++j) {
    gamma(j) = soft_threshold(sigma(j), w(j));
    if (gamma(j) > 0.0) keep = j + 1;
  }
  if (keep == 0) return PatchGroupMatrix::Zero(v.rows(), v.cols());
  return svd.matrixU().leftCols(keep) * gamma.head(keep).asDiagonal() * svd.matrixV().leftCols(keep).adjoint();
}

} // namespace nlrspirit
