#pragma once

#include "nlrspirit/patches.hpp"

#include <Eigen/Core>

#include <string_view>

namespace nlrspirit {

enum class ShrinkMode { weighted, nuclear };

std::string_view to_string(ShrinkMode m);
ShrinkMode parse_shrink_mode(std::string_view s);

struct ShrinkageParams {
  /// Threshold scale; 2 tau = delta^2.
  double delta = 3.0;
  /// Weight constant of the weighted nuclear norm.
  double b0 = 0.4;
  double epsilon = 1e-16;
  ShrinkMode mode = ShrinkMode::weighted;

  void validate() const;
};

/// max(sigma - w, 0).
inline double soft_threshold(double sigma, double w) { return sigma > w ? sigma - w : 0.0; }

/// w_j = b0 sqrt(m) / (sigma_hat_j + eps), sigma_hat_j = sqrt(max(sigma_j^2 - m delta^2, 0)).
/// `singular_values` must be sorted descending; the weights come out ascending.
Eigen::VectorXd wnn_weights(const Eigen::VectorXd& singular_values, std::size_t m, const ShrinkageParams& params);

/// Per-component thresholds for the active mode: WNN weights, or the constant
/// delta^2 / 2 for the plain nuclear norm.
Eigen::VectorXd shrink_thresholds(const Eigen::VectorXd& singular_values, std::size_t m, const ShrinkageParams& params);

/// Low-rank estimate U diag(soft(sigma_j, w_j)) V^H of a patch group. An all-zero
/// group is returned unchanged. Throws on non-finite input.
PatchGroupMatrix shrink_group(const PatchGroupMatrix& v, const ShrinkageParams& params);

} // namespace nlrspirit
