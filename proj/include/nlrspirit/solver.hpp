#pragma once

#include "nlrspirit/calibration.hpp"
#include "nlrspirit/metrics.hpp"
#include "nlrspirit/patches.hpp"
#include "nlrspirit/shrinkage.hpp"
#include "nlrspirit/tensor.hpp"

#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

namespace nlrspirit {

enum class SolverKind { ne, admm };

std::string_view to_string(SolverKind s);
SolverKind parse_solver_kind(std::string_view s);

/// Tuning parameters. Defaults reproduce the published settings for 2D sampling;
/// use `for_one_dimensional_sampling()` for the 1D stopping constants.
struct ReconConfig {
  double mu1 = 1.0;  ///< calibration-consistency weight
  double mu2 = 1.0;  ///< weight of the nonlocal low-rank estimate Q
  double beta = 0.3; ///< penalty of the Z = X split
  double eta = std::sqrt(2.0);
  ShrinkageParams shrink{};
  BlockMatchParams matching{};
  std::size_t regroup_period = 3; ///< block matching runs when k mod T == 0
  std::size_t max_iter = 30;      ///< at most this many iterations run
  double tol = 1e-4;              ///< stop once RE < tol
  SolverKind solver = SolverKind::ne;

  // ADMM variant penalties and step sizes; unset means beta / eta.
  std::optional<double> beta1, beta2, beta3;
  std::optional<double> eta1, eta2, eta3;

  static ReconConfig for_one_dimensional_sampling();
  void validate() const;
};

struct IterationRecord {
  std::size_t iter = 0; ///< 1-based
  double re = 0.0;
  double elapsed_s = 0.0;
  std::optional<MetricReport> metrics;
};

struct IterationLog {
  std::vector<IterationRecord> records;
  bool converged = false; ///< RE fell below tol before max_iter ran out
};

struct ReconResult {
  MultiCoilImage coils;
  RealImage sos;
  IterationLog log;
};

/// Optional reference for per-iteration metrics.
struct Reference {
  const RealImage* image = nullptr;
  const BinaryImage* roi = nullptr;
  SsimForm ssim_form = SsimForm::standard;
};

/// Z = Delta^-1 (beta X + beta u_Z), pixelwise.
MultiCoilImage z_update(const MultiCoilImage& x, const MultiCoilImage& u_z, const PixelBlocks& delta_inv, double beta);

/// Exact minimizer of ||A X - Y||^2 + w ||X - prior / w||^2, i.e.
/// X = F^H[(P^H Y + F prior) / (P^H P + w)]. `prior` carries the already weighted
/// right-hand side. Throws if w == 0 and the mask drops entries.
MultiCoilImage solve_fourier_diagonal(const KSpaceData& y, const SamplingMask& mask, const MultiCoilImage& prior,
                                      double weight);

/// X-update of the NE split: prior = beta (Z - u_Z) + mu2 Q, weight = beta + mu2.
MultiCoilImage x_update(const KSpaceData& y, const SamplingMask& mask, const MultiCoilImage& z,
                        const MultiCoilImage& u_z, const MultiCoilImage& q, double beta, double mu2);

/// u + eta (X - Z).
MultiCoilImage multiplier_update(const MultiCoilImage& u, const MultiCoilImage& x, const MultiCoilImage& z, double eta);

/// B-update of the ADMM variant: (beta2 sum V*(D - u_D) + beta3 (X + u_B)) over
/// (beta2 counts + beta3), pixelwise. `placed` holds sum V*(D - u_D) and the counts.
MultiCoilImage b_update(const Placement& placed, const MultiCoilImage& x, const MultiCoilImage& u_b, double beta2,
                        double beta3);

/// ||x_new - x_old|| / ||x_old||. Throws if x_old is zero.
double compute_re(const RealImage& x_new, const RealImage& x_old);

/// Nash-equilibrium split: per-group low-rank shrinkage feeding Q, then one inner
/// ADMM pass (Z, X, u_Z) on the calibration-consistent least-squares problem.
ReconResult solve_ne(const KSpaceData& y, const SamplingMask& mask, const CalibKernel& kernel,
                     const ReconConfig& config, const Reference& reference = {});

/// Full variable-splitting ADMM with auxiliaries Z, D_ci, B and their multipliers.
ReconResult solve_admm(const KSpaceData& y, const SamplingMask& mask, const CalibKernel& kernel,
                       const ReconConfig& config, const Reference& reference = {});

/// Dispatches on config.solver.
ReconResult reconstruct(const KSpaceData& y, const SamplingMask& mask, const CalibKernel& kernel,
                        const ReconConfig& config, const Reference& reference = {});

/// Zero-filled baseline: F^H P^H Y.
MultiCoilImage zero_filled(const KSpaceData& y, const SamplingMask& mask);

/// Thrown when the iterate stops being finite.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace nlrspirit
