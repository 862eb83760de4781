#include "nlrspirit/solver.hpp"

#include "nlrspirit/parallel.hpp"

#include <chrono>
#include <limits>
#include <string>

namespace nlrspirit {

std::string_view to_string(SolverKind s) { return s == SolverKind::ne ? "ne" : "admm"; }

SolverKind parse_solver_kind(std::string_view s) {
  if (s == "ne") return SolverKind::ne;
  if (s == "admm") return SolverKind::admm;
  throw std::invalid_argument("unknown solver '" + std::string(s) + "' (expected ne or admm)");
}

ReconConfig ReconConfig::for_one_dimensional_sampling() {
  ReconConfig c;
  c.max_iter = 80;
  c.tol = 5e-5;
  return c;
}

void ReconConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(mu1, "mu1");
  positive(mu2, "mu2");
  positive(beta, "beta");
  positive(eta, "eta");
  positive(tol, "tol");
  for (auto [v, name] : {std::pair{beta1, "beta1"}, {beta2, "beta2"}, {beta3, "beta3"}, {eta1, "eta1"},
                         {eta2, "eta2"}, {eta3, "eta3"}})
    if (v) positive(*v, name);
  shrink.validate();
  if (regroup_period == 0) throw std::invalid_argument("block-matching period must be >= 1");
  if (max_iter == 0) throw std::invalid_argument("max iterations must be >= 1");
  if (matching.patch_side == 0 || matching.stride == 0 || matching.group_size == 0)
    throw std::invalid_argument("patch side, stride and group size must be positive");
}

MultiCoilImage z_update(const MultiCoilImage& x, const MultiCoilImage& u_z, const PixelBlocks& delta_inv,
                        double beta) {
  if (!x.same_shape(u_z)) throw ShapeError("X and u_Z differ in shape");
  MultiCoilImage rhs = x + u_z;
  rhs *= cx(beta);
  return apply_blocks(delta_inv, rhs);
}

MultiCoilImage solve_fourier_diagonal(const KSpaceData& y, const SamplingMask& mask, const MultiCoilImage& prior,
                                      double weight) {
  if (!y.same_shape(prior)) throw ShapeError("k-space and prior differ in shape");
  if (mask.nx() != y.nx() || mask.ny() != y.ny()) throw ShapeError("mask and k-space differ in shape");
  if (!(weight >= 0.0)) throw std::invalid_argument("Fourier-diagonal weight must be >= 0");
  if (weight == 0.0 && mask.count() != mask.nx() * mask.ny())
    throw std::domain_error("zero denominator: no prior weight and the mask drops entries");

  KSpaceData k = fft2_coils(prior);
  const std::size_t N = y.pixels();
  for (std::size_t c = 0; c < y.coils(); ++c) {
    auto kc = k.coil(c);
    auto yc = y.coil(c);
    for (std::size_t p = 0; p < N; ++p) {
      if (mask.kept(p))
        kc[p] = (yc[p] + kc[p]) / (1.0 + weight);
      else
        kc[p] /= weight;
    }
  }
  return ifft2_coils(k);
}

MultiCoilImage x_update(const KSpaceData& y, const SamplingMask& mask, const MultiCoilImage& z,
                        const MultiCoilImage& u_z, const MultiCoilImage& q, double beta, double mu2) {
  if (!z.same_shape(u_z) || !z.same_shape(q)) throw ShapeError("Z, u_Z and Q differ in shape");
  MultiCoilImage prior = z - u_z;
  prior *= cx(beta);
  for (std::size_t i = 0; i < prior.size(); ++i) prior[i] += mu2 * q[i];
  return solve_fourier_diagonal(y, mask, prior, beta + mu2);
}

MultiCoilImage multiplier_update(const MultiCoilImage& u, const MultiCoilImage& x, const MultiCoilImage& z,
                                 double eta) {
  if (!u.same_shape(x) || !u.same_shape(z)) throw ShapeError("multiplier operands differ in shape");
  MultiCoilImage out = u;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += eta * (x[i] - z[i]);
  return out;
}

double compute_re(const RealImage& x_new, const RealImage& x_old) {
  if (!x_new.same_shape(x_old)) throw ShapeError("RE operands differ in shape");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x_new.size(); ++i) {
    const double d = x_new[i] - x_old[i];
    num += d * d;
    den += x_old[i] * x_old[i];
  }
  if (den == 0.0) throw std::domain_error("relative error undefined: previous image is zero");
  return std::sqrt(num / den);
}

MultiCoilImage zero_filled(const KSpaceData& y, const SamplingMask& mask) { return apply_encoding_adjoint(y, mask); }

namespace {

using Clock = std::chrono::steady_clock;

void check_inputs(const KSpaceData& y, const SamplingMask& mask, const CalibKernel& kernel, const ReconConfig& cfg) {
  cfg.validate();
  if (mask.nx() != y.nx() || mask.ny() != y.ny()) throw ShapeError("mask and k-space differ in shape");
  if (kernel.coils() != y.coils())
    throw ShapeError("kernel built for " + std::to_string(kernel.coils()) + " coils, data has " +
                     std::to_string(y.coils()));
}

// RE with the degenerate cases resolved instead of thrown: a run that stays at zero
// has converged, one that leaves zero has not.
double iteration_re(const RealImage& x_new, const RealImage& x_old) {
  if (norm(x_old) == 0.0) return norm(x_new) == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return compute_re(x_new, x_old);
}

void guard_finite(const MultiCoilImage& x, std::size_t iter, const char* what) {
  if (!all_finite(x))
    throw DivergenceError(std::string(what) + " became non-finite at iteration " + std::to_string(iter) +
                          "; try a larger beta or smaller step sizes");
}

std::vector<PatchGroupMatrix> shrink_all(const std::vector<PatchGroupMatrix>& groups, const ShrinkageParams& p) {
  std::vector<PatchGroupMatrix> out(groups.size());
  parallel_for(groups.size(), [&](std::size_t i) { out[i] = shrink_group(groups[i], p); });
  return out;
}

// Logs one iteration and reports whether the stopping rule fired.
class Recorder {
public:
  Recorder(const Reference& ref, const ReconConfig& cfg) : ref_(ref), cfg_(cfg), start_(Clock::now()) {}

  bool record(IterationLog& log, std::size_t iter, const RealImage& x_new, const RealImage& x_old) {
    IterationRecord r;
    r.iter = iter;
    r.re = iteration_re(x_new, x_old);
    r.elapsed_s = std::chrono::duration<double>(Clock::now() - start_).count();
    if (ref_.image) r.metrics = evaluate(*ref_.image, x_new, ref_.roi, ref_.ssim_form);
    log.records.push_back(r);
    if (r.re < cfg_.tol) {
      log.converged = true;
      return true;
    }
    return false;
  }

private:
  const Reference& ref_;
  const ReconConfig& cfg_;
  Clock::time_point start_;
};

} // namespace

ReconResult solve_ne(const KSpaceData& y_in, const SamplingMask& mask, const CalibKernel& kernel,
                     const ReconConfig& cfg, const Reference& reference) {
  check_inputs(y_in, mask, kernel, cfg);
  const KSpaceData y = apply_mask(y_in, mask);
  const PixelBlocks delta_inv =
      build_delta_inverse(kernel_to_image_operator(kernel, y.nx(), y.ny()), cfg.mu1, cfg.beta);

  MultiCoilImage x = zero_filled(y, mask);
  MultiCoilImage u_z(y.coils(), y.nx(), y.ny());
  RealImage x_old = sos_combine(x);
  PatchGrouping grouping;
  IterationLog log;
  Recorder rec(reference, cfg);

  for (std::size_t k = 0; k < cfg.max_iter; ++k) {
    if (k % cfg.regroup_period == 0) grouping = block_match(x, cfg.matching);
    const MultiCoilImage q = aggregate_q(shrink_all(extract_groups(x, grouping), cfg.shrink), grouping);
    const MultiCoilImage z = z_update(x, u_z, delta_inv, cfg.beta);
    x = x_update(y, mask, z, u_z, q, cfg.beta, cfg.mu2);
    u_z = multiplier_update(u_z, x, z, cfg.eta);
    guard_finite(x, k + 1, "image estimate");

    RealImage x_new = sos_combine(x);
    const bool stop = rec.record(log, k + 1, x_new, x_old);
    x_old = std::move(x_new);
    if (stop) break;
  }
  return {std::move(x), std::move(x_old), std::move(log)};
}

MultiCoilImage b_update(const Placement& placed, const MultiCoilImage& x, const MultiCoilImage& u_b, double beta2,
                        double beta3) {
  if (!placed.image.same_shape(x) || !x.same_shape(u_b) || placed.weights.counts.size() != x.size())
    throw ShapeError("B-update operands differ in shape");
  MultiCoilImage b(x.coils(), x.nx(), x.ny());
  for (std::size_t i = 0; i < b.size(); ++i)
    b[i] = (beta2 * placed.image[i] + beta3 * (x[i] + u_b[i])) / (beta2 * placed.weights.counts[i] + beta3);
  return b;
}

ReconResult solve_admm(const KSpaceData& y_in, const SamplingMask& mask, const CalibKernel& kernel,
                       const ReconConfig& cfg, const Reference& reference) {
  check_inputs(y_in, mask, kernel, cfg);
  const double b1 = cfg.beta1.value_or(cfg.beta), b2 = cfg.beta2.value_or(cfg.beta), b3 = cfg.beta3.value_or(cfg.beta);
  const double e1 = cfg.eta1.value_or(cfg.eta), e2 = cfg.eta2.value_or(cfg.eta), e3 = cfg.eta3.value_or(cfg.eta);
  const KSpaceData y = apply_mask(y_in, mask);
  const PixelBlocks delta_inv = build_delta_inverse(kernel_to_image_operator(kernel, y.nx(), y.ny()), cfg.mu1, b1);

  MultiCoilImage x = zero_filled(y, mask);
  MultiCoilImage u_z(y.coils(), y.nx(), y.ny());
  MultiCoilImage u_b(y.coils(), y.nx(), y.ny());
  std::vector<PatchGroupMatrix> u_d;
  RealImage x_old = sos_combine(x);
  PatchGrouping grouping;
  IterationLog log;
  Recorder rec(reference, cfg);

  for (std::size_t k = 0; k < cfg.max_iter; ++k) {
    if (k % cfg.regroup_period == 0) {
      grouping = block_match(x, cfg.matching);
      // Group multipliers belong to the old patch sets; they restart from zero.
      u_d.assign(grouping.groups.size(), PatchGroupMatrix::Zero(static_cast<Eigen::Index>(grouping.patch_size()),
                                                                 static_cast<Eigen::Index>(cfg.matching.group_size)));
    }
    std::vector<PatchGroupMatrix> d = extract_groups(x, grouping);
    parallel_for(d.size(), [&](std::size_t i) { d[i] = shrink_group(d[i] + u_d[i], cfg.shrink); });

    const MultiCoilImage z = z_update(x, u_z, delta_inv, b1);

    std::vector<PatchGroupMatrix> d_minus(d.size());
    parallel_for(d.size(), [&](std::size_t i) { d_minus[i] = d[i] - u_d[i]; });
    const Placement placed = place_groups_adjoint(d_minus, grouping);
    const MultiCoilImage b = b_update(placed, x, u_b, b2, b3);

    MultiCoilImage prior(y.coils(), y.nx(), y.ny());
    for (std::size_t i = 0; i < prior.size(); ++i) prior[i] = b1 * (z[i] - u_z[i]) + b3 * (b[i] - u_b[i]);
    x = solve_fourier_diagonal(y, mask, prior, b1 + b3);
    guard_finite(x, k + 1, "image estimate");

    u_z = multiplier_update(u_z, x, z, e1);
    const std::vector<PatchGroupMatrix> vx = extract_groups(x, grouping);
    parallel_for(u_d.size(), [&](std::size_t i) { u_d[i] += e2 * (vx[i] - d[i]); });
    u_b = multiplier_update(u_b, x, b, e3);

    RealImage x_new = sos_combine(x);
    const bool stop = rec.record(log, k + 1, x_new, x_old);
    x_old = std::move(x_new);
    if (stop) break;
  }
  return {std::move(x), std::move(x_old), std::move(log)};
}

ReconResult reconstruct(const KSpaceData& y, const SamplingMask& mask, const CalibKernel& kernel,
                        const ReconConfig& config, const Reference& reference) {
  return config.solver == SolverKind::ne ? solve_ne(y, mask, kernel, config, reference)
                                         : solve_admm(y, mask, kernel, config, reference);
}

} // namespace nlrspirit
