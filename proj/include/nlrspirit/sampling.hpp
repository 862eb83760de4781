#pragma once

#include "nlrspirit/tensor.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace nlrspirit {

enum class MaskPattern { poisson2d, uniform1d, gaussian1d, full };

std::string_view to_string(MaskPattern p);
MaskPattern parse_mask_pattern(std::string_view s);
/// 1D patterns subsample phase-encode columns only.
inline bool is_one_dimensional(MaskPattern p) {
  return p == MaskPattern::uniform1d || p == MaskPattern::gaussian1d;
}

struct MaskSpec {
  MaskPattern pattern = MaskPattern::poisson2d;
  double af_target = 5.0;
  /// Calibration block (rows, cols). 1D patterns use only acs_cols (full readout).
  std::size_t acs_rows = 24;
  std::size_t acs_cols = 24;
  std::uint64_t seed = 0;
  /// uniform1d only: keep exactly every step-th column instead of fitting af_target.
  std::optional<std::size_t> step;
  /// gaussian1d only: density std as a fraction of ny.
  double gaussian_width = 0.2;
};

/// Mask plus the generator diagnostics that tests and the CLI report.
struct MaskResult {
  SamplingMask mask;
  /// poisson2d: minimum allowed distance between non-ACS samples.
  double poisson_radius = 0.0;
};

/// Thrown when the ACS block alone exceeds the sample budget, or the pattern cannot
/// reach the target acceleration on this grid.
class InfeasibleMask : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Deterministic given spec.seed. Realized AF lands within 5% of af_target
/// (except uniform1d with an explicit step, which keeps exactly that lattice).
MaskResult make_mask(const MaskSpec& spec, std::size_t nx, std::size_t ny);

/// Centered ACS block of `size` entries along an axis of length n.
IndexRange centered_range(std::size_t n, std::size_t size);

struct PhantomSpec {
  std::size_t nx = 64;
  std::size_t ny = 64;
  std::size_t n_coils = 4;
  /// Std of the complex Gaussian noise (real and imaginary parts each get sigma/sqrt(2)).
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Peak value of the magnitude reference, before edge smoothing.
  double amplitude = 2000.0;
  /// Std in pixels of a Gaussian blur applied to the ellipse edges (0 keeps them sharp).
  /// Applied as a k-space apodization, so the reference stays band-limited.
  double edge_blur = 2.0;
};

struct Phantom {
  MultiCoilImage coils;
  RealImage reference;
  /// Pixels covered by the outer ellipse (the object ROI).
  BinaryImage support;
  /// Complex sensitivity maps; SOS equals 1 at every pixel.
  MultiCoilImage sensitivities;
};

/// Modified Shepp-Logan magnitude on [-1, 1]^2 sampled at pixel centers, scaled by
/// amplitude. No coils, no noise.
RealImage shepp_logan(std::size_t nx, std::size_t ny, double amplitude);

/// Gaussian blur of std `sigma` pixels done as a centered-k-space apodization, with
/// negative ringing clamped to zero.
RealImage smooth_edges(const RealImage& img, double sigma);

/// Smooth complex receive profiles normalized so that sum_c |s_c|^2 = 1 everywhere.
/// A single coil gets s = 1 exactly.
MultiCoilImage coil_sensitivities(std::size_t n_coils, std::size_t nx, std::size_t ny);

Phantom make_phantom(const PhantomSpec& spec);

} // namespace nlrspirit
