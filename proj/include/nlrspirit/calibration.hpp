#pragma once

#include "nlrspirit/tensor.hpp"

#include <optional>
#include <vector>

namespace nlrspirit {

/// SPIRiT k-space kernel. Entry (ox, oy, src, tgt) weighs source coil `src` at offset
/// (ox - h, oy - h) when predicting target coil `tgt`, h = ks / 2:
///
///   y_tgt(p) ~ sum_{o, src} w(o, src, tgt) * y_src(p + o)
///
/// The center tap of a coil onto itself is always zero.
class CalibKernel {
public:
  CalibKernel() = default;
  CalibKernel(std::size_t ks, std::size_t coils);
  CalibKernel(std::size_t ks, std::size_t coils, std::vector<cx> weights);

  std::size_t size() const { return ks_; }
  std::size_t half() const { return ks_ / 2; }
  std::size_t coils() const { return coils_; }

  cx& operator()(std::size_t ox, std::size_t oy, std::size_t src, std::size_t tgt) {
    return weights_[index(ox, oy, src, tgt)];
  }
  cx operator()(std::size_t ox, std::size_t oy, std::size_t src, std::size_t tgt) const {
    return weights_[index(ox, oy, src, tgt)];
  }
  /// Flat storage in (ox, oy, src, tgt) order, tgt fastest.
  const std::vector<cx>& weights() const { return weights_; }

  friend bool operator==(const CalibKernel&, const CalibKernel&) = default;

private:
  std::size_t index(std::size_t ox, std::size_t oy, std::size_t src, std::size_t tgt) const {
    return ((ox * ks_ + oy) * coils_ + src) * coils_ + tgt;
  }
  void validate() const;

  std::size_t ks_ = 0;
  std::size_t coils_ = 0;
  std::vector<cx> weights_;
};

struct CalibrationReport {
  CalibKernel kernel;
  /// ||M w - b|| / ||b|| per target coil.
  std::vector<double> relative_residual;
  /// Ridge actually used per target coil.
  std::vector<double> lambda;
  /// Fitting equations and unknowns per target coil.
  std::size_t equations = 0;
  std::size_t unknowns = 0;
  /// Smallest/largest eigenvalue of M^H M (no ridge) per target coil.
  std::vector<double> eigen_ratio;
  /// True when some target coil's unregularized system is numerically rank deficient
  /// (eigen_ratio < 1e-12): the fit relies on the ridge and quality is expected to drop.
  bool ill_conditioned = false;
};

/// Thrown when the ACS block cannot supply as many equations as kernel unknowns.
class UnderdeterminedCalibration : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Regularized least-squares kernel fit over the ACS block of `kspace`. Every ACS point
/// whose ks x ks neighborhood lies inside the block contributes one equation per
/// target coil. `lambda` defaults to 1e-6 * ||M||_F^2 / rows.
CalibrationReport calibrate(const KSpaceData& kspace, IndexRange acs_rows, IndexRange acs_cols, std::size_t ks,
                            std::optional<double> lambda = std::nullopt);

/// Cyclic k-space application of the kernel, the reference the image-domain
/// operator is checked against.
KSpaceData apply_kernel_kspace(const CalibKernel& kernel, const KSpaceData& y);

/// A C x C complex matrix per pixel, row-major (row = output coil).
class PixelBlocks {
public:
  PixelBlocks() = default;
  PixelBlocks(std::size_t coils, std::size_t nx, std::size_t ny);

  std::size_t coils() const { return coils_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t pixels() const { return nx_ * ny_; }

  std::span<cx> block(std::size_t pixel) {
    return std::span<cx>(data_).subspan(pixel * coils_ * coils_, coils_ * coils_);
  }
  std::span<const cx> block(std::size_t pixel) const {
    return std::span<const cx>(data_).subspan(pixel * coils_ * coils_, coils_ * coils_);
  }
  cx& operator()(std::size_t pixel, std::size_t row, std::size_t col) {
    return data_[(pixel * coils_ + row) * coils_ + col];
  }
  cx operator()(std::size_t pixel, std::size_t row, std::size_t col) const {
    return data_[(pixel * coils_ + row) * coils_ + col];
  }

private:
  std::size_t coils_ = 0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<cx> data_;
};

/// Image-domain realization G of the kernel: applying G pixelwise equals transform,
/// cyclic kernel application in k-space, inverse transform.
PixelBlocks kernel_to_image_operator(const CalibKernel& kernel, std::size_t nx, std::size_t ny);

/// out(p) = blocks(p) * x(p) across coils.
MultiCoilImage apply_blocks(const PixelBlocks& op, const MultiCoilImage& x);

/// Per pixel, inverse of mu1 (G_p - I)^H (G_p - I) + beta I. Requires beta > 0.
PixelBlocks build_delta_inverse(const PixelBlocks& g, double mu1, double beta);

/// Per pixel mu1 (G_p - I)^H (G_p - I) + beta I, used to check the inverse.
PixelBlocks build_delta(const PixelBlocks& g, double mu1, double beta);

} // namespace nlrspirit
