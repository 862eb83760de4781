#pragma once

#include "nlrspirit/tensor.hpp"

#include <Eigen/Core>

namespace nlrspirit {

/// `standard` uses c2 in the variance factor of the denominator, so ssim(x, x) = 1.
/// `as_published` repeats c1 there; it then exceeds 1 for identical inputs.
enum class SsimForm { standard, as_published };

struct MetricReport {
  double snr_db = 0.0;
  double hfen = 0.0;
  double ssim = 0.0;
};

/// 10 log10(Var(ref) / MSE(ref, rec)) over the ROI (nullptr = whole image).
/// Returns +infinity when rec equals ref exactly.
double snr_db(const RealImage& ref, const RealImage& rec, const BinaryImage* roi = nullptr);

/// Laplacian-of-Gaussian taps, zero-sum, size x size with the given std.
Eigen::MatrixXd log_kernel(std::size_t size = 15, double sigma = 1.5);

/// Same-size correlation with the LoG kernel, mirrored (edge-repeating) borders.
RealImage log_filter(const RealImage& img, std::size_t size = 15, double sigma = 1.5);

/// ||LoG(rec) - LoG(ref)|| / ||LoG(ref)|| with the norms taken over the ROI.
double hfen(const RealImage& ref, const RealImage& rec, const BinaryImage* roi = nullptr);

/// Single-window SSIM from global ROI statistics, both images divided by the ROI
/// maximum of ref first. c1 = 0.01, c2 = 0.03.
double ssim(const RealImage& ref, const RealImage& rec, const BinaryImage* roi = nullptr,
            SsimForm form = SsimForm::standard);

MetricReport evaluate(const RealImage& ref, const RealImage& rec, const BinaryImage* roi = nullptr,
                      SsimForm form = SsimForm::standard);

} // namespace nlrspirit
