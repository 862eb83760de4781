#include "nlrspirit/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace nlrspirit {

namespace {

void check_pair(const RealImage& ref, const RealImage& rec, const BinaryImage* roi) {
  if (!ref.same_shape(rec)) throw ShapeError("metric inputs differ in shape");
  if (roi && !roi->same_shape(ref)) throw ShapeError("ROI shape differs from the images");
}

bool in_roi(const BinaryImage* roi, std::size_t i) { return !roi || (*roi)[i] != 0; }

std::size_t roi_count(const RealImage& ref, const BinaryImage* roi) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) n += in_roi(roi, i);
  if (n == 0) throw std::domain_error("ROI is empty");
  return n;
}

// MATLAB-style 'symmetric' padding: index -1 maps to 0, n maps to n - 1.
std::size_t mirror(long i, std::size_t n) {
  const long period = 2 * static_cast<long>(n);
  long k = i % period;
  if (k < 0) k += period;
  return static_cast<std::size_t>(k < static_cast<long>(n) ? k : period - 1 - k);
}

} // namespace

double snr_db(const RealImage& ref, const RealImage& rec, const BinaryImage* roi) {
  check_pair(ref, rec, roi);
  const double n = static_cast<double>(roi_count(ref, roi));
  double mean = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (in_roi(roi, i)) mean += ref[i];
  mean /= n;
  double var = 0.0, mse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!in_roi(roi, i)) continue;
    var += (ref[i] - mean) * (ref[i] - mean);
    mse += (ref[i] - rec[i]) * (ref[i] - rec[i]);
  }
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10((var / n) / (mse / n));
}

Eigen::MatrixXd log_kernel(std::size_t size, double sigma) {
  if (size == 0 || !(sigma > 0.0)) throw std::invalid_argument("LoG kernel needs positive size and sigma");
  const double half = (static_cast<double>(size) - 1.0) / 2.0;
  const double s2 = sigma * sigma;
  Eigen::MatrixXd g(size, size), r2(size, size);
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = 0; j < size; ++j) {
      const double x = static_cast<double>(i) - half, y = static_cast<double>(j) - half;
      r2(i, j) = x * x + y * y;
      g(i, j) = std::exp(-r2(i, j) / (2.0 * s2));
    }
  g /= g.sum();
  Eigen::MatrixXd h = g.cwiseProduct((r2.array() - 2.0 * s2).matrix()) / (s2 * s2);
  h.array() -= h.sum() / static_cast<double>(h.size());
  return h;
}

RealImage log_filter(const RealImage& img, std::size_t size, double sigma) {
  const Eigen::MatrixXd h = log_kernel(size, sigma);
  const long half = static_cast<long>(size / 2);
  RealImage out(img.nx(), img.ny());
  for (std::size_t x = 0; x < img.nx(); ++x)
    for (std::size_t y = 0; y < img.ny(); ++y) {
      double acc = 0.0;
      for (long i = 0; i < static_cast<long>(size); ++i) {
        const std::size_t sx = mirror(static_cast<long>(x) + i - half, img.nx());
        for (long j = 0; j < static_cast<long>(size); ++j)
          acc += h(i, j) * img(sx, mirror(static_cast<long>(y) + j - half, img.ny()));
      }
      out(x, y) = acc;
    }
  return out;
}

double hfen(const RealImage& ref, const RealImage& rec, const BinaryImage* roi) {
  check_pair(ref, rec, roi);
  roi_count(ref, roi);
  const RealImage fr = log_filter(ref), fx = log_filter(rec);
  double num = 0.0, den = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!in_roi(roi, i)) continue;
    num += (fx[i] - fr[i]) * (fx[i] - fr[i]);
    den += fr[i] * fr[i];
    energy += ref[i] * ref[i];
  }
  // A flat reference filters to rounding noise, not an exact zero.
  if (den <= 1e-24 * energy || den == 0.0) throw std::domain_error("HFEN undefined: filtered reference has zero norm");
  return std::sqrt(num / den);
}

double ssim(const RealImage& ref, const RealImage& rec, const BinaryImage* roi, SsimForm form) {
  check_pair(ref, rec, roi);
  const double n = static_cast<double>(roi_count(ref, roi));
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (in_roi(roi, i)) peak = std::max(peak, ref[i]);
  const double scale = peak > 0.0 ? 1.0 / peak : 1.0;

  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (in_roi(roi, i)) {
      mx += ref[i] * scale;
      my += rec[i] * scale;
    }
  mx /= n;
  my /= n;
  double vx = 0.0, vy = 0.0, cxy = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (!in_roi(roi, i)) continue;
    const double a = ref[i] * scale - mx, b = rec[i] * scale - my;
    vx += a * a;
    vy += b * b;
    cxy += a * b;
  }
  vx /= n;
  vy /= n;
  cxy /= n;
  constexpr double c1 = 0.01, c2 = 0.03;
  const double c_var = form == SsimForm::as_published ? c1 : c2;
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c_var));
}

MetricReport evaluate(const RealImage& ref, const RealImage& rec, const BinaryImage* roi, SsimForm form) {
  return {snr_db(ref, rec, roi), hfen(ref, rec, roi), ssim(ref, rec, roi, form)};
}

} // namespace nlrspirit
