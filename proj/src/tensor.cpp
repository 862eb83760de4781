#include "nlrspirit/tensor.hpp"

#include "nlrspirit/parallel.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <tuple>

namespace nlrspirit {

SamplingMask::SamplingMask(BinaryImage keep, IndexRange acs_rows, IndexRange acs_cols)
    : keep_(std::move(keep)), acs_rows_(acs_rows), acs_cols_(acs_cols) {
  if (keep_.empty()) throw ShapeError("sampling mask is empty");
  if (acs_rows_.begin > acs_rows_.end || acs_rows_.end > keep_.nx() || acs_cols_.begin > acs_cols_.end ||
      acs_cols_.end > keep_.ny())
    throw ShapeError("ACS region leaves the sampling grid");
  for (auto& v : keep_.storage()) v = v ? 1 : 0;
  for (std::size_t x = acs_rows_.begin; x < acs_rows_.end; ++x)
    for (std::size_t y = acs_cols_.begin; y < acs_cols_.end; ++y)
      if (!keep_(x, y)) throw std::invalid_argument("ACS region is not fully sampled");
  for (auto v : keep_.storage()) count_ += v;
}

SamplingMask SamplingMask::full(std::size_t nx, std::size_t ny) {
  return SamplingMask(BinaryImage(nx, ny, 1), {0, nx}, {0, ny});
}

double SamplingMask::acceleration() const {
  if (count_ == 0) throw std::domain_error("mask keeps no samples");
  return static_cast<double>(keep_.size()) / static_cast<double>(count_);
}

std::pair<IndexRange, IndexRange> detect_centered_acs(const BinaryImage& keep) {
  const std::size_t nx = keep.nx(), ny = keep.ny();
  IndexRange rows{nx / 2, nx / 2}, cols{ny / 2, ny / 2};
  auto block_full = [&](IndexRange r, IndexRange c) {
    for (std::size_t x = r.begin; x < r.end; ++x)
      for (std::size_t y = c.begin; y < c.end; ++y)
        if (!keep(x, y)) return false;
    return true;
  };
  if (!keep(nx / 2, ny / 2)) return {rows, cols};
  rows = {nx / 2, nx / 2 + 1};
  cols = {ny / 2, ny / 2 + 1};
  // Grow symmetrically (lower side first, matching the nx/2 center of even grids).
  bool grew = true;
  while (grew) {
    grew = false;
    for (int axis = 0; axis < 2; ++axis) {
      IndexRange& r = axis == 0 ? rows : cols;
      const std::size_t n = axis == 0 ? nx : ny;
      for (int side = 0; side < 2; ++side) {
        IndexRange cand = r;
        if (side == 0) {
          if (cand.begin == 0) continue;
          --cand.begin;
        } else {
          if (cand.end == n) continue;
          ++cand.end;
        }
        if (axis == 0 ? block_full(cand, cols) : block_full(rows, cand)) {
          r = cand;
          grew = true;
        }
      }
    }
  }
  return {rows, cols};
}

namespace {

class PlanCache {
public:
  fftw_plan get(std::size_t nx, std::size_t ny, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_tuple(nx, ny, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    std::vector<cx> scratch(nx * ny);
    auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(nx), static_cast<int>(ny), buf, buf, sign,
                                   FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!p) throw std::runtime_error("FFTW plan creation failed");
    plans_.emplace(key, p);
    return p;
  }
  ~PlanCache() {
    for (auto& [key, p] : plans_) fftw_destroy_plan(p);
  }

private:
  std::mutex mutex_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

// shift = n/2 moves index 0 to the center (fftshift); shift = n - n/2 undoes it.
void circshift(std::span<cx> plane, std::size_t nx, std::size_t ny, std::size_t sx, std::size_t sy,
               std::vector<cx>& scratch) {
  scratch.assign(plane.begin(), plane.end());
  for (std::size_t x = 0; x < nx; ++x) {
    const std::size_t tx = (x + sx) % nx;
    for (std::size_t y = 0; y < ny; ++y) plane[tx * ny + (y + sy) % ny] = scratch[x * ny + y];
  }
}

void centered_transform(std::span<cx> plane, std::size_t nx, std::size_t ny, int sign) {
  if (plane.size() != nx * ny || plane.empty()) throw ShapeError("FFT plane size mismatch");
  std::vector<cx> scratch;
  circshift(plane, nx, ny, nx - nx / 2, ny - ny / 2, scratch); // ifftshift
  fftw_plan p = plan_cache().get(nx, ny, sign);
  auto* buf = reinterpret_cast<fftw_complex*>(plane.data());
  fftw_execute_dft(p, buf, buf);
  circshift(plane, nx, ny, nx / 2, ny / 2, scratch); // fftshift
  const double scale = 1.0 / std::sqrt(static_cast<double>(nx * ny));
  for (auto& v : plane) v *= scale;
}

} // namespace

void fft2_centered_inplace(std::span<cx> plane, std::size_t nx, std::size_t ny) {
  centered_transform(plane, nx, ny, FFTW_FORWARD);
}

void ifft2_centered_inplace(std::span<cx> plane, std::size_t nx, std::size_t ny) {
  centered_transform(plane, nx, ny, FFTW_BACKWARD);
}

ComplexImage fft2_centered(const ComplexImage& img) {
  if (img.empty()) throw ShapeError("fft2_centered: empty image");
  ComplexImage out = img;
  fft2_centered_inplace(out.values(), out.nx(), out.ny());
  return out;
}

ComplexImage ifft2_centered(const ComplexImage& img) {
  if (img.empty()) throw ShapeError("ifft2_centered: empty image");
  ComplexImage out = img;
  ifft2_centered_inplace(out.values(), out.nx(), out.ny());
  return out;
}

KSpaceData fft2_coils(const MultiCoilImage& x) {
  auto y = KSpaceData::reinterpret(x);
  parallel_for(y.coils(), [&](std::size_t c) { fft2_centered_inplace(y.coil(c), y.nx(), y.ny()); });
  return y;
}

MultiCoilImage ifft2_coils(const KSpaceData& y) {
  auto x = MultiCoilImage::reinterpret(y);
  parallel_for(x.coils(), [&](std::size_t c) { ifft2_centered_inplace(x.coil(c), x.nx(), x.ny()); });
  return x;
}

KSpaceData apply_mask(KSpaceData y, const SamplingMask& mask) {
  if (y.nx() != mask.nx() || y.ny() != mask.ny()) throw ShapeError("k-space and mask shapes differ");
  for (std::size_t c = 0; c < y.coils(); ++c) {
    auto plane = y.coil(c);
    for (std::size_t i = 0; i < plane.size(); ++i)
      if (!mask.kept(i)) plane[i] = cx{};
  }
  return y;
}

KSpaceData apply_encoding(const MultiCoilImage& x, const SamplingMask& mask) {
  if (x.nx() != mask.nx() || x.ny() != mask.ny()) throw ShapeError("image and mask shapes differ");
  return apply_mask(fft2_coils(x), mask);
}

MultiCoilImage apply_encoding_adjoint(const KSpaceData& y, const SamplingMask& mask) {
  return ifft2_coils(apply_mask(y, mask));
}

RealImage sos_combine(const MultiCoilImage& x) {
  if (x.empty()) throw ShapeError("sos_combine: empty coil stack");
  RealImage out(x.nx(), x.ny());
  for (std::size_t i = 0; i < x.pixels(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < x.coils(); ++c) s += std::norm(x.coil(c)[i]);
    out[i] = std::sqrt(s);
  }
  return out;
}

double norm(const RealImage& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

} // namespace nlrspirit
