#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace nlrspirit {

using cx = std::complex<double>;

/// Raised when operands disagree on grid shape or coil count.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Half-open index range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
  friend bool operator==(const IndexRange&, const IndexRange&) = default;
};

/// Row-major 2D grid of values. Row index x runs over nx, column index y over ny;
/// element (x, y) lives at x * ny + y.
template <class T>
class Grid2 {
public:
  using value_type = T;

  Grid2() = default;
  Grid2(std::size_t nx, std::size_t ny, T fill = T{}) : nx_(nx), ny_(ny), data_(checked_size(nx, ny), fill) {}
  Grid2(std::size_t nx, std::size_t ny, std::vector<T> data) : nx_(nx), ny_(ny), data_(std::move(data)) {
    if (data_.size() != checked_size(nx, ny))
      throw ShapeError("grid data holds " + std::to_string(data_.size()) + " entries, expected " +
                       std::to_string(nx * ny));
  }

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(std::size_t x, std::size_t y) { return data_[x * ny_ + y]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data_[x * ny_ + y]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(std::size_t nx, std::size_t ny) const { return nx_ == nx && ny_ == ny; }
  template <class U>
  bool same_shape(const Grid2<U>& other) const {
    return nx_ == other.nx() && ny_ == other.ny();
  }

  friend bool operator==(const Grid2&, const Grid2&) = default;

private:
  static std::size_t checked_size(std::size_t nx, std::size_t ny) {
    if (nx == 0 || ny == 0) throw ShapeError("grid extents must be positive");
    return nx * ny;
  }

  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<T> data_;
};

using ComplexImage = Grid2<cx>;
using RealImage = Grid2<double>;
using BinaryImage = Grid2<std::uint8_t>;

struct ImageDomain {};
struct KSpaceDomain {};

/// C complex planes of identical shape stored contiguously, coil-major then row-major.
/// The domain tag keeps image-space and k-space stacks from being mixed up.
template <class Domain>
class CoilStack {
public:
  CoilStack() = default;
  CoilStack(std::size_t coils, std::size_t nx, std::size_t ny)
      : coils_(coils), nx_(nx), ny_(ny), data_(checked_size(coils, nx, ny)) {}
  CoilStack(std::size_t coils, std::size_t nx, std::size_t ny, std::vector<cx> data)
      : coils_(coils), nx_(nx), ny_(ny), data_(std::move(data)) {
    if (data_.size() != checked_size(coils, nx, ny)) throw ShapeError("coil stack data size mismatch");
  }
  explicit CoilStack(const std::vector<ComplexImage>& planes) {
    if (planes.empty()) throw ShapeError("coil stack needs at least one coil");
    coils_ = planes.size();
    nx_ = planes.front().nx();
    ny_ = planes.front().ny();
    data_.reserve(checked_size(coils_, nx_, ny_));
    for (const auto& p : planes) {
      if (!p.same_shape(nx_, ny_)) throw ShapeError("coil planes differ in shape");
      data_.insert(data_.end(), p.storage().begin(), p.storage().end());
    }
  }

  /// Same values, other domain. Used where a stack changes meaning without changing
  /// its numbers (container I/O, operator internals).
  template <class Other>
  static CoilStack reinterpret(CoilStack<Other> other) {
    return CoilStack(other.coils(), other.nx(), other.ny(), std::move(other.storage()));
  }

  std::size_t coils() const { return coils_; }
  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  std::size_t pixels() const { return nx_ * ny_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<cx> coil(std::size_t c) { return std::span<cx>(data_).subspan(c * pixels(), pixels()); }
  std::span<const cx> coil(std::size_t c) const {
    return std::span<const cx>(data_).subspan(c * pixels(), pixels());
  }
  ComplexImage plane(std::size_t c) const {
    auto s = coil(c);
    return ComplexImage(nx_, ny_, std::vector<cx>(s.begin(), s.end()));
  }

  cx& operator()(std::size_t c, std::size_t x, std::size_t y) { return data_[(c * nx_ + x) * ny_ + y]; }
  const cx& operator()(std::size_t c, std::size_t x, std::size_t y) const { return data_[(c * nx_ + x) * ny_ + y]; }
  cx& operator[](std::size_t i) { return data_[i]; }
  const cx& operator[](std::size_t i) const { return data_[i]; }

  std::span<cx> values() { return data_; }
  std::span<const cx> values() const { return data_; }
  std::vector<cx>& storage() { return data_; }
  const std::vector<cx>& storage() const { return data_; }

  template <class Other>
  bool same_shape(const CoilStack<Other>& o) const {
    return coils_ == o.coils() && nx_ == o.nx() && ny_ == o.ny();
  }

  CoilStack& operator+=(const CoilStack& o) {
    require_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  CoilStack& operator-=(const CoilStack& o) {
    require_same(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  CoilStack& operator*=(cx s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend CoilStack operator+(CoilStack a, const CoilStack& b) { return a += b; }
  friend CoilStack operator-(CoilStack a, const CoilStack& b) { return a -= b; }
  friend CoilStack operator*(cx s, CoilStack a) { return a *= s; }
  friend CoilStack operator*(double s, CoilStack a) { return a *= cx(s); }

  friend bool operator==(const CoilStack&, const CoilStack&) = default;

private:
  static std::size_t checked_size(std::size_t coils, std::size_t nx, std::size_t ny) {
    if (coils == 0) throw ShapeError("coil count must be positive");
    if (nx == 0 || ny == 0) throw ShapeError("grid extents must be positive");
    return coils * nx * ny;
  }
  void require_same(const CoilStack& o) const {
    if (!same_shape(o)) throw ShapeError("coil stack shape mismatch");
  }

  std::size_t coils_ = 0;
  std::size_t nx_ = 0;
  std::size_t ny_ = 0;
  std::vector<cx> data_;
};

using MultiCoilImage = CoilStack<ImageDomain>;
using KSpaceData = CoilStack<KSpaceDomain>;

/// Binary k-space selection with a fully sampled calibration block.
class SamplingMask {
public:
  SamplingMask() = default;
  /// Throws if any ACS location is not kept or the ACS ranges leave the grid.
  SamplingMask(BinaryImage keep, IndexRange acs_rows, IndexRange acs_cols);

  /// Every entry kept; ACS covers the whole grid.
  static SamplingMask full(std::size_t nx, std::size_t ny);

  std::size_t nx() const { return keep_.nx(); }
  std::size_t ny() const { return keep_.ny(); }
  const BinaryImage& keep() const { return keep_; }
  bool kept(std::size_t x, std::size_t y) const { return keep_(x, y) != 0; }
  bool kept(std::size_t i) const { return keep_[i] != 0; }
  const IndexRange& acs_rows() const { return acs_rows_; }
  const IndexRange& acs_cols() const { return acs_cols_; }

  /// Number of kept samples M.
  std::size_t count() const { return count_; }
  /// Nx*Ny / M.
  double acceleration() const;

private:
  BinaryImage keep_;
  IndexRange acs_rows_;
  IndexRange acs_cols_;
  std::size_t count_ = 0;
};

/// Largest fully sampled rectangle centered on the k-space center, grown one
/// row/column pair at a time. Used to recover the ACS block of a stored mask.
std::pair<IndexRange, IndexRange> detect_centered_acs(const BinaryImage& keep);

// Unitary 2D DFT with the zero frequency at index (nx/2, ny/2).
ComplexImage fft2_centered(const ComplexImage& img);
ComplexImage ifft2_centered(const ComplexImage& img);

/// In-place variants on a row-major nx*ny plane.
void fft2_centered_inplace(std::span<cx> plane, std::size_t nx, std::size_t ny);
void ifft2_centered_inplace(std::span<cx> plane, std::size_t nx, std::size_t ny);

KSpaceData fft2_coils(const MultiCoilImage& x);
MultiCoilImage ifft2_coils(const KSpaceData& y);

/// A = P F: per-coil transform, then zero the entries the mask drops.
KSpaceData apply_encoding(const MultiCoilImage& x, const SamplingMask& mask);
/// A^H = F^H P^H.
MultiCoilImage apply_encoding_adjoint(const KSpaceData& y, const SamplingMask& mask);
/// Zero the entries the mask drops.
KSpaceData apply_mask(KSpaceData y, const SamplingMask& mask);

/// Pixelwise sqrt(sum_c |X_c|^2).
RealImage sos_combine(const MultiCoilImage& x);

template <class D>
double squared_norm(const CoilStack<D>& a) {
  double s = 0.0;
  for (const auto& v : a.values()) s += std::norm(v);
  return s;
}

template <class D>
double norm(const CoilStack<D>& a) {
  return std::sqrt(squared_norm(a));
}

/// <a, b> = sum conj(a) * b.
template <class D>
cx inner(const CoilStack<D>& a, const CoilStack<D>& b) {
  if (!a.same_shape(b)) throw ShapeError("inner product shape mismatch");
  cx s{};
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

template <class D>
bool all_finite(const CoilStack<D>& a) {
  for (const auto& v : a.values())
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
  return true;
}

double norm(const RealImage& a);

} // namespace nlrspirit
