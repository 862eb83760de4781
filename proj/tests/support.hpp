#pragma once

#include "nlrspirit/calibration.hpp"
#include "nlrspirit/patches.hpp"
#include "nlrspirit/tensor.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

namespace testing {

using nlrspirit::cx;

inline cx random_cx(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  const double re = g(rng);
  const double im = g(rng);
  return {re, im};
}

inline nlrspirit::ComplexImage random_image(std::mt19937_64& rng, std::size_t nx, std::size_t ny) {
  nlrspirit::ComplexImage a(nx, ny);
  for (auto& v : a.values()) v = random_cx(rng);
  return a;
}

template <class Stack>
Stack random_stack(std::mt19937_64& rng, std::size_t c, std::size_t nx, std::size_t ny, double scale = 1.0) {
  Stack s(c, nx, ny);
  for (auto& v : s.values()) v = random_cx(rng, scale);
  return s;
}

inline nlrspirit::SamplingMask random_mask(std::mt19937_64& rng, std::size_t nx, std::size_t ny, double keep = 0.4) {
  std::bernoulli_distribution b(keep);
  nlrspirit::BinaryImage k(nx, ny, 0);
  for (auto& v : k.values()) v = b(rng) ? 1 : 0;
  return nlrspirit::SamplingMask(std::move(k), {0, 0}, {0, 0});
}

inline nlrspirit::PatchGroupMatrix random_matrix(std::mt19937_64& rng, long rows, long cols, double scale = 1.0) {
  nlrspirit::PatchGroupMatrix m(rows, cols);
  for (long i = 0; i < rows; ++i)
    for (long j = 0; j < cols; ++j) m(i, j) = random_cx(rng, scale);
  return m;
}

// O(N^2) centered unitary DFT, straight from the definition. sign -1 forward, +1 inverse.
inline nlrspirit::ComplexImage dft_oracle(const nlrspirit::ComplexImage& a, int sign) {
  const std::size_t nx = a.nx(), ny = a.ny();
  const double cx0 = static_cast<double>(nx / 2), cy0 = static_cast<double>(ny / 2);
  nlrspirit::ComplexImage out(nx, ny);
  for (std::size_t kx = 0; kx < nx; ++kx)
    for (std::size_t ky = 0; ky < ny; ++ky) {
      cx acc{};
      for (std::size_t x = 0; x < nx; ++x)
        for (std::size_t y = 0; y < ny; ++y) {
          const double ph = (static_cast<double>(kx) - cx0) * (static_cast<double>(x) - cx0) / static_cast<double>(nx) +
                            (static_cast<double>(ky) - cy0) * (static_cast<double>(y) - cy0) / static_cast<double>(ny);
          acc += a(x, y) * std::polar(1.0, sign * 2.0 * std::numbers::pi * ph);
        }
      out(kx, ky) = acc / std::sqrt(static_cast<double>(nx * ny));
    }
  return out;
}

inline double max_abs_diff(const nlrspirit::ComplexImage& a, const nlrspirit::ComplexImage& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <class D>
double rel_diff(const nlrspirit::CoilStack<D>& a, const nlrspirit::CoilStack<D>& b) {
  return nlrspirit::norm(a - b) / std::max(nlrspirit::norm(b), 1e-300);
}

// Random kernel with the self-tap zeroed, scaled so the taps stay modest.
inline nlrspirit::CalibKernel random_kernel(std::mt19937_64& rng, std::size_t ks, std::size_t coils, double scale = 0.1) {
  nlrspirit::CalibKernel k(ks, coils);
  for (std::size_t ox = 0; ox < ks; ++ox)
    for (std::size_t oy = 0; oy < ks; ++oy)
      for (std::size_t s = 0; s < coils; ++s)
        for (std::size_t t = 0; t < coils; ++t)
          if (!(ox == ks / 2 && oy == ks / 2 && s == t)) k(ox, oy, s, t) = random_cx(rng, scale);
  return k;
}

// Cyclic neighborhood sum written out directly: out_t(p) = sum w(o, s, t) y_s(p + o).
inline nlrspirit::KSpaceData convolve_oracle(const nlrspirit::CalibKernel& k, const nlrspirit::KSpaceData& y) {
  const long nx = long(y.nx()), ny = long(y.ny()), h = long(k.half());
  nlrspirit::KSpaceData out(y.coils(), y.nx(), y.ny());
  for (std::size_t t = 0; t < y.coils(); ++t)
    for (long px = 0; px < nx; ++px)
      for (long py = 0; py < ny; ++py) {
        cx acc{};
        for (long dx = -h; dx <= h; ++dx)
          for (long dy = -h; dy <= h; ++dy)
            for (std::size_t s = 0; s < y.coils(); ++s)
              acc += k(std::size_t(dx + h), std::size_t(dy + h), s, t) *
                     y(s, std::size_t(((px + dx) % nx + nx) % nx), std::size_t(((py + dy) % ny + ny) % ny));
        out(t, std::size_t(px), std::size_t(py)) = acc;
      }
  return out;
}

// Coils are cyclic 3x3 filterings of one random k-space, so cross-coil relations
// h_a * y_b = h_b * y_a hold exactly everywhere and a 5x5 kernel can express them.
inline nlrspirit::KSpaceData self_consistent_kspace(std::mt19937_64& rng, std::size_t coils, std::size_t n) {
  nlrspirit::ComplexImage r = random_image(rng, n, n);
  nlrspirit::KSpaceData y(coils, n, n);
  for (std::size_t c = 0; c < coils; ++c) {
    cx f[3][3];
    for (auto& row : f)
      for (auto& v : row) v = random_cx(rng);
    for (std::size_t px = 0; px < n; ++px)
      for (std::size_t py = 0; py < n; ++py) {
        cx acc{};
        for (int dx = -1; dx <= 1; ++dx)
          for (int dy = -1; dy <= 1; ++dy)
            acc += f[dx + 1][dy + 1] * r((px + n - dx) % n, (py + n - dy) % n);
        y(c, px, py) = acc;
      }
  }
  return y;
}

// Plain conjugate gradients on (A^H A + w I) x = b, the oracle for the closed form.
inline nlrspirit::MultiCoilImage cg_oracle(const nlrspirit::SamplingMask& mask, double w, const nlrspirit::MultiCoilImage& b) {
  auto op = [&](const nlrspirit::MultiCoilImage& v) {
    nlrspirit::MultiCoilImage out = nlrspirit::apply_encoding_adjoint(nlrspirit::apply_encoding(v, mask), mask);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * v[i];
    return out;
  };
  nlrspirit::MultiCoilImage x(b.coils(), b.nx(), b.ny());
  nlrspirit::MultiCoilImage r = b, p = b;
  double rr = nlrspirit::squared_norm(r);
  const double stop = 1e-30 * nlrspirit::squared_norm(b);
  for (int it = 0; it < 500 && rr > stop; ++it) {
    const nlrspirit::MultiCoilImage ap = op(p);
    const double alpha = rr / nlrspirit::inner(p, ap).real();
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    const double rr_new = nlrspirit::squared_norm(r);
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + (rr_new / rr) * p[i];
    rr = rr_new;
  }
  return x;
}

// Fresh scratch directory per test, removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() / ("nlrspirit_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

} // namespace testing
