#include "nlrspirit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

namespace nlrspirit {

std::string_view to_string(MaskPattern p) {
  switch (p) {
  case MaskPattern::poisson2d: return "poisson2d";
  case MaskPattern::uniform1d: return "uniform1d";
  case MaskPattern::gaussian1d: return "gaussian1d";
  case MaskPattern::full: return "full";
  }
  return "unknown";
}

MaskPattern parse_mask_pattern(std::string_view s) {
  if (s == "poisson2d") return MaskPattern::poisson2d;
  if (s == "uniform1d") return MaskPattern::uniform1d;
  if (s == "gaussian1d") return MaskPattern::gaussian1d;
  if (s == "full") return MaskPattern::full;
  throw std::invalid_argument("unknown mask pattern '" + std::string(s) + "'");
}

IndexRange centered_range(std::size_t n, std::size_t size) {
  if (size > n) throw InfeasibleMask("ACS block of " + std::to_string(size) + " exceeds axis length " + std::to_string(n));
  const std::size_t begin = n / 2 - size / 2;
  return {begin, begin + size};
}

namespace {

constexpr double kAfTolerance = 0.05;

std::size_t target_count(std::size_t total, double af) {
  return static_cast<std::size_t>(std::llround(static_cast<double>(total) / af));
}

void check_realized(const SamplingMask& mask, double af_target) {
  const double af = mask.acceleration();
  if (std::abs(af - af_target) > kAfTolerance * af_target)
    throw InfeasibleMask("realized AF " + std::to_string(af) + " is not within 5% of target " +
                         std::to_string(af_target) + " on this grid");
}

// Random sequential adsorption over the shuffled candidate list: a candidate is
// accepted when every previously accepted point is at distance >= radius.
std::vector<std::size_t> saturate(const std::vector<std::size_t>& order, std::size_t nx, std::size_t ny,
                                  double radius, std::size_t stop_after) {
  BinaryImage taken(nx, ny, 0);
  const long reach = static_cast<long>(std::ceil(radius));
  const double r2 = radius * radius;
  std::vector<std::size_t> accepted;
  for (std::size_t idx : order) {
    const long x = static_cast<long>(idx / ny), y = static_cast<long>(idx % ny);
    bool ok = true;
    for (long dx = -reach; dx <= reach && ok; ++dx) {
      const long xx = x + dx;
      if (xx < 0 || xx >= static_cast<long>(nx)) continue;
      for (long dy = -reach; dy <= reach; ++dy) {
        const long yy = y + dy;
        if (yy < 0 || yy >= static_cast<long>(ny)) continue;
        if (taken(xx, yy) && static_cast<double>(dx * dx + dy * dy) < r2) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    taken(x, y) = 1;
    accepted.push_back(idx);
    if (accepted.size() >= stop_after) break;
  }
  return accepted;
}

MaskResult poisson_mask(const MaskSpec& spec, std::size_t nx, std::size_t ny) {
  const IndexRange rows = centered_range(nx, spec.acs_rows);
  const IndexRange cols = centered_range(ny, spec.acs_cols);
  const std::size_t total = nx * ny;
  const std::size_t wanted = target_count(total, spec.af_target);
  const std::size_t acs = rows.size() * cols.size();
  if (acs > wanted)
    throw InfeasibleMask("ACS block (" + std::to_string(acs) + " samples) exceeds the budget of " +
                         std::to_string(wanted) + " samples");
  const std::size_t needed = wanted - acs;

  std::vector<std::size_t> order;
  order.reserve(total - acs);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y)
      if (!(rows.contains(x) && cols.contains(y))) order.push_back(x * ny + y);
  if (needed > order.size()) throw InfeasibleMask("sample budget exceeds the grid");
  std::mt19937_64 rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto count_at = [&](double r) { return saturate(order, nx, ny, r, order.size()).size(); };
  // Largest radius whose saturated packing still holds `needed` points.
  double lo = 1.0, hi = std::max<double>(2.0, std::hypot(double(nx), double(ny)));
  if (count_at(lo) < needed) throw InfeasibleMask("grid cannot hold the requested samples");
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_at(mid) >= needed)
      lo = mid;
    else
      hi = mid;
  }
  const auto picked = saturate(order, nx, ny, lo, needed);

  BinaryImage keep(nx, ny, 0);
  for (std::size_t x = rows.begin; x < rows.end; ++x)
    for (std::size_t y = cols.begin; y < cols.end; ++y) keep(x, y) = 1;
  for (std::size_t idx : picked) keep[idx] = 1;
  MaskResult out{SamplingMask(std::move(keep), rows, cols), lo};
  check_realized(out.mask, spec.af_target);
  return out;
}

SamplingMask columns_mask(const std::vector<std::uint8_t>& col_keep, std::size_t nx, std::size_t ny,
                          IndexRange cols) {
  BinaryImage keep(nx, ny, 0);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) keep(x, y) = col_keep[y];
  return SamplingMask(std::move(keep), {0, nx}, cols);
}

MaskResult uniform_mask(const MaskSpec& spec, std::size_t nx, std::size_t ny) {
  const IndexRange cols = centered_range(ny, spec.acs_cols);
  std::vector<std::uint8_t> col_keep(ny, 0);
  for (std::size_t y = cols.begin; y < cols.end; ++y) col_keep[y] = 1;

  if (spec.step) {
    if (*spec.step == 0) throw std::invalid_argument("uniform1d step must be positive");
    const std::size_t center = ny / 2;
    for (std::size_t y = 0; y < ny; ++y) {
      const std::size_t dist = y > center ? y - center : center - y;
      if (dist % *spec.step == 0) col_keep[y] = 1;
    }
    return {columns_mask(col_keep, nx, ny, cols), 0.0};
  }

  const std::size_t wanted = target_count(ny, spec.af_target);
  if (cols.size() > wanted)
    throw InfeasibleMask("ACS lines (" + std::to_string(cols.size()) + ") exceed the budget of " +
                         std::to_string(wanted) + " lines");
  std::vector<std::size_t> outside;
  for (std::size_t y = 0; y < ny; ++y)
    if (!cols.contains(y)) outside.push_back(y);
  const std::size_t needed = wanted - cols.size();
  for (std::size_t i = 0; i < needed; ++i) {
    const double pos = (static_cast<double>(i) + 0.5) * static_cast<double>(outside.size()) / static_cast<double>(needed);
    col_keep[outside[static_cast<std::size_t>(pos)]] = 1;
  }
  MaskResult out{columns_mask(col_keep, nx, ny, cols), 0.0};
  check_realized(out.mask, spec.af_target);
  return out;
}

MaskResult gaussian_mask(const MaskSpec& spec, std::size_t nx, std::size_t ny) {
  const IndexRange cols = centered_range(ny, spec.acs_cols);
  const std::size_t wanted = target_count(ny, spec.af_target);
  if (cols.size() > wanted)
    throw InfeasibleMask("ACS lines (" + std::to_string(cols.size()) + ") exceed the budget of " +
                         std::to_string(wanted) + " lines");
  if (spec.gaussian_width <= 0.0) throw std::invalid_argument("gaussian1d width must be positive");

  std::vector<std::uint8_t> col_keep(ny, 0);
  for (std::size_t y = cols.begin; y < cols.end; ++y) col_keep[y] = 1;
  const double center = static_cast<double>(ny / 2);
  const double sd = spec.gaussian_width * static_cast<double>(ny);
  std::vector<double> weight(ny, 0.0);
  for (std::size_t y = 0; y < ny; ++y) {
    const double d = static_cast<double>(y) - center;
    weight[y] = col_keep[y] ? 0.0 : std::exp(-0.5 * d * d / (sd * sd));
  }

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (std::size_t drawn = cols.size(); drawn < wanted; ++drawn) {
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    if (total <= 0.0) throw InfeasibleMask("no columns left to draw");
    double u = unif(rng) * total;
    std::size_t pick = 0;
    for (; pick + 1 < ny; ++pick) {
      if (weight[pick] <= 0.0) continue;
      if (u < weight[pick]) break;
      u -= weight[pick];
    }
    while (weight[pick] <= 0.0) --pick; // guard rounding at the tail
    col_keep[pick] = 1;
    weight[pick] = 0.0;
  }
  MaskResult out{columns_mask(col_keep, nx, ny, cols), 0.0};
  check_realized(out.mask, spec.af_target);
  return out;
}

} // namespace

MaskResult make_mask(const MaskSpec& spec, std::size_t nx, std::size_t ny) {
  if (nx == 0 || ny == 0) throw ShapeError("mask grid extents must be positive");
  if (!(spec.af_target >= 1.0)) throw std::invalid_argument("af_target must be >= 1");
  switch (spec.pattern) {
  case MaskPattern::full: return {SamplingMask::full(nx, ny), 0.0};
  case MaskPattern::poisson2d: return poisson_mask(spec, nx, ny);
  case MaskPattern::uniform1d: return uniform_mask(spec, nx, ny);
  case MaskPattern::gaussian1d: return gaussian_mask(spec, nx, ny);
  }
  throw std::invalid_argument("unknown mask pattern");
}

namespace {

struct Ellipse {
  double value, a, b, x0, y0, phi_deg;
};

// Modified Shepp-Logan (Toft) intensities.
constexpr Ellipse kEllipses[] = {
    {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
    {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
    {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
    {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
    {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
};

// Pixel-center coordinates on [-1, 1]; u runs along columns, v up the rows.
double coord_u(std::size_t y, std::size_t ny) { return (2.0 * static_cast<double>(y) + 1.0) / static_cast<double>(ny) - 1.0; }
double coord_v(std::size_t x, std::size_t nx) { return 1.0 - (2.0 * static_cast<double>(x) + 1.0) / static_cast<double>(nx); }

bool inside(const Ellipse& e, double u, double v) {
  const double phi = e.phi_deg * std::numbers::pi / 180.0;
  const double du = u - e.x0, dv = v - e.y0;
  const double ru = du * std::cos(phi) + dv * std::sin(phi);
  const double rv = -du * std::sin(phi) + dv * std::cos(phi);
  return (ru * ru) / (e.a * e.a) + (rv * rv) / (e.b * e.b) <= 1.0;
}

} // namespace

RealImage shepp_logan(std::size_t nx, std::size_t ny, double amplitude) {
  RealImage img(nx, ny, 0.0);
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      const double u = coord_u(y, ny), v = coord_v(x, nx);
      double s = 0.0;
      for (const auto& e : kEllipses)
        if (inside(e, u, v)) s += e.value;
      img(x, y) = amplitude * std::max(s, 0.0);
    }
  return img;
}

RealImage smooth_edges(const RealImage& img, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("edge blur must be >= 0");
  if (sigma == 0.0) return img;
  const std::size_t nx = img.nx(), ny = img.ny();
  ComplexImage k(nx, ny);
  for (std::size_t i = 0; i < img.size(); ++i) k[i] = img[i];
  k = fft2_centered(k);
  // A spatial Gaussian of std sigma has transform exp(-2 pi^2 sigma^2 f^2), f in cycles/px.
  const double a = 2.0 * std::numbers::pi * std::numbers::pi * sigma * sigma;
  for (std::size_t x = 0; x < nx; ++x)
    for (std::size_t y = 0; y < ny; ++y) {
      const double fx = (static_cast<double>(x) - static_cast<double>(nx / 2)) / static_cast<double>(nx);
      const double fy = (static_cast<double>(y) - static_cast<double>(ny / 2)) / static_cast<double>(ny);
      k(x, y) *= std::exp(-a * (fx * fx + fy * fy));
    }
  k = ifft2_centered(k);
  RealImage out(nx, ny);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(k[i].real(), 0.0);
  return out;
}

MultiCoilImage coil_sensitivities(std::size_t n_coils, std::size_t nx, std::size_t ny) {
  MultiCoilImage s(n_coils, nx, ny);
  if (n_coils == 1) {
    for (auto& v : s.values()) v = 1.0;
    return s;
  }
  // Gaussian receive profiles centered on a ring outside the object, each with its
  // own smooth linear phase.
  constexpr double kRing = 1.3, kWidth = 0.9, kPhaseSlope = 0.6;
  for (std::size_t c = 0; c < n_coils; ++c) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_coils);
    const double cu = kRing * std::cos(theta), cv = kRing * std::sin(theta);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) {
        const double u = coord_u(y, ny), v = coord_v(x, nx);
        const double d2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        const double mag = std::exp(-0.5 * d2 / (kWidth * kWidth));
        const double phase = theta + kPhaseSlope * (u * std::cos(theta) + v * std::sin(theta));
        s(c, x, y) = std::polar(mag, phase);
      }
  }
  for (std::size_t i = 0; i < s.pixels(); ++i) {
    double ss = 0.0;
    for (std::size_t c = 0; c < n_coils; ++c) ss += std::norm(s.coil(c)[i]);
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t c = 0; c < n_coils; ++c) s.coil(c)[i] *= inv;
  }
  return s;
}

Phantom make_phantom(const PhantomSpec& spec) {
  if (spec.n_coils == 0) throw std::invalid_argument("phantom needs at least one coil");
  if (!(spec.noise_sigma >= 0.0)) throw std::invalid_argument("noise_sigma must be >= 0");
  Phantom p;
  p.reference = smooth_edges(shepp_logan(spec.nx, spec.ny, spec.amplitude), spec.edge_blur);
  p.support = BinaryImage(spec.nx, spec.ny, 0);
  for (std::size_t x = 0; x < spec.nx; ++x)
    for (std::size_t y = 0; y < spec.ny; ++y)
      p.support(x, y) = inside(kEllipses[0], coord_u(y, spec.ny), coord_v(x, spec.nx)) ? 1 : 0;
  p.sensitivities = coil_sensitivities(spec.n_coils, spec.nx, spec.ny);
  p.coils = MultiCoilImage(spec.n_coils, spec.nx, spec.ny);
  for (std::size_t c = 0; c < spec.n_coils; ++c)
    for (std::size_t i = 0; i < p.coils.pixels(); ++i)
      p.coils.coil(c)[i] = p.reference[i] * p.sensitivities.coil(c)[i];

  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> gauss(0.0, spec.noise_sigma / std::sqrt(2.0));
    for (auto& v : p.coils.values()) {
      const double re = gauss(rng);
      const double im = gauss(rng);
      v += cx(re, im);
    }
  }
  return p;
}

} // namespace nlrspirit
