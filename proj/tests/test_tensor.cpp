#include "support.hpp"

#include <doctest.h>

using namespace nlrspirit;
using testing::random_cx;

TEST_SUITE("tensor") {

TEST_CASE("constant image concentrates at the center") {
  ComplexImage one(4, 4, cx(1.0));
  const ComplexImage k = fft2_centered(one);
  for (std::size_t x = 0; x < 4; ++x)
    for (std::size_t y = 0; y < 4; ++y) {
      const cx want = (x == 2 && y == 2) ? cx(4.0) : cx(0.0);
      CHECK(std::abs(k(x, y) - want) < 1e-12);
    }
}

TEST_CASE("centered delta transforms to a constant") {
  ComplexImage d(6, 6);
  d(3, 3) = 1.0;
  const ComplexImage img = ifft2_centered(d);
  for (auto v : img.values()) CHECK(std::abs(v - cx(1.0 / 6.0)) < 1e-12);
}

TEST_CASE("forward and inverse match the dense DFT, odd and even grids") {
  std::mt19937_64 rng(11);
  for (auto [nx, ny] : {std::pair<std::size_t, std::size_t>{8, 8}, {7, 5}, {6, 9}}) {
    const ComplexImage a = testing::random_image(rng, nx, ny);
    CHECK(testing::max_abs_diff(fft2_centered(a), testing::dft_oracle(a, -1)) < 1e-10);
    CHECK(testing::max_abs_diff(ifft2_centered(a), testing::dft_oracle(a, +1)) < 1e-10);
  }
}

TEST_CASE("inverse identities and unitarity") {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 20; ++t) {
    const ComplexImage a = testing::random_image(rng, 16, 12);
    const ComplexImage k = fft2_centered(a);
    double na = 0.0, nk = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      na += std::norm(a[i]);
      nk += std::norm(k[i]);
    }
    CHECK(std::abs(std::sqrt(nk) - std::sqrt(na)) <= 1e-12 * std::sqrt(na));
    CHECK(testing::max_abs_diff(ifft2_centered(k), a) <= 1e-12 * std::sqrt(na));
    CHECK(testing::max_abs_diff(fft2_centered(ifft2_centered(a)), a) <= 1e-12 * std::sqrt(na));
  }
}

TEST_CASE("encoding equals mask times transform") {
  std::mt19937_64 rng(13);
  const auto x = testing::random_stack<MultiCoilImage>(rng, 4, 8, 8);
  const SamplingMask m = testing::random_mask(rng, 8, 8);
  const KSpaceData y = apply_encoding(x, m);
  for (std::size_t c = 0; c < 4; ++c) {
    const ComplexImage k = testing::dft_oracle(x.plane(c), -1);
    for (std::size_t i = 0; i < k.size(); ++i) CHECK(std::abs(y.coil(c)[i] - (m.kept(i) ? k[i] : cx{})) < 1e-12);
  }
}

TEST_CASE("full mask encoding is the plain transform") {
  std::mt19937_64 rng(14);
  const auto x = testing::random_stack<MultiCoilImage>(rng, 2, 8, 6);
  const auto m = SamplingMask::full(8, 6);
  CHECK(apply_encoding(x, m) == fft2_coils(x));
  const auto y = testing::random_stack<KSpaceData>(rng, 2, 8, 6);
  CHECK(apply_encoding_adjoint(y, m) == ifft2_coils(y));
}

TEST_CASE("single kept sample leaves at most one nonzero per coil") {
  std::mt19937_64 rng(15);
  BinaryImage k(8, 8, 0);
  k(2, 5) = 1;
  const SamplingMask m(k, {0, 0}, {0, 0});
  const KSpaceData y = apply_encoding(testing::random_stack<MultiCoilImage>(rng, 3, 8, 8), m);
  for (std::size_t c = 0; c < 3; ++c) {
    int nz = 0;
    for (auto v : y.coil(c)) nz += v != cx{};
    CHECK(nz <= 1);
  }
}

TEST_CASE("adjoint identity and idempotent projection") {
  std::mt19937_64 rng(16);
  for (int t = 0; t < 20; ++t) {
    const auto x = testing::random_stack<MultiCoilImage>(rng, 4, 10, 12);
    const auto y = testing::random_stack<KSpaceData>(rng, 4, 10, 12);
    const SamplingMask m = testing::random_mask(rng, 10, 12, 0.3);
    const cx lhs = inner(apply_encoding(x, m), y);
    const cx rhs = inner(x, apply_encoding_adjoint(y, m));
    CHECK(std::abs(lhs - rhs) <= 1e-10 * norm(x) * norm(y));
    CHECK(apply_mask(apply_mask(y, m), m) == apply_mask(y, m));
  }
  const KSpaceData zero(2, 4, 4);
  CHECK(norm(apply_encoding_adjoint(zero, SamplingMask::full(4, 4))) == 0.0);
}

TEST_CASE("normal operator is the mask in the Fourier basis") {
  std::mt19937_64 rng(17);
  const SamplingMask m = testing::random_mask(rng, 8, 8);
  const auto v = testing::random_stack<KSpaceData>(rng, 2, 8, 8);
  const KSpaceData back = fft2_coils(apply_encoding_adjoint(apply_encoding(ifft2_coils(v), m), m));
  CHECK(testing::rel_diff(back, apply_mask(v, m)) < 1e-12);
}

TEST_CASE("sum of squares combine") {
  MultiCoilImage one(1, 2, 2);
  one(0, 1, 1) = cx(-3.0, 4.0);
  CHECK(sos_combine(one)(1, 1) == doctest::Approx(5.0).epsilon(1e-15));

  MultiCoilImage two(2, 1, 1);
  two(0, 0, 0) = 3.0;
  two(1, 0, 0) = cx(0.0, 4.0);
  CHECK(std::abs(sos_combine(two)(0, 0) - 5.0) < 1e-15);

  std::mt19937_64 rng(18);
  const auto x = testing::random_stack<MultiCoilImage>(rng, 4, 5, 7);
  const RealImage s = sos_combine(x);
  for (std::size_t i = 0; i < s.size(); ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 4; ++c) acc += std::abs(x.coil(c)[i]) * std::abs(x.coil(c)[i]);
    CHECK(std::abs(s[i] - std::sqrt(acc)) < 1e-12);
  }
}

TEST_CASE("shape checks") {
  CHECK_THROWS_AS(ComplexImage(0, 3), ShapeError);
  CHECK_THROWS_AS(MultiCoilImage(0, 3, 3), ShapeError);
  CHECK_THROWS_AS(ComplexImage(2, 2, std::vector<cx>(3)), ShapeError);
  MultiCoilImage a(2, 4, 4), b(2, 4, 5);
  CHECK_THROWS_AS(a + b, ShapeError);
  CHECK_THROWS_AS(apply_encoding(a, SamplingMask::full(4, 5)), ShapeError);
  BinaryImage k(4, 4, 0);
  CHECK_THROWS_AS(SamplingMask(k, {1, 3}, {1, 3}), std::invalid_argument);
  CHECK_THROWS_AS(SamplingMask(BinaryImage(4, 4, 1), {0, 5}, {0, 4}), ShapeError);
}

TEST_CASE("mask bookkeeping and centered block detection") {
  BinaryImage k(8, 8, 0);
  for (std::size_t x = 3; x < 6; ++x)
    for (std::size_t y = 2; y < 6; ++y) k(x, y) = 1;
  k(0, 0) = 1;
  const SamplingMask m(k, {3, 6}, {2, 6});
  CHECK(m.count() == 13);
  CHECK(m.acceleration() == doctest::Approx(64.0 / 13.0));
  auto [r, c] = detect_centered_acs(k);
  CHECK(r == IndexRange{3, 6});
  CHECK(c == IndexRange{2, 6});
  CHECK(SamplingMask::full(3, 5).count() == 15);
}

} // TEST_SUITE
