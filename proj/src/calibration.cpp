#include "nlrspirit/calibration.hpp"

#include "nlrspirit/parallel.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace nlrspirit {

using MatrixXc = Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic>;
using VectorXc = Eigen::Matrix<cx, Eigen::Dynamic, 1>;
using RowBlock = Eigen::Map<Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowBlock = Eigen::Map<const Eigen::Matrix<cx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

CalibKernel::CalibKernel(std::size_t ks, std::size_t coils)
    : ks_(ks), coils_(coils), weights_(ks * ks * coils * coils) {
  validate();
}

CalibKernel::CalibKernel(std::size_t ks, std::size_t coils, std::vector<cx> weights)
    : ks_(ks), coils_(coils), weights_(std::move(weights)) {
  validate();
  if (weights_.size() != ks * ks * coils * coils) throw ShapeError("kernel weight count mismatch");
  const std::size_t h = half();
  for (std::size_t c = 0; c < coils_; ++c)
    if ((*this)(h, h, c, c) != cx{}) throw std::invalid_argument("kernel center tap of a coil onto itself must be zero");
}

void CalibKernel::validate() const {
  if (ks_ == 0 || ks_ % 2 == 0) throw std::invalid_argument("kernel size must be odd and positive");
  if (coils_ == 0) throw ShapeError("kernel needs at least one coil");
}

CalibrationReport calibrate(const KSpaceData& kspace, IndexRange acs_rows, IndexRange acs_cols, std::size_t ks,
                            std::optional<double> lambda) {
  if (ks == 0 || ks % 2 == 0) throw std::invalid_argument("kernel size must be odd and positive");
  if (acs_rows.end > kspace.nx() || acs_cols.end > kspace.ny() || acs_rows.begin > acs_rows.end ||
      acs_cols.begin > acs_cols.end)
    throw ShapeError("ACS region leaves the k-space grid");
  if (lambda && !(*lambda >= 0.0)) throw std::invalid_argument("calibration lambda must be >= 0");

  const std::size_t C = kspace.coils();
  const std::size_t h = ks / 2;
  const std::size_t unknowns = ks * ks * C - 1;
  const std::size_t fit_rows = acs_rows.size() >= ks ? acs_rows.size() - ks + 1 : 0;
  const std::size_t fit_cols = acs_cols.size() >= ks ? acs_cols.size() - ks + 1 : 0;
  const std::size_t equations = fit_rows * fit_cols;
  if (equations < unknowns)
    throw UnderdeterminedCalibration("ACS block " + std::to_string(acs_rows.size()) + "x" +
                                     std::to_string(acs_cols.size()) + " gives " + std::to_string(equations) +
                                     " equations for " + std::to_string(ks * ks * C - 1) + " kernel unknowns");

  // Full neighborhood matrix, column order (ox, oy, src); the target coil's own
  // center column is dropped per target below.
  const std::size_t full_cols = ks * ks * C;
  MatrixXc hood(equations, full_cols);
  std::size_t row = 0;
  for (std::size_t px = acs_rows.begin + h; px + h < acs_rows.end; ++px)
    for (std::size_t py = acs_cols.begin + h; py + h < acs_cols.end; ++py, ++row) {
      std::size_t col = 0;
      for (std::size_t ox = 0; ox < ks; ++ox)
        for (std::size_t oy = 0; oy < ks; ++oy)
          for (std::size_t src = 0; src < C; ++src, ++col) hood(row, col) = kspace(src, px + ox - h, py + oy - h);
    }

  CalibrationReport report;
  report.kernel = CalibKernel(ks, C);
  report.relative_residual.assign(C, 0.0);
  report.lambda.assign(C, 0.0);
  report.eigen_ratio.assign(C, 0.0);
  report.equations = equations;
  report.unknowns = unknowns;

  std::vector<VectorXc> solutions(C);
  parallel_for(C, [&](std::size_t tgt) {
    const std::size_t skip = (h * ks + h) * C + tgt;
    MatrixXc m(equations, unknowns);
    m.leftCols(skip) = hood.leftCols(skip);
    m.rightCols(full_cols - skip - 1) = hood.rightCols(full_cols - skip - 1);
    const VectorXc b = hood.col(skip);

    const double lam = lambda ? *lambda : 1e-6 * m.squaredNorm() / static_cast<double>(equations);
    MatrixXc normal = m.adjoint() * m;
    Eigen::SelfAdjointEigenSolver<MatrixXc> eig(normal, Eigen::EigenvaluesOnly);
    const double emax = eig.eigenvalues().maxCoeff();
    report.eigen_ratio[tgt] = emax > 0.0 ? std::max(eig.eigenvalues().minCoeff(), 0.0) / emax : 0.0;

    normal.diagonal().array() += lam;
    VectorXc w;
    Eigen::LLT<MatrixXc> llt(normal);
    if (llt.info() == Eigen::Success) {
      w = llt.solve(m.adjoint() * b);
    } else {
      w = normal.completeOrthogonalDecomposition().solve(m.adjoint() * b);
    }
    const double bn = b.norm();
    report.relative_residual[tgt] = bn > 0.0 ? (m * w - b).norm() / bn : 0.0;
    report.lambda[tgt] = lam;

    VectorXc full = VectorXc::Zero(static_cast<Eigen::Index>(full_cols));
    full.head(skip) = w.head(skip);
    full.tail(full_cols - skip - 1) = w.tail(unknowns - skip);
    solutions[tgt] = std::move(full);
  });

  for (std::size_t tgt = 0; tgt < C; ++tgt) {
    std::size_t col = 0;
    for (std::size_t ox = 0; ox < ks; ++ox)
      for (std::size_t oy = 0; oy < ks; ++oy)
        for (std::size_t src = 0; src < C; ++src, ++col) report.kernel(ox, oy, src, tgt) = solutions[tgt](col);
    report.kernel(h, h, tgt, tgt) = cx{};
  }
  for (double r : report.eigen_ratio)
    if (r < 1e-12) report.ill_conditioned = true;
  return report;
}

KSpaceData apply_kernel_kspace(const CalibKernel& kernel, const KSpaceData& y) {
  if (kernel.coils() != y.coils()) throw ShapeError("kernel and k-space coil counts differ");
  const std::size_t nx = y.nx(), ny = y.ny(), ks = kernel.size(), h = kernel.half(), C = y.coils();
  KSpaceData out(C, nx, ny);
  parallel_for(C, [&](std::size_t tgt) {
    for (std::size_t px = 0; px < nx; ++px)
      for (std::size_t py = 0; py < ny; ++py) {
        cx acc{};
        for (std::size_t ox = 0; ox < ks; ++ox) {
          const std::size_t qx = (px + nx + ox - h) % nx;
          for (std::size_t oy = 0; oy < ks; ++oy) {
            const std::size_t qy = (py + ny + oy - h) % ny;
            for (std::size_t src = 0; src < C; ++src) acc += kernel(ox, oy, src, tgt) * y(src, qx, qy);
          }
        }
        out(tgt, px, py) = acc;
      }
  });
  return out;
}

PixelBlocks::PixelBlocks(std::size_t coils, std::size_t nx, std::size_t ny)
    : coils_(coils), nx_(nx), ny_(ny), data_(coils * coils * nx * ny) {
  if (coils == 0 || nx == 0 || ny == 0) throw ShapeError("pixel block operator extents must be positive");
}

PixelBlocks kernel_to_image_operator(const CalibKernel& kernel, std::size_t nx, std::size_t ny) {
  const std::size_t ks = kernel.size(), h = kernel.half(), C = kernel.coils();
  if (ks > nx || ks > ny) throw ShapeError("kernel larger than the image grid");
  PixelBlocks g(C, nx, ny);
  const double scale = std::sqrt(static_cast<double>(nx * ny));
  const std::size_t cx0 = nx / 2, cy0 = ny / 2;
  parallel_for(C * C, [&](std::size_t pair) {
    const std::size_t src = pair / C, tgt = pair % C;
    // Correlation with w(o) is convolution with w(-o): place tap o at center - o.
    ComplexImage filt(nx, ny);
    for (std::size_t ox = 0; ox < ks; ++ox)
      for (std::size_t oy = 0; oy < ks; ++oy)
        filt((cx0 + nx + h - ox) % nx, (cy0 + ny + h - oy) % ny) += kernel(ox, oy, src, tgt);
    ifft2_centered_inplace(filt.values(), nx, ny);
    for (std::size_t p = 0; p < nx * ny; ++p) g(p, tgt, src) = scale * filt[p];
  });
  return g;
}

MultiCoilImage apply_blocks(const PixelBlocks& op, const MultiCoilImage& x) {
  if (op.coils() != x.coils() || op.nx() != x.nx() || op.ny() != x.ny())
    throw ShapeError("pixel block operator and image shapes differ");
  const std::size_t C = x.coils(), N = x.pixels();
  MultiCoilImage out(C, x.nx(), x.ny());
  parallel_for(x.nx(), [&](std::size_t row) {
    for (std::size_t p = row * x.ny(); p < (row + 1) * x.ny(); ++p) {
      auto b = op.block(p);
      for (std::size_t r = 0; r < C; ++r) {
        cx acc{};
        for (std::size_t c = 0; c < C; ++c) acc += b[r * C + c] * x[c * N + p];
        out[r * N + p] = acc;
      }
    }
  });
  return out;
}

PixelBlocks build_delta(const PixelBlocks& g, double mu1, double beta) {
  const Eigen::Index C = static_cast<Eigen::Index>(g.coils());
  PixelBlocks out(g.coils(), g.nx(), g.ny());
  parallel_for(g.pixels(), [&](std::size_t p) {
    ConstRowBlock gp(g.block(p).data(), C, C);
    MatrixXc gm = gp - MatrixXc::Identity(C, C);
    MatrixXc d = mu1 * (gm.adjoint() * gm);
    d.diagonal().array() += beta;
    RowBlock(out.block(p).data(), C, C) = d;
  });
  return out;
}

PixelBlocks build_delta_inverse(const PixelBlocks& g, double mu1, double beta) {
  if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
  if (!(mu1 >= 0.0)) throw std::invalid_argument("mu1 must be >= 0");
  const Eigen::Index C = static_cast<Eigen::Index>(g.coils());
  PixelBlocks out(g.coils(), g.nx(), g.ny());
  parallel_for(g.pixels(), [&](std::size_t p) {
    ConstRowBlock gp(g.block(p).data(), C, C);
    MatrixXc gm = gp - MatrixXc::Identity(C, C);
    MatrixXc d = mu1 * (gm.adjoint() * gm);
    d.diagonal().array() += beta;
    MatrixXc inv = d.llt().solve(MatrixXc::Identity(C, C));
    RowBlock(out.block(p).data(), C, C) = 0.5 * (inv + inv.adjoint());
  });
  return out;
}

} // namespace nlrspirit
