#pragma once

#include "nlrspirit/tensor.hpp"

#include <Eigen/Core>

#include <vector>

namespace nlrspirit {

/// Top-left corner of a patch.
struct PatchPos {
  std::size_t x = 0;
  std::size_t y = 0;
  friend bool operator==(const PatchPos&, const PatchPos&) = default;
};

/// One similar-patch group of a single coil. members[0] is the reference patch.
struct PatchGroup {
  std::size_t coil = 0;
  PatchPos reference;
  std::vector<PatchPos> members;
  friend bool operator==(const PatchGroup&, const PatchGroup&) = default;
};

/// Block-matching result for every coil. Groups are stored coil by coil, and within a
/// coil in row-major order of their reference patches.
struct PatchGrouping {
  std::size_t patch_side = 0;
  std::size_t coils = 0;
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<PatchGroup> groups;

  std::size_t patch_size() const { return patch_side * patch_side; }
  /// Throws if a member patch leaves the grid or shapes disagree with x.
  void validate_for(const MultiCoilImage& x) const;
  friend bool operator==(const PatchGrouping&, const PatchGrouping&) = default;
};

/// n x m matrix of vectorized patches; column j is member j, pixels in row-major order
/// within the patch.
using PatchGroupMatrix = Eigen::MatrixXcd;

struct BlockMatchParams {
  std::size_t patch_side = 6;
  std::size_t stride = 5;
  std::size_t window = 40;
  std::size_t group_size = 43;
};

/// Reference corners along one axis: 0, stride, 2*stride, ... plus the last valid
/// corner n - patch_side, so every pixel is covered.
std::vector<std::size_t> reference_lattice(std::size_t n, std::size_t patch_side, std::size_t stride);

/// Candidate corners for a reference at r along an axis: r - window/2 .. r - window/2 + window - 1,
/// clipped to the valid range.
IndexRange search_range(std::size_t r, std::size_t n, std::size_t patch_side, std::size_t window);

/// Thrown when a search window holds fewer candidates than the group size.
class WindowTooSmall : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Per coil, groups the group_size candidates closest (squared Euclidean distance on
/// complex values) to each reference. The reference is always member 0; remaining
/// members are ordered by (distance, row-major candidate index).
PatchGrouping block_match(const MultiCoilImage& x, const BlockMatchParams& params);

/// V_ci(X) for every group, in grouping order.
std::vector<PatchGroupMatrix> extract_groups(const MultiCoilImage& x, const PatchGrouping& grouping);

/// Per-pixel overlap counts, one real map per coil.
struct AggregationWeights {
  std::size_t coils = 0;
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> counts;

  double operator()(std::size_t c, std::size_t x, std::size_t y) const { return counts[(c * nx + x) * ny + y]; }
  double min() const;
};

struct Placement {
  MultiCoilImage image;
  AggregationWeights weights;
};

/// sum_i V*_ci(groups_i): scatter-adds every column back to its patch footprint and
/// counts coverage.
Placement place_groups_adjoint(const std::vector<PatchGroupMatrix>& groups, const PatchGrouping& grouping);

/// Overlap counts alone (sum V* V as a diagonal).
AggregationWeights coverage(const PatchGrouping& grouping);

/// Q = (sum V* V)^-1 sum V*(D): placement divided by counts. Throws if any pixel is
/// uncovered.
MultiCoilImage aggregate_q(const std::vector<PatchGroupMatrix>& groups, const PatchGrouping& grouping);

} // namespace nlrspirit
