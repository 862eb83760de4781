#include "nlrspirit/patches.hpp"

#include "nlrspirit/parallel.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace nlrspirit {

void PatchGrouping::validate_for(const MultiCoilImage& x) const {
  if (x.coils() != coils || x.nx() != nx || x.ny() != ny) throw ShapeError("grouping does not match image shape");
  for (const auto& g : groups) {
    if (g.coil >= coils) throw ShapeError("group coil index out of range");
    for (const auto& m : g.members)
      if (m.x + patch_side > nx || m.y + patch_side > ny) throw ShapeError("patch leaves the image");
  }
}

std::vector<std::size_t> reference_lattice(std::size_t n, std::size_t patch_side, std::size_t stride) {
  if (patch_side == 0 || patch_side > n) throw std::invalid_argument("patch side must be in [1, image extent]");
  if (stride == 0) throw std::invalid_argument("stride must be positive");
  std::vector<std::size_t> out;
  const std::size_t last = n - patch_side;
  for (std::size_t r = 0; r <= last; r += stride) out.push_back(r);
  if (out.back() != last) out.push_back(last);
  return out;
}

IndexRange search_range(std::size_t r, std::size_t n, std::size_t patch_side, std::size_t window) {
  const std::size_t last = n - patch_side;
  const std::size_t lo = r > window / 2 ? r - window / 2 : 0;
  const std::size_t hi = std::min(last + 1, r + (window - window / 2));
  return {lo, hi};
}

namespace {

double patch_distance(std::span<const cx> plane, std::size_t ny, std::size_t ps, PatchPos a, PatchPos b) {
  double d = 0.0;
  for (std::size_t i = 0; i < ps; ++i) {
    const cx* pa = plane.data() + (a.x + i) * ny + a.y;
    const cx* pb = plane.data() + (b.x + i) * ny + b.y;
    for (std::size_t j = 0; j < ps; ++j) d += std::norm(pa[j] - pb[j]);
  }
  return d;
}

} // namespace

PatchGrouping block_match(const MultiCoilImage& x, const BlockMatchParams& params) {
  const std::size_t ps = params.patch_side;
  if (ps == 0 || ps > std::min(x.nx(), x.ny())) throw std::invalid_argument("patch side must be in [1, min(nx, ny)]");
  if (params.group_size == 0) throw std::invalid_argument("group size must be >= 1");
  if (params.window < ps) throw std::invalid_argument("search window must be >= patch side");

  const auto rows = reference_lattice(x.nx(), ps, params.stride);
  const auto cols = reference_lattice(x.ny(), ps, params.stride);
  const std::size_t per_coil = rows.size() * cols.size();

  PatchGrouping out;
  out.patch_side = ps;
  out.coils = x.coils();
  out.nx = x.nx();
  out.ny = x.ny();
  out.groups.resize(per_coil * x.coils());

  parallel_for(out.groups.size(), [&](std::size_t gi) {
    const std::size_t coil = gi / per_coil;
    const std::size_t local = gi % per_coil;
    const PatchPos ref{rows[local / cols.size()], cols[local % cols.size()]};
    const IndexRange wr = search_range(ref.x, x.nx(), ps, params.window);
    const IndexRange wc = search_range(ref.y, x.ny(), ps, params.window);
    const std::size_t candidates = wr.size() * wc.size();
    if (candidates < params.group_size)
      throw WindowTooSmall("search window holds " + std::to_string(candidates) + " candidate patches, need " +
                           std::to_string(params.group_size));

    const auto plane = x.coil(coil);
    struct Cand {
      double dist;
      std::size_t order;
      PatchPos pos;
    };
    std::vector<Cand> cands;
    cands.reserve(candidates - 1);
    for (std::size_t cxr = wr.begin; cxr < wr.end; ++cxr)
      for (std::size_t cyc = wc.begin; cyc < wc.end; ++cyc) {
        const PatchPos pos{cxr, cyc};
        if (pos == ref) continue;
        cands.push_back({patch_distance(plane, x.ny(), ps, ref, pos), cxr * x.ny() + cyc, pos});
      }
    const std::size_t take = params.group_size - 1;
    auto less = [](const Cand& a, const Cand& b) { return a.dist < b.dist || (a.dist == b.dist && a.order < b.order); };
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end(), less);

    PatchGroup& g = out.groups[gi];
    g.coil = coil;
    g.reference = ref;
    g.members.reserve(params.group_size);
    g.members.push_back(ref);
    for (std::size_t k = 0; k < take; ++k) g.members.push_back(cands[k].pos);
  });
  return out;
}

std::vector<PatchGroupMatrix> extract_groups(const MultiCoilImage& x, const PatchGrouping& grouping) {
  grouping.validate_for(x);
  const std::size_t ps = grouping.patch_side;
  std::vector<PatchGroupMatrix> out(grouping.groups.size());
  parallel_for(out.size(), [&](std::size_t gi) {
    const PatchGroup& g = grouping.groups[gi];
    const auto plane = x.coil(g.coil);
    PatchGroupMatrix m(static_cast<Eigen::Index>(ps * ps), static_cast<Eigen::Index>(g.members.size()));
    for (std::size_t j = 0; j < g.members.size(); ++j) {
      const PatchPos p = g.members[j];
      for (std::size_t i = 0; i < ps; ++i)
        for (std::size_t k = 0; k < ps; ++k)
          m(static_cast<Eigen::Index>(i * ps + k), static_cast<Eigen::Index>(j)) = plane[(p.x + i) * x.ny() + p.y + k];
    }
    out[gi] = std::move(m);
  });
  return out;
}

double AggregationWeights::min() const {
  return counts.empty() ? 0.0 : *std::min_element(counts.begin(), counts.end());
}

namespace {

// Each coil's groups form one contiguous run, so scattering coil by coil keeps the
// summation order fixed whatever the worker count.
std::vector<std::size_t> coil_offsets(const PatchGrouping& grouping) {
  const auto& gs = grouping.groups;
  if (!std::is_sorted(gs.begin(), gs.end(), [](const PatchGroup& a, const PatchGroup& b) { return a.coil < b.coil; }))
    throw ShapeError("groups are not ordered by coil");
  std::vector<std::size_t> first(grouping.coils + 1);
  for (std::size_t c = 0; c <= grouping.coils; ++c)
    first[c] = static_cast<std::size_t>(
        std::lower_bound(gs.begin(), gs.end(), c, [](const PatchGroup& g, std::size_t v) { return g.coil < v; }) -
        gs.begin());
  return first;
}

} // namespace

Placement place_groups_adjoint(const std::vector<PatchGroupMatrix>& groups, const PatchGrouping& grouping) {
  if (groups.size() != grouping.groups.size()) throw ShapeError("group list and grouping differ in length");
  const std::size_t ps = grouping.patch_side;
  for (std::size_t gi = 0; gi < groups.size(); ++gi)
    if (groups[gi].rows() != static_cast<Eigen::Index>(ps * ps) ||
        groups[gi].cols() != static_cast<Eigen::Index>(grouping.groups[gi].members.size()))
      throw ShapeError("group matrix does not match its grouping entry");

  Placement out{MultiCoilImage(grouping.coils, grouping.nx, grouping.ny),
                AggregationWeights{grouping.coils, grouping.nx, grouping.ny,
                                   std::vector<double>(grouping.coils * grouping.nx * grouping.ny, 0.0)}};
  const auto first = coil_offsets(grouping);
  const std::size_t ny = grouping.ny, npix = grouping.nx * grouping.ny;
  parallel_for(grouping.coils, [&](std::size_t c) {
    auto plane = out.image.coil(c);
    double* counts = out.weights.counts.data() + c * npix;
    for (std::size_t gi = first[c]; gi < first[c + 1]; ++gi) {
      const auto& g = grouping.groups[gi];
      for (std::size_t j = 0; j < g.members.size(); ++j) {
        const PatchPos p = g.members[j];
        for (std::size_t i = 0; i < ps; ++i)
          for (std::size_t k = 0; k < ps; ++k) {
            const std::size_t idx = (p.x + i) * ny + p.y + k;
            plane[idx] += groups[gi](static_cast<Eigen::Index>(i * ps + k), static_cast<Eigen::Index>(j));
            counts[idx] += 1.0;
          }
      }
    }
  });
  return out;
}

AggregationWeights coverage(const PatchGrouping& grouping) {
  AggregationWeights w{grouping.coils, grouping.nx, grouping.ny,
                       std::vector<double>(grouping.coils * grouping.nx * grouping.ny, 0.0)};
  const std::size_t ps = grouping.patch_side, ny = grouping.ny, npix = grouping.nx * grouping.ny;
  for (const auto& g : grouping.groups)
    for (const auto& p : g.members)
      for (std::size_t i = 0; i < ps; ++i)
        for (std::size_t k = 0; k < ps; ++k) w.counts[g.coil * npix + (p.x + i) * ny + p.y + k] += 1.0;
  return w;
}

MultiCoilImage aggregate_q(const std::vector<PatchGroupMatrix>& groups, const PatchGrouping& grouping) {
  Placement placed = place_groups_adjoint(groups, grouping);
  auto& img = placed.image.storage();
  const auto& counts = placed.weights.counts;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (counts[i] <= 0.0) throw std::domain_error("pixel not covered by any patch; aggregation undefined");
    img[i] /= counts[i];
  }
  return std::move(placed.image);
}

} // namespace nlrspirit
