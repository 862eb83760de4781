// Release gate: one line per criterion, nonzero exit if any fails.

#include "support.hpp"

#include "nlrspirit/cli.hpp"
#include "nlrspirit/container.hpp"
#include "nlrspirit/metrics.hpp"
#include "nlrspirit/sampling.hpp"
#include "nlrspirit/shrinkage.hpp"
#include "nlrspirit/solver.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <sstream>

using namespace nlrspirit;

namespace {

struct Verdict {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1: weighted shrinkage against an independent SVD ----

Verdict shrinkage_oracle() {
  std::mt19937_64 rng(1001);
  const ShrinkageParams p;
  double worst = 0.0;
  int trials = 0;
  for (auto [rows, cols] : {std::pair{6L, 10L}, std::pair{36L, 43L}})
    for (int t = 0; t < 100; ++t, ++trials) {
      // Spread of scales so some components survive and some vanish.
      const double scale = 0.5 + 0.25 * t;
      const PatchGroupMatrix v = testing::random_matrix(rng, rows, cols, scale);
      const Eigen::VectorXd s = Eigen::JacobiSVD<PatchGroupMatrix>(v).singularValues();
      const Eigen::VectorXd out = Eigen::JacobiSVD<PatchGroupMatrix>(shrink_group(v, p)).singularValues();
      const double m = double(cols), floor = m * p.delta * p.delta;
      for (Eigen::Index j = 0; j < s.size(); ++j) {
        const double sig_hat = std::sqrt(std::max(s(j) * s(j) - floor, 0.0));
        const double w = p.b0 * std::sqrt(m) / (sig_hat + p.epsilon);
        worst = std::max(worst, std::abs(out(j) - std::max(s(j) - w, 0.0)) / std::max(1.0, s(0)));
      }
    }
  return {worst <= 1e-10, std::to_string(trials) + " matrices, worst " + fmt("%.2e", worst)};
}

// ---- 2: adjoint identities ----

Verdict adjoints() {
  std::mt19937_64 rng(1002);
  double worst_fft = 0.0, worst_a = 0.0, worst_v = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t nx = 16 + std::size_t(t % 5), ny = 12 + std::size_t(t % 4), C = 1 + std::size_t(t % 4);
    const auto x = testing::random_stack<MultiCoilImage>(rng, C, nx, ny);
    const auto k = testing::random_stack<KSpaceData>(rng, C, nx, ny);
    const KSpaceData fx = fft2_coils(x);
    worst_fft = std::max(worst_fft, std::abs(norm(fx) - norm(x)) / norm(x));
    worst_fft = std::max(worst_fft, norm(ifft2_coils(fx) - x) / norm(x));
    worst_fft = std::max(worst_fft, std::abs(inner(fx, k) - inner(x, ifft2_coils(k))) / (norm(x) * norm(k)));

    const SamplingMask m = testing::random_mask(rng, nx, ny, 0.4);
    const KSpaceData ym = apply_mask(k, m);
    const cx lhs = inner(apply_encoding(x, m), ym), rhs = inner(x, apply_encoding_adjoint(ym, m));
    worst_a = std::max(worst_a, std::abs(lhs - rhs) / (norm(x) * norm(ym)));

    const PatchGrouping g = block_match(x, {4, 3, 10, 7});
    std::vector<PatchGroupMatrix> d;
    for (const auto& grp : g.groups) d.push_back(testing::random_matrix(rng, 16, long(grp.members.size())));
    const auto v = extract_groups(x, g);
    cx vl{};
    double dn = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      vl += (v[i].adjoint() * d[i]).trace();
      dn += d[i].squaredNorm();
    }
    const cx vr = inner(x, place_groups_adjoint(d, g).image);
    worst_v = std::max(worst_v, std::abs(vl - vr) / (norm(x) * std::sqrt(dn)));
  }
  const bool ok = worst_fft <= 1e-10 && worst_a <= 1e-10 && worst_v <= 1e-10;
  return {ok, "20 trials; fft " + fmt("%.1e", worst_fft) + ", encoding " + fmt("%.1e", worst_a) + ", patches " +
                  fmt("%.1e", worst_v)};
}

// ---- 3: aggregation of untouched groups ----

Verdict aggregation() {
  std::mt19937_64 rng(1003);
  double worst = 0.0;
  for (int t = 0; t < 3; ++t) {
    const auto x = testing::random_stack<MultiCoilImage>(rng, 4, 64, 64);
    const PatchGrouping g = block_match(x, {});
    const MultiCoilImage q = aggregate_q(extract_groups(x, g), g);
    for (std::size_t i = 0; i < q.size(); ++i) worst = std::max(worst, std::abs(q[i] - x[i]));
  }
  return {worst <= 1e-12, "4 coils 64x64, max error " + fmt("%.1e", worst)};
}

// ---- 4: calibration and operators ----

Verdict calibration() {
  std::mt19937_64 rng(1004);
  const KSpaceData y = testing::self_consistent_kspace(rng, 4, 40);
  const CalibrationReport r = calibrate(y, {8, 32}, {8, 32}, 5, 1e-10);
  const KSpaceData pred = apply_kernel_kspace(r.kernel, y);
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t a = 0; a < 40; ++a)
      for (std::size_t b = 0; b < 40; ++b)
        if (a < 8 || a >= 32 || b < 8 || b >= 32) {
          num += std::norm(pred(c, a, b) - y(c, a, b));
          den += std::norm(y(c, a, b));
        }
  const double held_out = std::sqrt(num / den);

  double worst_g = 0.0, worst_d = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t C = 1 + std::size_t(t % 4), nx = 16 + std::size_t(t % 3), ny = 14;
    const CalibKernel k = testing::random_kernel(rng, t % 2 ? 5 : 3, C);
    const auto x = testing::random_stack<MultiCoilImage>(rng, C, nx, ny);
    const PixelBlocks g = kernel_to_image_operator(k, nx, ny);
    const MultiCoilImage via_k = ifft2_coils(testing::convolve_oracle(k, fft2_coils(x)));
    worst_g = std::max(worst_g, testing::rel_diff(apply_blocks(g, x), via_k));
    const PixelBlocks d = build_delta(g, 1.0, 0.3), di = build_delta_inverse(g, 1.0, 0.3);
    for (std::size_t p = 0; p < g.pixels(); ++p)
      for (std::size_t i = 0; i < C; ++i)
        for (std::size_t j = 0; j < C; ++j) {
          cx acc{};
          for (std::size_t l = 0; l < C; ++l) acc += d(p, i, l) * di(p, l, j);
          worst_d = std::max(worst_d, std::abs(acc - cx(i == j ? 1.0 : 0.0)));
        }
  }
  const bool ok = held_out < 1e-6 && worst_g <= 1e-10 && worst_d <= 1e-12;
  return {ok, "held-out " + fmt("%.1e", held_out) + ", G " + fmt("%.1e", worst_g) + ", delta " + fmt("%.1e", worst_d)};
}

// ---- 5: closed-form X-update ----

Verdict x_update_optimality() {
  std::mt19937_64 rng(1005);
  double worst_res = 0.0, worst_cg = 0.0;
  for (int t = 0; t < 10; ++t) {
    const std::size_t C = 1 + std::size_t(t % 4), nx = 20 + std::size_t(t % 3), ny = 16;
    const SamplingMask m = testing::random_mask(rng, nx, ny, 0.3);
    const auto y = apply_mask(testing::random_stack<KSpaceData>(rng, C, nx, ny), m);
    const auto z = testing::random_stack<MultiCoilImage>(rng, C, nx, ny);
    const auto u = testing::random_stack<MultiCoilImage>(rng, C, nx, ny);
    const auto q = testing::random_stack<MultiCoilImage>(rng, C, nx, ny);
    const double beta = 0.3, mu2 = 1.0;
    const MultiCoilImage x = x_update(y, m, z, u, q, beta, mu2);
    MultiCoilImage rhs = apply_encoding_adjoint(y, m);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += beta * (z[i] - u[i]) + mu2 * q[i];
    MultiCoilImage lhs = apply_encoding_adjoint(apply_encoding(x, m), m);
    for (std::size_t i = 0; i < lhs.size(); ++i) lhs[i] += (beta + mu2) * x[i];
    worst_res = std::max(worst_res, norm(lhs - rhs) / norm(rhs));
    worst_cg = std::max(worst_cg, testing::rel_diff(x, testing::cg_oracle(m, beta + mu2, rhs)));
  }
  return {worst_res <= 1e-9 && worst_cg <= 1e-9,
          "residual " + fmt("%.1e", worst_res) + ", vs CG " + fmt("%.1e", worst_cg)};
}

// ---- CLI helpers ----

int tool(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "nlrspirit");
  std::ostringstream captured;
  auto* old = std::cout.rdbuf(captured.rdbuf());
  const int rc = cli_main(args);
  std::cout.rdbuf(old);
  if (out) *out = captured.str();
  return rc;
}

std::string slurp(const std::string& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// ---- 6: fully sampled run through the tool ----

Verdict fully_sampled() {
  testing::TempDir d("accept_full");
  std::string out;
  if (tool({"phantom", "--nx", "64", "--ny", "64", "--coils", "4", "--noise", "0", "--out-kspace", d / "k",
            "--out-reference", d / "ref"}) != 0 ||
      tool({"mask", "--nx", "64", "--ny", "64", "--pattern", "full", "--out", d / "m"}) != 0 ||
      tool({"reconstruct", "--kspace", d / "k", "--mask", d / "m", "--out-sos", d / "sos"}) != 0 ||
      tool({"metrics", "--reference", d / "ref", "--recon", d / "sos"}, &out) != 0)
    return {false, "tool run failed"};
  const double snr = nlohmann::json::parse(out).at("snr_db").get<double>();
  return {snr >= 60.0, "SNR " + fmt("%.2f", snr) + " dB"};
}

// ---- 7 and 8: phantom study ----

struct Study {
  Phantom phantom;
  KSpaceData y;
  SamplingMask mask;
  CalibKernel kernel;
};

Study make_study(std::uint64_t seed) {
  Study s;
  s.phantom = make_phantom(PhantomSpec{});
  MaskSpec ms;
  ms.af_target = 3.0;
  ms.seed = seed;
  s.mask = make_mask(ms, 64, 64).mask;
  s.y = apply_mask(fft2_coils(s.phantom.coils), s.mask);
  s.kernel = calibrate(s.y, s.mask.acs_rows(), s.mask.acs_cols(), 5).kernel;
  return s;
}

ReconResult run_study(const Study& s, ShrinkMode mode, SolverKind solver, std::optional<double> beta2 = {}) {
  ReconConfig cfg;
  cfg.shrink.mode = mode;
  cfg.solver = solver;
  cfg.beta2 = beta2;
  return reconstruct(s.y, s.mask, s.kernel, cfg, {&s.phantom.reference, nullptr});
}

double final_snr(const ReconResult& r) { return r.log.records.back().metrics->snr_db; }

std::size_t iterations_to(const ReconResult& r, double fraction) {
  const double target = fraction * final_snr(r);
  for (const auto& rec : r.log.records)
    if (rec.metrics->snr_db >= target) return rec.iter;
  return r.log.records.size();
}

std::optional<ReconResult> seed1_weighted;
std::optional<Study> seed1_study;

Verdict phantom_study() {
  std::string detail;
  bool ok = true;
  double wins = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Study s = make_study(seed);
    const ReconResult w = run_study(s, ShrinkMode::weighted, SolverKind::ne);
    const ReconResult n = run_study(s, ShrinkMode::nuclear, SolverKind::ne);
    wins += final_snr(w) - final_snr(n);
    if (seed == 1) {
      const double zf = snr_db(s.phantom.reference, sos_combine(zero_filled(s.y, s.mask)));
      std::size_t hit = 0;
      for (const auto& rec : w.log.records)
        if (rec.re < 1e-4) {
          hit = rec.iter;
          break;
        }
      ok = ok && final_snr(w) >= zf + 3.0 && hit != 0 && hit <= 30 && final_snr(w) >= final_snr(n) - 0.1;
      detail = "seed 1: zero-filled " + fmt("%.2f", zf) + ", weighted " + fmt("%.2f", final_snr(w)) + ", nuclear " +
               fmt("%.2f", final_snr(n)) + " dB, RE<1e-4 at iter " + std::to_string(hit);
      seed1_weighted = w;
      seed1_study = s;
    }
  }
  ok = ok && wins / 5.0 > 0.0;
  return {ok, detail + "; mean weighted gain over 5 seeds " + fmt("%.2f", wins / 5.0) + " dB"};
}

Verdict ne_vs_admm() {
  if (!seed1_weighted) {
    seed1_study = make_study(1);
    seed1_weighted = run_study(*seed1_study, ShrinkMode::weighted, SolverKind::ne);
  }
  const ReconResult& ne = *seed1_weighted;
  // Each pixel sits in many overlapping groups, so the group penalty is set well
  // below the other two; see the README.
  const ReconResult admm = run_study(*seed1_study, ShrinkMode::weighted, SolverKind::admm, 0.03);
  const double gap = std::abs(final_snr(ne) - final_snr(admm));
  const std::size_t it_ne = iterations_to(ne, 0.95), it_admm = iterations_to(admm, 0.95);
  return {gap <= 0.5 && it_ne <= it_admm, "NE " + fmt("%.2f", final_snr(ne)) + " dB, ADMM " +
                                              fmt("%.2f", final_snr(admm)) + " dB; 95% at iter " +
                                              std::to_string(it_ne) + " vs " + std::to_string(it_admm)};
}

// ---- 9: metric units ----

Verdict metric_units() {
  std::mt19937_64 rng(1009);
  RealImage a(32, 32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& v : a.values()) v = u(rng);
  RealImage ref(1, 2), rec(1, 2);
  ref[0] = 0.0;
  ref[1] = 2.0;
  rec[0] = rec[1] = 1.0;
  const double s = ssim(a, a), h = hfen(a, a), z = snr_db(ref, rec);
  return {s == 1.0 && h == 0.0 && z == 0.0,
          "ssim " + fmt("%.17g", s) + ", hfen " + fmt("%g", h) + ", snr at MSE=Var " + fmt("%g", z) + " dB"};
}

// ---- 10: thread-count determinism through the tool ----

Verdict determinism() {
  testing::TempDir d("accept_det");
  std::vector<std::vector<std::string>> snapshots;
  const std::vector<std::string> files = {"k", "ref", "m", "w", "x", "sos", "log.csv", "run.json",
                                          "ax", "alog.csv", "arun.json"};
  for (const char* threads : {"1", "4"}) {
    const std::string t = threads;
    const std::vector<std::string> g = {"--threads", t, "--no-timing"};
    auto with = [&](std::vector<std::string> a) {
      a.insert(a.begin(), g.begin(), g.end());
      return tool(a);
    };
    if (with({"phantom", "--seed", "3", "--out-kspace", d / "k", "--out-reference", d / "ref"}) != 0 ||
        with({"mask", "--af", "3", "--seed", "3", "--out", d / "m"}) != 0 ||
        with({"calibrate", "--kspace", d / "k", "--mask", d / "m", "--out", d / "w", "--report", d / "cal.json"}) != 0 ||
        with({"reconstruct", "--kspace", d / "k", "--mask", d / "m", "--kernel", d / "w", "--reference", d / "ref",
              "--out", d / "x", "--out-sos", d / "sos", "--log", d / "log.csv", "--manifest", d / "run.json"}) != 0 ||
        with({"reconstruct", "--kspace", d / "k", "--mask", d / "m", "--solver", "admm", "--max-iter", "6", "--out",
              d / "ax", "--log", d / "alog.csv", "--manifest", d / "arun.json"}) != 0)
      return {false, "tool run failed with " + t + " threads"};
    std::vector<std::string> snap;
    for (const auto& f : files) snap.push_back(slurp(d / f));
    snapshots.push_back(std::move(snap));
    for (const auto& f : files) std::filesystem::remove(d / f);
  }
  std::size_t same = 0;
  for (std::size_t i = 0; i < files.size(); ++i) same += snapshots[0][i] == snapshots[1][i] && !snapshots[0][i].empty();
  return {same == files.size(),
          std::to_string(same) + "/" + std::to_string(files.size()) + " files identical across 1 and 4 threads"};
}

} // namespace

int main() {
  struct Criterion {
    int id;
    double limit_s;
    std::function<Verdict()> check;
  };
  const std::vector<Criterion> all = {
      {1, 10, shrinkage_oracle}, {2, 5, adjoints},      {3, 5, aggregation},     {4, 30, calibration},
      {5, 10, x_update_optimality}, {6, 60, fully_sampled}, {7, 600, phantom_study}, {8, 900, ne_vs_admm},
      {9, 1, metric_units},      {10, 300, determinism},
  };
  int failed = 0;
  for (const auto& c : all) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = v.pass && secs < c.limit_s;
    failed += !pass;
    std::printf("criterion %d: %s (%s; %.1f s of %.0f s)\n", c.id, pass ? "PASS" : "FAIL", v.detail.c_str(), secs,
                c.limit_s);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
