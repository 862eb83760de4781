#include "nlrspirit/cli.hpp"

#include "nlrspirit/container.hpp"
#include "nlrspirit/parallel.hpp"
#include "nlrspirit/sampling.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace nlrspirit {

namespace {

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  // Shortest text that parses back to the same double.
  char buf[40];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(fmt_double(v)); }

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

void report_error(const std::string& code, const std::string& message) {
  std::cerr << "error: code=" << code << " message=\"" << one_line(message) << "\"\n";
}

SsimForm parse_ssim_form(const std::string& s) {
  if (s == "standard") return SsimForm::standard;
  if (s == "published") return SsimForm::as_published;
  throw std::invalid_argument("unknown SSIM form '" + s + "'");
}

// Reconstruction options shared by `reconstruct` and `sweep`.
struct ConfigFlags {
  ReconConfig cfg;
  std::string solver = "ne";
  std::string mode = "weighted";
  std::optional<std::size_t> max_iter;
  std::optional<double> tol;

  void attach(CLI::App* app) {
    app->add_option("--solver", solver, "ne | admm")->check(CLI::IsMember({"ne", "admm"}))->capture_default_str();
    app->add_option("--mode", mode, "weighted | nuclear")
        ->check(CLI::IsMember({"weighted", "nuclear"}))
        ->capture_default_str();
    app->add_option("--mu1", cfg.mu1, "calibration-consistency weight")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--mu2", cfg.mu2, "low-rank prior weight")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--delta", cfg.shrink.delta, "shrinkage scale")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--beta", cfg.beta, "splitting penalty")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--eta", cfg.eta, "multiplier step")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--b0", cfg.shrink.b0, "weight constant")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--patch", cfg.matching.patch_side, "patch side")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--group-size", cfg.matching.group_size, "patches per group")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--window", cfg.matching.window, "search window side")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--stride", cfg.matching.stride, "reference patch stride")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--period", cfg.regroup_period, "block matching every this many iterations")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--max-iter", max_iter,
                    "at most this many iterations (default 30 for 2D masks, 80 for column masks)")
        ->check(CLI::PositiveNumber);
    app->add_option("--tol", tol, "stop once RE < tol (default 1e-4 for 2D masks, 5e-5 for column masks)")
        ->check(CLI::PositiveNumber);
    app->add_option("--beta1", cfg.beta1, "admm: Z penalty (default beta)")->check(CLI::PositiveNumber);
    app->add_option("--beta2", cfg.beta2, "admm: group penalty (default beta)")->check(CLI::PositiveNumber);
    app->add_option("--beta3", cfg.beta3, "admm: B penalty (default beta)")->check(CLI::PositiveNumber);
    app->add_option("--eta1", cfg.eta1, "admm: Z multiplier step (default eta)")->check(CLI::PositiveNumber);
    app->add_option("--eta2", cfg.eta2, "admm: group multiplier step (default eta)")->check(CLI::PositiveNumber);
    app->add_option("--eta3", cfg.eta3, "admm: B multiplier step (default eta)")->check(CLI::PositiveNumber);
  }

  ReconConfig resolve(const SamplingMask& mask) const {
    ReconConfig c = cfg;
    const ReconConfig dims = is_column_pattern(mask) ? ReconConfig::for_one_dimensional_sampling() : ReconConfig{};
    c.max_iter = max_iter.value_or(dims.max_iter);
    c.tol = tol.value_or(dims.tol);
    c.solver = parse_solver_kind(solver);
    c.shrink.mode = parse_shrink_mode(mode);
    c.beta1 = c.beta1.value_or(c.beta);
    c.beta2 = c.beta2.value_or(c.beta);
    c.beta3 = c.beta3.value_or(c.beta);
    c.eta1 = c.eta1.value_or(c.eta);
    c.eta2 = c.eta2.value_or(c.eta);
    c.eta3 = c.eta3.value_or(c.eta);
    c.validate();
    return c;
  }
};

// Flags that reproduce a resolved config exactly.
std::vector<std::string> config_args(const ReconConfig& c) {
  std::vector<std::string> a = {"--solver",     std::string(to_string(c.solver)),
                                "--mode",       std::string(to_string(c.shrink.mode)),
                                "--mu1",        fmt_double(c.mu1),
                                "--mu2",        fmt_double(c.mu2),
                                "--delta",      fmt_double(c.shrink.delta),
                                "--beta",       fmt_double(c.beta),
                                "--eta",        fmt_double(c.eta),
                                "--b0",         fmt_double(c.shrink.b0),
                                "--patch",      std::to_string(c.matching.patch_side),
                                "--group-size", std::to_string(c.matching.group_size),
                                "--window",     std::to_string(c.matching.window),
                                "--stride",     std::to_string(c.matching.stride),
                                "--period",     std::to_string(c.regroup_period),
                                "--max-iter",   std::to_string(c.max_iter),
                                "--tol",        fmt_double(c.tol)};
  const std::pair<const char*, std::optional<double>> extra[] = {{"--beta1", c.beta1}, {"--beta2", c.beta2},
                                                                 {"--beta3", c.beta3}, {"--eta1", c.eta1},
                                                                 {"--eta2", c.eta2},   {"--eta3", c.eta3}};
  for (const auto& [flag, v] : extra)
    if (v) {
      a.push_back(flag);
      a.push_back(fmt_double(*v));
    }
  return a;
}

struct CalibFlags {
  std::size_t ks = 5;
  std::optional<std::size_t> acs;
  std::optional<double> lambda;

  void attach(CLI::App* app) {
    app->add_option("--ks", ks, "kernel side (odd)")
        ->check(CLI::PositiveNumber)
        ->check([](const std::string& s) { return std::stoul(s) % 2 == 1 ? "" : "kernel side must be odd"; })
        ->capture_default_str();
    app->add_option("--acs", acs, "calibrate on the centered acs x acs block (default: the mask's ACS block)")
        ->check(CLI::PositiveNumber);
    app->add_option("--lambda", lambda, "ridge weight (default 1e-6 ||M||_F^2 / rows)")->check(CLI::NonNegativeNumber);
  }
};

std::pair<IndexRange, IndexRange> calibration_block(const SamplingMask& mask, std::optional<std::size_t> acs) {
  if (!acs) return {mask.acs_rows(), mask.acs_cols()};
  const IndexRange rows = centered_range(mask.nx(), *acs), cols = centered_range(mask.ny(), *acs);
  for (std::size_t x = rows.begin; x < rows.end; ++x)
    for (std::size_t y = cols.begin; y < cols.end; ++y)
      if (!mask.kept(x, y))
        throw std::invalid_argument("the requested " + std::to_string(*acs) + "x" + std::to_string(*acs) +
                                    " calibration block is not fully sampled by the mask");
  return {rows, cols};
}

nlohmann::json metrics_json(const MetricReport& m) {
  return {{"snr_db", json_number(m.snr_db)}, {"hfen", json_number(m.hfen)}, {"ssim", json_number(m.ssim)}};
}

struct Globals {
  std::optional<std::size_t> threads;
  bool no_timing = false;
};

// ---- phantom ----

struct PhantomCmd {
  PhantomSpec spec;
  std::string out_kspace, out_reference, out_image, out_roi;

  void attach(CLI::App* app) {
    app->add_option("--nx", spec.nx, "rows")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--ny", spec.ny, "columns")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--coils", spec.n_coils, "receive coils")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--seed", spec.seed, "noise seed")->capture_default_str();
    app->add_option("--noise", spec.noise_sigma, "complex noise std")->check(CLI::NonNegativeNumber)->capture_default_str();
    app->add_option("--amplitude", spec.amplitude, "peak magnitude")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--edge-blur", spec.edge_blur, "edge smoothing std in pixels, 0 for sharp")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    app->add_option("--out-kspace", out_kspace, "fully sampled multicoil k-space")->required();
    app->add_option("--out-reference", out_reference, "reference magnitude image")->required();
    app->add_option("--out-image", out_image, "multicoil image");
    app->add_option("--out-roi", out_roi, "object support mask");
  }

  int run() const {
    const Phantom ph = make_phantom(spec);
    write_container(out_kspace, to_container(fft2_coils(ph.coils)));
    write_container(out_reference, to_container(ph.reference));
    if (!out_image.empty()) write_container(out_image, to_container(ph.coils));
    if (!out_roi.empty()) write_container(out_roi, to_container(ph.support));
    return 0;
  }
};

// ---- mask ----

struct MaskCmd {
  MaskSpec spec;
  std::string pattern = "poisson2d";
  std::optional<std::size_t> acs;
  std::size_t nx = 64, ny = 64;
  std::string out;

  void attach(CLI::App* app) {
    app->add_option("--pattern", pattern, "poisson2d | uniform1d | gaussian1d | full")
        ->check(CLI::IsMember({"poisson2d", "uniform1d", "gaussian1d", "full"}))
        ->capture_default_str();
    app->add_option("--af", spec.af_target, "target acceleration")->check(CLI::Range(1.0, 1e6))->capture_default_str();
    app->add_option("--acs-rows", spec.acs_rows, "ACS rows")->capture_default_str();
    app->add_option("--acs-cols", spec.acs_cols, "ACS columns")->capture_default_str();
    app->add_option("--acs", acs, "square ACS block (sets both)");
    app->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
    app->add_option("--step", spec.step, "uniform1d: exact column step")->check(CLI::PositiveNumber);
    app->add_option("--gaussian-width", spec.gaussian_width, "gaussian1d: density std / ny")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    app->add_option("--nx", nx, "rows")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--ny", ny, "columns")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--out", out, "mask container")->required();
  }

  int run() {
    spec.pattern = parse_mask_pattern(pattern);
    if (acs) spec.acs_rows = spec.acs_cols = *acs;
    const MaskResult r = make_mask(spec, nx, ny);
    write_container(out, to_container(r.mask));
    nlohmann::json j{{"pattern", pattern},
                     {"af", r.mask.acceleration()},
                     {"samples", r.mask.count()},
                     {"acs_rows", r.mask.acs_rows().size()},
                     {"acs_cols", r.mask.acs_cols().size()}};
    if (spec.pattern == MaskPattern::poisson2d) j["poisson_radius"] = r.poisson_radius;
    std::cout << j.dump() << "\n";
    return 0;
  }
};

// ---- calibrate ----

struct CalibrateCmd {
  std::string kspace, mask, out, report;
  CalibFlags calib;

  void attach(CLI::App* app) {
    app->add_option("--kspace", kspace, "multicoil k-space")->required()->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "sampling mask (sets the ACS block)")->check(CLI::ExistingFile);
    calib.attach(app);
    app->add_option("--out", out, "kernel container")->required();
    app->add_option("--report", report, "calibration report JSON (default: stdout)");
  }

  int run() const {
    KSpaceData y = read_kspace(kspace);
    SamplingMask m = mask.empty() ? SamplingMask::full(y.nx(), y.ny()) : read_mask(mask);
    if (mask.empty() && !calib.acs) throw std::invalid_argument("--acs is required without --mask");
    y = apply_mask(std::move(y), m);
    const auto [rows, cols] = calibration_block(m, calib.acs);
    const CalibrationReport r = calibrate(y, rows, cols, calib.ks, calib.lambda);
    write_container(out, to_container(r.kernel));
    nlohmann::json j{{"ks", calib.ks},
                     {"acs_rows", rows.size()},
                     {"acs_cols", cols.size()},
                     {"equations", r.equations},
                     {"unknowns", r.unknowns},
                     {"relative_residual", r.relative_residual},
                     {"lambda", r.lambda},
                     {"eigen_ratio", r.eigen_ratio},
                     {"ill_conditioned", r.ill_conditioned}};
    if (report.empty())
      std::cout << j.dump() << "\n";
    else
      write_text_atomic(report, j.dump(2) + "\n");
    return 0;
  }
};

// ---- reconstruct ----

struct ReconstructCmd {
  std::string kspace, mask, kernel, reference, roi, ssim_form = "standard";
  std::string out, out_sos, log, manifest;
  CalibFlags calib;
  ConfigFlags flags;

  void attach(CLI::App* app) {
    app->add_option("--kspace", kspace, "multicoil k-space (masked internally)")->required()->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "sampling mask")->required()->check(CLI::ExistingFile);
    app->add_option("--kernel", kernel, "calibrated kernel (default: calibrate from the ACS block)")
        ->check(CLI::ExistingFile);
    calib.attach(app);
    flags.attach(app);
    app->add_option("--reference", reference, "reference magnitude image for per-iteration metrics")
        ->check(CLI::ExistingFile);
    app->add_option("--roi", roi, "metric ROI mask")->check(CLI::ExistingFile);
    app->add_option("--ssim-form", ssim_form, "standard | published")
        ->check(CLI::IsMember({"standard", "published"}))
        ->capture_default_str();
    app->add_option("--out", out, "reconstructed multicoil image");
    app->add_option("--out-sos", out_sos, "reconstructed SOS image");
    app->add_option("--log", log, "iteration log CSV");
    app->add_option("--manifest", manifest, "run manifest JSON");
  }

  int run(const Globals& g) const {
    const std::string started = g.no_timing ? "" : utc_timestamp();
    KSpaceData y = read_kspace(kspace);
    const SamplingMask m = read_mask(mask);
    if (m.nx() != y.nx() || m.ny() != y.ny()) throw ShapeError("mask and k-space differ in shape");
    y = apply_mask(std::move(y), m);
    const ReconConfig cfg = flags.resolve(m);

    nlohmann::json calib_json;
    CalibKernel k;
    if (!kernel.empty()) {
      k = read_kernel(kernel);
      calib_json = {{"source", "file"}};
    } else {
      const auto [rows, cols] = calibration_block(m, calib.acs);
      const CalibrationReport r = calibrate(y, rows, cols, calib.ks, calib.lambda);
      k = r.kernel;
      calib_json = {{"source", "auto"}, {"ks", calib.ks}, {"acs_rows", rows.size()}, {"acs_cols", cols.size()}};
      if (calib.lambda) calib_json["lambda"] = *calib.lambda;
    }

    RealImage ref_img;
    BinaryImage roi_img;
    Reference ref;
    ref.ssim_form = parse_ssim_form(ssim_form);
    if (!reference.empty()) {
      ref_img = read_real(reference);
      ref.image = &ref_img;
    }
    if (!roi.empty()) {
      roi_img = read_binary(roi);
      ref.roi = &roi_img;
    }

    const ReconResult res = reconstruct(y, m, k, cfg, ref);

    std::vector<FileDigest> outputs;
    auto emit = [&](const std::string& path, const std::string& role, auto&& writer) {
      if (path.empty()) return;
      writer(path);
      outputs.push_back({role, path, sha256_file(path)});
    };
    emit(out, "image", [&](const std::string& p) { write_container(p, to_container(res.coils)); });
    emit(out_sos, "sos", [&](const std::string& p) { write_container(p, to_container(res.sos)); });
    emit(log, "log", [&](const std::string& p) { write_text_atomic(p, iteration_log_csv(res.log, g.no_timing)); });

    if (!manifest.empty()) {
      RunManifest mf;
      mf.tool_version = kToolVersion;
      mf.command = "reconstruct";
      std::vector<std::string> args = {"reconstruct", "--kspace", kspace, "--mask", mask};
      std::vector<FileDigest> inputs = {{"kspace", kspace, sha256_file(kspace)}, {"mask", mask, sha256_file(mask)}};
      if (!kernel.empty()) {
        args.insert(args.end(), {"--kernel", kernel});
        inputs.push_back({"kernel", kernel, sha256_file(kernel)});
      } else {
        args.insert(args.end(), {"--ks", std::to_string(calib.ks)});
        if (calib.acs) args.insert(args.end(), {"--acs", std::to_string(*calib.acs)});
        if (calib.lambda) args.insert(args.end(), {"--lambda", fmt_double(*calib.lambda)});
      }
      if (!reference.empty()) {
        args.insert(args.end(), {"--reference", reference, "--ssim-form", ssim_form});
        inputs.push_back({"reference", reference, sha256_file(reference)});
      }
      if (!roi.empty()) {
        args.insert(args.end(), {"--roi", roi});
        inputs.push_back({"roi", roi, sha256_file(roi)});
      }
      const auto ca = config_args(cfg);
      args.insert(args.end(), ca.begin(), ca.end());
      for (const auto& [flag, path] : {std::pair{"--out", out}, {"--out-sos", out_sos}, {"--log", log}})
        if (!path.empty()) args.insert(args.end(), {flag, path});
      if (g.no_timing) args.push_back("--no-timing");

      mf.config = {{"recon", to_json(cfg)}, {"calibration", calib_json}, {"replay_args", args}};
      mf.inputs = std::move(inputs);
      mf.outputs = outputs;
      if (!g.no_timing) {
        mf.started_at = started;
        mf.finished_at = utc_timestamp();
      }
      write_text_atomic(manifest, to_json(mf).dump(2) + "\n");
    }

    nlohmann::json summary{{"iterations", res.log.records.size()},
                           {"converged", res.log.converged},
                           {"final_re", res.log.records.empty() ? 0.0 : res.log.records.back().re}};
    if (!res.log.records.empty() && res.log.records.back().metrics)
      summary["metrics"] = metrics_json(*res.log.records.back().metrics);
    std::cout << summary.dump() << "\n";
    return 0;
  }
};

// ---- metrics ----

struct MetricsCmd {
  std::string reference, recon, roi, ssim_form = "standard", format = "json", out;

  void attach(CLI::App* app) {
    app->add_option("--reference", reference, "reference magnitude image")->required()->check(CLI::ExistingFile);
    app->add_option("--recon", recon, "reconstruction (real image, or multicoil combined by SOS)")
        ->required()
        ->check(CLI::ExistingFile);
    app->add_option("--roi", roi, "ROI mask")->check(CLI::ExistingFile);
    app->add_option("--ssim-form", ssim_form, "standard | published")
        ->check(CLI::IsMember({"standard", "published"}))
        ->capture_default_str();
    app->add_option("--format", format, "json | csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
    app->add_option("--out", out, "report file (default: stdout)");
  }

  int run() const {
    const RealImage ref = read_real(reference);
    const Container rc = read_container(recon);
    const RealImage rec = rc.header.kind == PayloadKind::complex_multicoil ? sos_combine(image_from(rc)) : real_from(rc);
    BinaryImage roi_img;
    if (!roi.empty()) roi_img = read_binary(roi);
    const MetricReport m = evaluate(ref, rec, roi.empty() ? nullptr : &roi_img, parse_ssim_form(ssim_form));
    std::string text;
    if (format == "json")
      text = metrics_json(m).dump() + "\n";
    else
      text = "snr_db,hfen,ssim\n" + fmt_double(m.snr_db) + "," + fmt_double(m.hfen) + "," + fmt_double(m.ssim) + "\n";
    if (out.empty())
      std::cout << text;
    else
      write_text_atomic(out, text);
    return 0;
  }
};

// ---- sweep ----

struct SweepCmd {
  std::string kspace, mask, reference, roi, ssim_form = "standard", out;
  std::string delta = "1:6:1", beta = "0.1:1:0.1";
  std::vector<std::size_t> ks_list{5};
  std::vector<std::size_t> acs_list;
  std::optional<double> lambda;
  ConfigFlags flags;

  void attach(CLI::App* app) {
    app->add_option("--kspace", kspace, "multicoil k-space")->required()->check(CLI::ExistingFile);
    app->add_option("--mask", mask, "sampling mask")->required()->check(CLI::ExistingFile);
    app->add_option("--reference", reference, "reference magnitude image")->required()->check(CLI::ExistingFile);
    app->add_option("--roi", roi, "ROI mask")->check(CLI::ExistingFile);
    app->add_option("--ssim-form", ssim_form, "standard | published")
        ->check(CLI::IsMember({"standard", "published"}))
        ->capture_default_str();
    app->add_option("--delta", delta, "shrinkage scale grid lo:hi:step")->capture_default_str();
    app->add_option("--beta", beta, "penalty grid lo:hi:step")->capture_default_str();
    app->add_option("--ks", ks_list, "kernel sides to try")->delimiter(',')->capture_default_str();
    app->add_option("--acs", acs_list, "square calibration blocks to try (default: the mask's ACS)")->delimiter(',');
    app->add_option("--lambda", lambda, "ridge weight")->check(CLI::NonNegativeNumber);
    // Everything except delta and beta, which the grid owns.
    ConfigFlags* f = &flags;
    app->add_option("--solver", f->solver, "ne | admm")->check(CLI::IsMember({"ne", "admm"}))->capture_default_str();
    app->add_option("--mode", f->mode, "weighted | nuclear")
        ->check(CLI::IsMember({"weighted", "nuclear"}))
        ->capture_default_str();
    app->add_option("--max-iter", f->max_iter, "iteration cap")->check(CLI::PositiveNumber);
    app->add_option("--tol", f->tol, "RE tolerance")->check(CLI::PositiveNumber);
    app->add_option("--patch", f->cfg.matching.patch_side, "patch side")->check(CLI::PositiveNumber);
    app->add_option("--group-size", f->cfg.matching.group_size, "patches per group")->check(CLI::PositiveNumber);
    app->add_option("--window", f->cfg.matching.window, "search window side")->check(CLI::PositiveNumber);
    app->add_option("--stride", f->cfg.matching.stride, "reference stride")->check(CLI::PositiveNumber);
    app->add_option("--out", out, "CSV (default: stdout)");
  }

  int run() const {
    const auto deltas = parse_grid(delta), betas = parse_grid(beta);
    KSpaceData y = read_kspace(kspace);
    const SamplingMask m = read_mask(mask);
    y = apply_mask(std::move(y), m);
    const RealImage ref_img = read_real(reference);
    BinaryImage roi_img;
    if (!roi.empty()) roi_img = read_binary(roi);
    Reference ref{&ref_img, roi.empty() ? nullptr : &roi_img, parse_ssim_form(ssim_form)};

    std::vector<std::optional<std::size_t>> acs_opts;
    if (acs_list.empty()) acs_opts.push_back(std::nullopt);
    for (auto a : acs_list) acs_opts.emplace_back(a);

    std::ostringstream csv;
    csv << "delta,beta,ks,acs,iterations,converged,snr_db,hfen,ssim\n";
    for (std::size_t ks : ks_list) {
      if (ks % 2 == 0) throw std::invalid_argument("kernel side must be odd");
      for (const auto& acs : acs_opts) {
        const auto [rows, cols] = calibration_block(m, acs);
        const CalibKernel k = calibrate(y, rows, cols, ks, lambda).kernel;
        for (double d : deltas)
          for (double b : betas) {
            ConfigFlags f = flags;
            f.cfg.shrink.delta = d;
            f.cfg.beta = b;
            const ReconConfig cfg = f.resolve(m);
            const ReconResult r = reconstruct(y, m, k, cfg, {});
            const MetricReport met = evaluate(ref_img, r.sos, ref.roi, ref.ssim_form);
            csv << fmt_double(d) << "," << fmt_double(b) << "," << ks << "," << rows.size() << "x" << cols.size()
                << "," << r.log.records.size() << "," << (r.log.converged ? 1 : 0) << "," << fmt_double(met.snr_db)
                << "," << fmt_double(met.hfen) << "," << fmt_double(met.ssim) << "\n";
          }
      }
    }
    if (out.empty())
      std::cout << csv.str();
    else
      write_text_atomic(out, csv.str());
    return 0;
  }
};

// ---- replay ----

struct ReplayCmd {
  std::string manifest;
  bool check = false;

  void attach(CLI::App* app) {
    app->add_option("--manifest", manifest, "manifest written by reconstruct")->required()->check(CLI::ExistingFile);
    app->add_flag("--check", check, "fail unless every output is byte-identical to the recorded one");
  }

  int run() const {
    std::ifstream f(manifest);
    const RunManifest mf = manifest_from_json(nlohmann::json::parse(f));
    if (mf.command != "reconstruct") throw std::invalid_argument("only reconstruct runs can be replayed");
    verify_inputs(mf);
    std::vector<std::string> args = {"nlrspirit"};
    for (const auto& a : mf.config.at("replay_args")) args.push_back(a.get<std::string>());
    const int rc = cli_main(args);
    if (rc != 0 || !check) return rc;
    for (const auto& o : mf.outputs) {
      const std::string now = sha256_file(o.path);
      if (now != o.sha256)
        throw ContainerError("digest_mismatch", "replayed output '" + o.role + "' (" + o.path + ") differs");
    }
    return 0;
  }
};

} // namespace

std::vector<double> parse_grid(const std::string& spec) {
  auto num = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty() || !std::isfinite(v)) throw std::invalid_argument("bad grid value '" + s + "'");
    return v;
  };
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
  if (parts.size() == 1) return {num(parts[0])};
  if (parts.size() != 3) throw std::invalid_argument("grid must be 'lo:hi:step' or a single value, got '" + spec + "'");
  const double lo = num(parts[0]), hi = num(parts[1]), step = num(parts[2]);
  if (!(step > 0.0) || hi < lo) throw std::invalid_argument("grid needs lo <= hi and step > 0, got '" + spec + "'");
  const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + static_cast<double>(i) * step;
  return out;
}

bool is_column_pattern(const SamplingMask& mask) {
  bool dropped = false;
  for (std::size_t y = 0; y < mask.ny(); ++y) {
    const bool first = mask.kept(0, y);
    for (std::size_t x = 1; x < mask.nx(); ++x)
      if (mask.kept(x, y) != first) return false;
    if (!first) dropped = true;
  }
  return dropped;
}

nlohmann::json to_json(const ReconConfig& c) {
  nlohmann::json j{{"solver", to_string(c.solver)},
                   {"mode", to_string(c.shrink.mode)},
                   {"mu1", c.mu1},
                   {"mu2", c.mu2},
                   {"delta", c.shrink.delta},
                   {"beta", c.beta},
                   {"eta", c.eta},
                   {"b0", c.shrink.b0},
                   {"epsilon", c.shrink.epsilon},
                   {"patch_side", c.matching.patch_side},
                   {"group_size", c.matching.group_size},
                   {"window", c.matching.window},
                   {"stride", c.matching.stride},
                   {"period", c.regroup_period},
                   {"max_iter", c.max_iter},
                   {"tol", c.tol}};
  const std::pair<const char*, std::optional<double>> extra[] = {{"beta1", c.beta1}, {"beta2", c.beta2},
                                                                 {"beta3", c.beta3}, {"eta1", c.eta1},
                                                                 {"eta2", c.eta2},   {"eta3", c.eta3}};
  for (const auto& [k, v] : extra)
    if (v) j[k] = *v;
  return j;
}

ReconConfig recon_config_from_json(const nlohmann::json& j) {
  ReconConfig c;
  c.solver = parse_solver_kind(j.at("solver").get<std::string>());
  c.shrink.mode = parse_shrink_mode(j.at("mode").get<std::string>());
  c.mu1 = j.at("mu1");
  c.mu2 = j.at("mu2");
  c.shrink.delta = j.at("delta");
  c.beta = j.at("beta");
  c.eta = j.at("eta");
  c.shrink.b0 = j.at("b0");
  c.shrink.epsilon = j.at("epsilon");
  c.matching.patch_side = j.at("patch_side");
  c.matching.group_size = j.at("group_size");
  c.matching.window = j.at("window");
  c.matching.stride = j.at("stride");
  c.regroup_period = j.at("period");
  c.max_iter = j.at("max_iter");
  c.tol = j.at("tol");
  for (auto [k, dst] : {std::pair{"beta1", &c.beta1}, {"beta2", &c.beta2}, {"beta3", &c.beta3}, {"eta1", &c.eta1},
                        {"eta2", &c.eta2}, {"eta3", &c.eta3}})
    if (j.contains(k)) *dst = j[k].get<double>();
  c.validate();
  return c;
}

std::string iteration_log_csv(const IterationLog& log, bool zero_time) {
  const bool with_metrics = !log.records.empty() && log.records.front().metrics.has_value();
  std::string s = with_metrics ? "iter,re,elapsed_s,snr_db,hfen,ssim\n" : "iter,re,elapsed_s\n";
  for (const auto& r : log.records) {
    s += std::to_string(r.iter) + "," + fmt_double(r.re) + "," + fmt_double(zero_time ? 0.0 : r.elapsed_s);
    if (with_metrics && r.metrics)
      s += "," + fmt_double(r.metrics->snr_db) + "," + fmt_double(r.metrics->hfen) + "," + fmt_double(r.metrics->ssim);
    s += "\n";
  }
  return s;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Nonlocal low-rank regularized SPIRiT reconstruction for parallel MRI", "nlrspirit"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "worker threads (default: $NLRSPIRIT_THREADS or all cores)")
      ->check(CLI::PositiveNumber);
  app.add_flag("--no-timing", g.no_timing, "write elapsed_s as 0 and omit manifest timestamps");

  PhantomCmd phantom;
  MaskCmd mask;
  CalibrateCmd calibrate_cmd;
  ReconstructCmd recon;
  MetricsCmd metrics;
  SweepCmd sweep;
  ReplayCmd replay;
  auto* s_ph = app.add_subcommand("phantom", "synthetic multicoil phantom: k-space and reference");
  auto* s_mask = app.add_subcommand("mask", "undersampling mask");
  auto* s_cal = app.add_subcommand("calibrate", "fit the calibration kernel on the ACS block");
  auto* s_rec = app.add_subcommand("reconstruct", "reconstruct undersampled k-space; runs at most --max-iter iterations");
  auto* s_met = app.add_subcommand("metrics", "SNR, HFEN and SSIM against a reference");
  auto* s_sw = app.add_subcommand("sweep", "metric surface over delta x beta (and kernel/ACS sizes)");
  auto* s_rp = app.add_subcommand("replay", "rerun a reconstruction from its manifest");
  phantom.attach(s_ph);
  mask.attach(s_mask);
  calibrate_cmd.attach(s_cal);
  recon.attach(s_rec);
  metrics.attach(s_met);
  sweep.attach(s_sw);
  replay.attach(s_rp);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 1;
  }

  try {
    if (g.threads) set_thread_count(*g.threads);
    if (s_ph->parsed()) return phantom.run();
    if (s_mask->parsed()) return mask.run();
    if (s_cal->parsed()) return calibrate_cmd.run();
    if (s_rec->parsed()) return recon.run(g);
    if (s_met->parsed()) return metrics.run();
    if (s_sw->parsed()) return sweep.run();
    if (s_rp->parsed()) return replay.run();
  } catch (const ContainerError& e) {
    report_error(e.code(), e.what());
  } catch (const DivergenceError& e) {
    report_error("diverged", e.what());
  } catch (const InfeasibleMask& e) {
    report_error("infeasible_mask", e.what());
  } catch (const WindowTooSmall& e) {
    report_error("window_too_small", e.what());
  } catch (const UnderdeterminedCalibration& e) {
    report_error("underdetermined_calibration", e.what());
  } catch (const ShapeError& e) {
    report_error("shape", e.what());
  } catch (const nlohmann::json::exception& e) {
    report_error("bad_json", e.what());
  } catch (const std::invalid_argument& e) {
    report_error("invalid_argument", e.what());
  } catch (const std::exception& e) {
    report_error("runtime", e.what());
  }
  return 2;
}

} // namespace nlrspirit
