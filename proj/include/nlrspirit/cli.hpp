#pragma once

#include "nlrspirit/solver.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace nlrspirit {

inline constexpr const char* kToolVersion = "0.1.0";

/// Entry point of the `nlrspirit` tool. Exit codes: 0 success, 1 usage error,
/// 2 runtime error. Errors go to stderr as one line:
///   error: code=<id> message="<text>"
int cli_main(int argc, const char* const* argv);
/// Same, with argv[0] supplied by the caller as args[0].
int cli_main(const std::vector<std::string>& args);

/// Inclusive grid "lo:hi:step", or a single value. Points are lo + i*step.
std::vector<double> parse_grid(const std::string& spec);

/// True when every column of the mask is either fully kept or fully dropped and
/// some are dropped, i.e. a phase-encode-only pattern.
bool is_column_pattern(const SamplingMask& mask);

nlohmann::json to_json(const ReconConfig& c);
ReconConfig recon_config_from_json(const nlohmann::json& j);

/// CSV text with columns iter,re,elapsed_s and, when metrics were logged,
/// snr_db,hfen,ssim. `zero_time` writes elapsed_s as 0 for reproducible logs.
std::string iteration_log_csv(const IterationLog& log, bool zero_time);

} // namespace nlrspirit
