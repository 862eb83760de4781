#pragma once

#include "nlrspirit/calibration.hpp"
#include "nlrspirit/tensor.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace nlrspirit {

// On-disk layout, all integers little-endian:
//   "PMRI" | u32 version | u8 kind | u32 dims[4] | payload
// Complex payloads are interleaved (re, im) float32, real payloads float32, masks one
// byte per entry (0 or 1). Elements run in dims order with the last index fastest.

inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kHeaderBytes = 4 + 4 + 1 + 4 * 4;

enum class PayloadKind : std::uint8_t { complex_multicoil = 0, real_image = 1, mask = 2, kernel = 3 };

std::string_view to_string(PayloadKind k);

struct ContainerHeader {
  std::uint32_t version = kContainerVersion;
  PayloadKind kind = PayloadKind::complex_multicoil;
  /// complex_multicoil: (C, Nx, Ny, 1); real_image and mask: (1, Nx, Ny, 1);
  /// kernel: (ks, ks, C, C).
  std::array<std::uint32_t, 4> dims{};

  std::uint64_t elements() const;
  std::uint64_t payload_bytes() const;
};

/// Read/write failures. `code` is a stable identifier for scripts: bad_magic,
/// version_mismatch, bad_kind, bad_dims, dim_overflow, truncated, trailing_bytes,
/// kind_mismatch, invalid_payload, io.
class ContainerError : public std::runtime_error {
public:
  ContainerError(std::string code, const std::string& what) : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

private:
  std::string code_;
};

/// Decoded container. Exactly one of the value vectors is filled, per header.kind.
struct Container {
  ContainerHeader header;
  std::vector<cx> complex_values;
  std::vector<double> real_values;
  std::vector<std::uint8_t> bytes;
};

/// Serializes to bytes. Values are narrowed to float32. Validates before encoding.
std::vector<std::uint8_t> encode_container(const Container& c);
Container decode_container(const std::vector<std::uint8_t>& bytes);

/// Writes through a temporary sibling file and renames it into place.
void write_container(const std::filesystem::path& path, const Container& c);
Container read_container(const std::filesystem::path& path);

template <class D>
Container to_container(const CoilStack<D>& x) {
  Container c;
  c.header.kind = PayloadKind::complex_multicoil;
  c.header.dims = {static_cast<std::uint32_t>(x.coils()), static_cast<std::uint32_t>(x.nx()),
                   static_cast<std::uint32_t>(x.ny()), 1};
  c.complex_values = x.storage();
  return c;
}
Container to_container(const RealImage& x);
Container to_container(const SamplingMask& m);
Container to_container(const CalibKernel& k);
Container to_container(const BinaryImage& b);

KSpaceData kspace_from(const Container& c);
MultiCoilImage image_from(const Container& c);
RealImage real_from(const Container& c);
/// The ACS block is recovered as the largest kept rectangle around the center.
SamplingMask mask_from(const Container& c);
CalibKernel kernel_from(const Container& c);
/// Raw 0/1 grid of a mask container, for ROIs that carry no ACS block.
BinaryImage binary_from(const Container& c);

inline KSpaceData read_kspace(const std::filesystem::path& p) { return kspace_from(read_container(p)); }
inline MultiCoilImage read_multicoil(const std::filesystem::path& p) { return image_from(read_container(p)); }
inline RealImage read_real(const std::filesystem::path& p) { return real_from(read_container(p)); }
inline SamplingMask read_mask(const std::filesystem::path& p) { return mask_from(read_container(p)); }
inline CalibKernel read_kernel(const std::filesystem::path& p) { return kernel_from(read_container(p)); }
inline BinaryImage read_binary(const std::filesystem::path& p) { return binary_from(read_container(p)); }

/// Writes text through a temporary sibling and a rename, like containers.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

struct FileDigest {
  std::string role;
  std::string path;
  std::string sha256;
};

/// Everything needed to replay a run: the subcommand, its full configuration, and
/// digests of its inputs and outputs.
struct RunManifest {
  std::string tool_version;
  std::string command;
  nlohmann::json config;
  std::optional<std::uint64_t> seed;
  std::vector<FileDigest> inputs;
  std::vector<FileDigest> outputs;
  /// ISO-8601 UTC; omitted when timing is disabled for reproducible output.
  std::optional<std::string> started_at;
  std::optional<std::string> finished_at;
};

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);

/// Recomputes every input digest; throws ContainerError("digest_mismatch") naming
/// the first file whose bytes changed.
void verify_inputs(const RunManifest& m);

/// Current UTC time as YYYY-MM-DDTHH:MM:SSZ.
std::string utc_timestamp();

} // namespace nlrspirit
