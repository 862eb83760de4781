#include "nlrspirit/container.hpp"

#include <openssl/evp.h>

#include <bit>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <limits>
#include <memory>

namespace nlrspirit {

namespace fs = std::filesystem;

std::string_view to_string(PayloadKind k) {
  switch (k) {
  case PayloadKind::complex_multicoil: return "complex_multicoil";
  case PayloadKind::real_image: return "real_image";
  case PayloadKind::mask: return "mask";
  case PayloadKind::kernel: return "kernel";
  }
  return "unknown";
}

namespace {

std::size_t element_bytes(PayloadKind k) {
  switch (k) {
  case PayloadKind::complex_multicoil:
  case PayloadKind::kernel: return 8;
  case PayloadKind::real_image: return 4;
  case PayloadKind::mask: return 1;
  }
  throw ContainerError("bad_kind", "unknown payload kind");
}

void check_dims(const ContainerHeader& h) {
  const auto& d = h.dims;
  for (auto v : d)
    if (v == 0) throw ContainerError("bad_dims", "container extents must be positive");
  switch (h.kind) {
  case PayloadKind::complex_multicoil:
    if (d[3] != 1) throw ContainerError("bad_dims", "multicoil container needs dims (C, Nx, Ny, 1)");
    break;
  case PayloadKind::real_image:
  case PayloadKind::mask:
    if (d[0] != 1 || d[3] != 1) throw ContainerError("bad_dims", "image container needs dims (1, Nx, Ny, 1)");
    break;
  case PayloadKind::kernel:
    if (d[0] != d[1] || d[2] != d[3] || d[0] % 2 == 0)
      throw ContainerError("bad_dims", "kernel container needs dims (ks, ks, C, C) with odd ks");
    break;
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_f32(std::vector<std::uint8_t>& out, double v) { put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v))); }

double get_f32(const std::uint8_t* p) { return static_cast<double>(std::bit_cast<float>(get_u32(p))); }

void require_kind(const Container& c, PayloadKind k) {
  if (c.header.kind != k)
    throw ContainerError("kind_mismatch", "expected a " + std::string(to_string(k)) + " container, found " +
                                              std::string(to_string(c.header.kind)));
}

void write_bytes_atomic(const fs::path& path, const char* data, std::size_t size) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw ContainerError("io", "cannot open " + tmp.string() + " for writing");
    f.write(data, static_cast<std::streamsize>(size));
    f.flush();
    if (!f) {
      f.close();
      fs::remove(tmp);
      throw ContainerError("io", "write to " + tmp.string() + " failed");
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw ContainerError("io", "cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

} // namespace

std::uint64_t ContainerHeader::elements() const {
  std::uint64_t n = 1;
  for (auto v : dims) {
    if (v != 0 && n > std::numeric_limits<std::uint64_t>::max() / v)
      throw ContainerError("dim_overflow", "container extents overflow a 64-bit element count");
    n *= v;
  }
  return n;
}

std::uint64_t ContainerHeader::payload_bytes() const {
  const std::uint64_t n = elements();
  const std::uint64_t eb = element_bytes(kind);
  if (n > std::numeric_limits<std::uint64_t>::max() / eb)
    throw ContainerError("dim_overflow", "container payload size overflows 64 bits");
  return n * eb;
}

std::vector<std::uint8_t> encode_container(const Container& c) {
  const auto& h = c.header;
  if (h.version != kContainerVersion)
    throw ContainerError("version_mismatch", "can only write container version " + std::to_string(kContainerVersion));
  check_dims(h);
  const std::uint64_t n = h.elements();
  const std::size_t have = h.kind == PayloadKind::real_image ? c.real_values.size()
                           : h.kind == PayloadKind::mask     ? c.bytes.size()
                                                             : c.complex_values.size();
  if (have != n)
    throw ContainerError("invalid_payload",
                         "payload holds " + std::to_string(have) + " elements, dims need " + std::to_string(n));

  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + h.payload_bytes());
  out.insert(out.end(), {'P', 'M', 'R', 'I'});
  put_u32(out, h.version);
  out.push_back(static_cast<std::uint8_t>(h.kind));
  for (auto d : h.dims) put_u32(out, d);
  switch (h.kind) {
  case PayloadKind::complex_multicoil:
  case PayloadKind::kernel:
    for (const cx& v : c.complex_values) {
      put_f32(out, v.real());
      put_f32(out, v.imag());
    }
    break;
  case PayloadKind::real_image:
    for (double v : c.real_values) put_f32(out, v);
    break;
  case PayloadKind::mask:
    for (auto b : c.bytes) {
      if (b > 1) throw ContainerError("invalid_payload", "mask entries must be 0 or 1");
      out.push_back(b);
    }
    break;
  }
  return out;
}

Container decode_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "PMRI", 4) != 0)
    throw ContainerError("bad_magic", "not a PMRI container (bad magic)");
  if (bytes.size() < kHeaderBytes)
    throw ContainerError("truncated", "truncated header: expected " + std::to_string(kHeaderBytes) +
                                          " bytes, got " + std::to_string(bytes.size()));
  Container c;
  const std::uint8_t* p = bytes.data() + 4;
  c.header.version = get_u32(p);
  if (c.header.version != kContainerVersion)
    throw ContainerError("version_mismatch", "container version " + std::to_string(c.header.version) +
                                                 " is not supported (expected " + std::to_string(kContainerVersion) +
                                                 ")");
  const std::uint8_t kind = p[4];
  if (kind > 3) throw ContainerError("bad_kind", "unknown payload kind " + std::to_string(kind));
  c.header.kind = static_cast<PayloadKind>(kind);
  for (int i = 0; i < 4; ++i) c.header.dims[i] = get_u32(p + 5 + 4 * i);
  check_dims(c.header);

  const std::uint64_t payload = c.header.payload_bytes();
  if (payload > std::numeric_limits<std::uint64_t>::max() - kHeaderBytes)
    throw ContainerError("dim_overflow", "container size overflows 64 bits");
  const std::uint64_t expected = kHeaderBytes + payload;
  if (bytes.size() < expected)
    throw ContainerError("truncated", "truncated payload: expected " + std::to_string(expected) + " bytes, got " +
                                          std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw ContainerError("trailing_bytes", "container has " + std::to_string(bytes.size() - expected) +
                                               " bytes past the payload");

  const std::size_t n = static_cast<std::size_t>(c.header.elements());
  const std::uint8_t* d = bytes.data() + kHeaderBytes;
  switch (c.header.kind) {
  case PayloadKind::complex_multicoil:
  case PayloadKind::kernel:
    c.complex_values.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.complex_values[i] = cx(get_f32(d + 8 * i), get_f32(d + 8 * i + 4));
    break;
  case PayloadKind::real_image:
    c.real_values.resize(n);
    for (std::size_t i = 0; i < n; ++i) c.real_values[i] = get_f32(d + 4 * i);
    break;
  case PayloadKind::mask:
    c.bytes.assign(d, d + n);
    for (auto b : c.bytes)
      if (b > 1) throw ContainerError("invalid_payload", "mask entries must be 0 or 1");
    break;
  }
  return c;
}

void write_container(const fs::path& path, const Container& c) {
  const auto bytes = encode_container(c);
  write_bytes_atomic(path, reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

Container read_container(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("io", "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, text.data(), text.size());
}

Container to_container(const RealImage& x) {
  Container c;
  c.header.kind = PayloadKind::real_image;
  c.header.dims = {1, static_cast<std::uint32_t>(x.nx()), static_cast<std::uint32_t>(x.ny()), 1};
  c.real_values = x.storage();
  return c;
}

Container to_container(const SamplingMask& m) {
  Container c;
  c.header.kind = PayloadKind::mask;
  c.header.dims = {1, static_cast<std::uint32_t>(m.nx()), static_cast<std::uint32_t>(m.ny()), 1};
  c.bytes = m.keep().storage();
  return c;
}

Container to_container(const BinaryImage& b) {
  Container c;
  c.header.kind = PayloadKind::mask;
  c.header.dims = {1, static_cast<std::uint32_t>(b.nx()), static_cast<std::uint32_t>(b.ny()), 1};
  c.bytes = b.storage();
  return c;
}

Container to_container(const CalibKernel& k) {
  Container c;
  c.header.kind = PayloadKind::kernel;
  const auto ks = static_cast<std::uint32_t>(k.size()), C = static_cast<std::uint32_t>(k.coils());
  c.header.dims = {ks, ks, C, C};
  c.complex_values = k.weights();
  return c;
}

KSpaceData kspace_from(const Container& c) {
  require_kind(c, PayloadKind::complex_multicoil);
  const auto& d = c.header.dims;
  return KSpaceData(d[0], d[1], d[2], c.complex_values);
}

MultiCoilImage image_from(const Container& c) { return MultiCoilImage::reinterpret(kspace_from(c)); }

RealImage real_from(const Container& c) {
  require_kind(c, PayloadKind::real_image);
  return RealImage(c.header.dims[1], c.header.dims[2], c.real_values);
}

BinaryImage binary_from(const Container& c) {
  require_kind(c, PayloadKind::mask);
  return BinaryImage(c.header.dims[1], c.header.dims[2], c.bytes);
}

SamplingMask mask_from(const Container& c) {
  require_kind(c, PayloadKind::mask);
  BinaryImage keep(c.header.dims[1], c.header.dims[2], c.bytes);
  auto [rows, cols] = detect_centered_acs(keep);
  return SamplingMask(std::move(keep), rows, cols);
}

CalibKernel kernel_from(const Container& c) {
  require_kind(c, PayloadKind::kernel);
  try {
    return CalibKernel(c.header.dims[0], c.header.dims[2], c.complex_values);
  } catch (const std::invalid_argument& e) {
    throw ContainerError("invalid_payload", e.what());
  }
}

std::string sha256_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ContainerError("io", "cannot open " + path.string() + " for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 initialization failed");
  std::vector<char> buf(1 << 16);
  while (f) {
    f.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (f.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(f.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

namespace {

nlohmann::json digests_json(const std::vector<FileDigest>& ds) {
  auto arr = nlohmann::json::array();
  for (const auto& d : ds) arr.push_back({{"role", d.role}, {"path", d.path}, {"sha256", d.sha256}});
  return arr;
}

std::vector<FileDigest> digests_from(const nlohmann::json& arr) {
  std::vector<FileDigest> out;
  for (const auto& e : arr) out.push_back({e.at("role"), e.at("path"), e.at("sha256")});
  return out;
}

} // namespace

nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["command"] = m.command;
  j["config"] = m.config;
  if (m.seed) j["seed"] = *m.seed;
  j["inputs"] = digests_json(m.inputs);
  j["outputs"] = digests_json(m.outputs);
  if (m.started_at) j["started_at"] = *m.started_at;
  if (m.finished_at) j["finished_at"] = *m.finished_at;
  return j;
}

RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.tool_version = j.at("tool_version");
  m.command = j.at("command");
  m.config = j.at("config");
  if (j.contains("seed")) m.seed = j["seed"].get<std::uint64_t>();
  m.inputs = digests_from(j.at("inputs"));
  m.outputs = digests_from(j.at("outputs"));
  if (j.contains("started_at")) m.started_at = j["started_at"].get<std::string>();
  if (j.contains("finished_at")) m.finished_at = j["finished_at"].get<std::string>();
  return m;
}

void verify_inputs(const RunManifest& m) {
  for (const auto& d : m.inputs) {
    const std::string now = sha256_file(d.path);
    if (now != d.sha256)
      throw ContainerError("digest_mismatch", "input '" + d.role + "' (" + d.path + ") changed: stored sha256 " +
                                                  d.sha256 + ", now " + now);
  }
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

} // namespace nlrspirit
