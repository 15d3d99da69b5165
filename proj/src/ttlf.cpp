#include "ttlora/ttlf.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "ttlora/error.hpp"

namespace ttlora {

namespace {

using json = nlohmann::json;

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  out.insert(out.end(), raw, raw + sizeof(T));
}

template <typename T>
T get_le(std::span<const std::uint8_t> bytes, std::size_t& offset) {
  require(offset + sizeof(T) <= bytes.size(), "truncated binary payload");
  std::uint8_t raw[sizeof(T)];
  std::memcpy(raw, bytes.data() + offset, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
  offset += sizeof(T);
  T value;
  std::memcpy(&value, raw, sizeof(T));
  return value;
}

constexpr char kMagic[4] = {'T', 'T', 'L', 'F'};
constexpr std::uint32_t kVersion = 1;

json manifest_to_json(const TTLFManifest& m) {
  json j;
  j["format_version"] = m.format_version;
  j["m"] = m.m;
  j["n"] = m.n;
  j["dims"] = m.dims;
  j["ranks"] = m.ranks;
  j["split"] = m.split;
  j["alpha"] = m.alpha;
  j["dtype"] = to_string(m.dtype);
  j["seed"] = m.seed;
  j["scheme"] = m.scheme;
  j["layer_label"] = m.layer_label;
  return j;
}

TTLFManifest manifest_from_json(const json& j) {
  TTLFManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    m.m = j.at("m").get<std::size_t>();
    m.n = j.at("n").get<std::size_t>();
    m.dims = j.at("dims").get<std::vector<std::size_t>>();
    m.ranks = j.at("ranks").get<std::vector<std::size_t>>();
    m.split = j.at("split").get<std::size_t>();
    m.alpha = j.at("alpha").get<double>();
    m.dtype = dtype_from_string(j.at("dtype").get<std::string>());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.scheme = j.at("scheme").get<std::string>();
    m.layer_label = j.at("layer_label").get<std::string>();
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("malformed TTLF manifest: ") + e.what());
  }
  require(m.format_version == 1, "unsupported TTLF format_version " + std::to_string(m.format_version));
  require(m.ranks.size() == m.dims.size() + 1, "TTLF manifest: ranks must have one more entry than dims");
  return m;
}

}  // namespace

std::size_t bytes_per_element(DType dtype) {
  switch (dtype) {
    case DType::f16: return 2;
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  return 0;
}

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::f16: return "f16";
    case DType::f32: return "f32";
    case DType::f64: return "f64";
  }
  return "unknown";
}

DType dtype_from_string(const std::string& name) {
  if (name == "f16") return DType::f16;
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw ContractViolation("unknown dtype '" + name + "' (expected f16, f32 or f64)");
}

std::vector<std::uint8_t> encode_values(std::span<const double> values, DType dtype) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * bytes_per_element(dtype));
  for (double v : values) {
    switch (dtype) {
      case DType::f16: put_le(out, Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(static_cast<float>(v)))); break;
      case DType::f32: put_le(out, static_cast<float>(v)); break;
      case DType::f64: put_le(out, v); break;
    }
  }
  return out;
}

std::vector<double> decode_values(std::span<const std::uint8_t> bytes, DType dtype) {
  const auto width = bytes_per_element(dtype);
  require(bytes.size() % width == 0, "payload size is not a multiple of the element width");
  std::vector<double> out(bytes.size() / width);
  std::size_t offset = 0;
  for (auto& v : out) {
    switch (dtype) {
      case DType::f16:
        v = static_cast<double>(
            static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(get_le<std::uint16_t>(bytes, offset))));
        break;
      case DType::f32: v = static_cast<double>(get_le<float>(bytes, offset)); break;
      case DType::f64: v = get_le<double>(bytes, offset); break;
    }
  }
  return out;
}

TTLFManifest make_manifest(const TTCores& cores, const TensorizationMap& map, double alpha, DType dtype,
                           std::uint64_t seed, std::string scheme, std::string layer_label) {
  require(cores.shape().dims() == map.dims(), "manifest: cores do not match the tensorization");
  TTLFManifest m;
  m.m = map.m();
  m.n = map.n();
  m.dims = map.dims();
  m.ranks = cores.ranks().ranks();
  m.split = map.split();
  m.alpha = alpha;
  m.dtype = dtype;
  m.seed = seed;
  m.scheme = std::move(scheme);
  m.layer_label = std::move(layer_label);
  return m;
}

std::vector<std::uint8_t> encode_ttlf(const TTLFArchive& archive) {
  const auto& m = archive.manifest;
  require(archive.cores.shape().dims() == m.dims, "TTLF: manifest dims disagree with cores");
  require(archive.cores.ranks().ranks() == m.ranks, "TTLF: manifest ranks disagree with cores");
  // Validates the extents/split triple.
  (void)archive.map();

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_le(out, kVersion);
  const std::string manifest = manifest_to_json(m).dump();
  put_le(out, static_cast<std::uint64_t>(manifest.size()));
  out.insert(out.end(), manifest.begin(), manifest.end());
  for (const auto& core : archive.cores.cores()) {
    auto payload = encode_values(core.data, m.dtype);
    put_le(out, static_cast<std::uint64_t>(payload.size()));
    out.insert(out.end(), payload.begin(), payload.end());
  }
  return out;
}

TTLFArchive decode_ttlf(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 16 && std::memcmp(bytes.data(), kMagic, 4) == 0, "not a TTLF archive (bad magic)");
  std::size_t offset = 4;
  const auto version = get_le<std::uint32_t>(bytes, offset);
  require(version == kVersion, "unsupported TTLF container version " + std::to_string(version));
  const auto manifest_len = get_le<std::uint64_t>(bytes, offset);
  require(offset + manifest_len <= bytes.size(), "truncated TTLF manifest");
  const std::string text(reinterpret_cast<const char*>(bytes.data() + offset), manifest_len);
  offset += manifest_len;

  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("TTLF manifest is not valid JSON: ") + e.what());
  }
  TTLFArchive archive;
  archive.manifest = manifest_from_json(j);
  const auto& m = archive.manifest;

  std::vector<TTCore> cores;
  for (std::size_t i = 0; i < m.dims.size(); ++i) {
    TTCore core(m.ranks[i], m.dims[i], m.ranks[i + 1]);
    const auto len = get_le<std::uint64_t>(bytes, offset);
    require(len == core.size() * bytes_per_element(m.dtype),
            "TTLF core " + std::to_string(i) + " payload has the wrong size");
    require(offset + len <= bytes.size(), "truncated TTLF core payload");
    core.data = decode_values(bytes.subspan(offset, len), m.dtype);
    offset += len;
    cores.push_back(std::move(core));
  }
  require(offset == bytes.size(), "trailing bytes after the last TTLF core");
  archive.cores = TTCores(std::move(cores));
  (void)archive.map();
  return archive;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void write_ttlf(const std::filesystem::path& path, const TTLFArchive& archive) {
  write_file_bytes(path, encode_ttlf(archive));
}

TTLFArchive read_ttlf(const std::filesystem::path& path) { return decode_ttlf(read_file_bytes(path)); }

std::filesystem::path dense_sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

void write_dense(const std::filesystem::path& path, const Matrix& matrix, DType dtype) {
  auto payload = encode_values(std::span(matrix.data(), static_cast<std::size_t>(matrix.size())), dtype);
  write_file_bytes(path, payload);
  json sidecar;
  sidecar["m"] = matrix.rows();
  sidecar["n"] = matrix.cols();
  sidecar["dtype"] = to_string(dtype);
  const std::string text = sidecar.dump() + "\n";
  write_file_bytes(dense_sidecar_path(path),
                   std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Matrix read_dense(const std::filesystem::path& path, DType* dtype) {
  const auto sidecar_bytes = read_file_bytes(dense_sidecar_path(path));
  json sidecar;
  std::size_t m = 0, n = 0;
  DType type{};
  try {
    sidecar = json::parse(sidecar_bytes.begin(), sidecar_bytes.end());
    m = sidecar.at("m").get<std::size_t>();
    n = sidecar.at("n").get<std::size_t>();
    type = dtype_from_string(sidecar.at("dtype").get<std::string>());
  } catch (const json::exception& e) {
    throw ContractViolation("malformed dense sidecar for '" + path.string() + "': " + e.what());
  }
  const auto payload = read_file_bytes(path);
  require(payload.size() == m * n * bytes_per_element(type),
          "dense payload '" + path.string() + "' does not match its sidecar extents");
  const auto values = decode_values(payload, type);
  if (dtype) *dtype = type;
  return Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
}

}  // namespace ttlora
