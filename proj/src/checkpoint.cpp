#include "graphprompt/checkpoint.hpp"

#include "graphprompt/errors.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gprompt {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'P', 'R', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + sizeof(T) > in.size()) throw ChecksumError(path + ": truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::uint64_t fnv(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t content_hash(const std::vector<Matrix>& arrays, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (const Matrix& m : arrays) {
    const std::int64_t shape[2] = {m.rows(), m.cols()};
    h = fnv(shape, sizeof(shape), h);
    h = fnv(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

void write_checkpoint(const std::filesystem::path& path, const std::string& kind, const Checkpoint& checkpoint) {
  nlohmann::json config = checkpoint.config;
  config["kind"] = kind;
  nlohmann::json shapes = nlohmann::json::array();
  std::string payload;
  std::uint64_t count = 0;
  for (const Matrix& m : checkpoint.arrays) {
    shapes.push_back({m.rows(), m.cols()});
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) put(payload, m(r, c));
    }
    count += static_cast<std::uint64_t>(m.size());
  }
  config["shapes"] = shapes;
  const std::string config_text = config.dump();

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(config_text.data()), static_cast<uInt>(config_text.size()));
  crc = crc32(crc, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));

  std::string out(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, config_text.size());
  out += config_text;
  put<std::uint64_t>(out, count);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(crc));
  out += payload;

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& kind) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string name = path.string();

  if (in.size() < kMagic.size() || std::memcmp(in.data(), kMagic.data(), kMagic.size()) != 0) {
    throw ChecksumError(name + ": bad magic bytes");
  }
  std::size_t pos = kMagic.size();
  const auto version = take<std::uint32_t>(in, pos, name);
  if (version != kCheckpointVersion) {
    throw UnsupportedVersionError(name + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto config_len = take<std::uint64_t>(in, pos, name);
  if (pos + config_len > in.size()) throw ChecksumError(name + ": truncated checkpoint");
  const std::string config_text = in.substr(pos, config_len);
  pos += config_len;
  const auto count = take<std::uint64_t>(in, pos, name);
  const auto stored_crc = take<std::uint32_t>(in, pos, name);
  if (in.size() - pos != count * sizeof(double)) throw ChecksumError(name + ": payload size mismatch");

  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(config_text.data()), static_cast<uInt>(config_text.size()));
  crc = crc32(crc, reinterpret_cast<const Bytef*>(in.data() + pos), static_cast<uInt>(in.size() - pos));
  if (static_cast<std::uint32_t>(crc) != stored_crc) throw ChecksumError(name + ": checksum mismatch");

  Checkpoint cp;
  try {
    cp.config = nlohmann::json::parse(config_text);
  } catch (const nlohmann::json::exception& e) {
    throw ChecksumError(name + ": corrupt config block");
  }
  if (cp.config.value("kind", std::string()) != kind) {
    throw SchemaError(name + ": expected a '" + kind + "' checkpoint, found '" + cp.config.value("kind", std::string()) + "'");
  }
  std::uint64_t used = 0;
  for (const auto& shape : cp.config.at("shapes")) {
    const auto rows = shape.at(0).get<Eigen::Index>();
    const auto cols = shape.at(1).get<Eigen::Index>();
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = take<double>(in, pos, name);
    }
    used += static_cast<std::uint64_t>(rows * cols);
    cp.arrays.push_back(std::move(m));
  }
  if (used != count) throw ChecksumError(name + ": shape table does not match payload");
  cp.config.erase("shapes");
  cp.config.erase("kind");
  return cp;
}

}  // namespace gprompt
