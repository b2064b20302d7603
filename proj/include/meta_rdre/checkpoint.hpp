#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "meta_rdre/error.hpp"
#include "meta_rdre/model.hpp"

// Binary checkpoint, all integers and floats little-endian:
//
//   "MRDR" | u32 version | u64 M, K, T, H | f64 alpha | f64 rho | u32 count
//   count x { u32 name_len | name | u32 rank | u64 dims[rank] | f64 data[] }
//   u64 FNV-1a hash of every preceding byte
//
// Tensors appear in for_each_parameter order without rho.
namespace meta_rdre {

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    bytes_.insert(bytes_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes_.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  std::vector<unsigned char>& bytes() { return bytes_; }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::size_t end) : bytes_(bytes), end_(end) {}
  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>()); }
  [[nodiscard]] bool done() const { return pos_ == end_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw IoError("checkpoint truncated");
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

inline std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

inline std::vector<unsigned char> serialize_checkpoint(const ModelParams& params) {
  detail::ByteWriter w;
  w.raw("MRDR", 4);
  w.le<std::uint32_t>(kCheckpointVersion);
  w.le<std::uint64_t>(params.dims.input_dim);
  w.le<std::uint64_t>(params.dims.latent_dim);
  w.le<std::uint64_t>(params.dims.embed_dim);
  w.le<std::uint64_t>(params.dims.hidden_dim);
  w.f64(params.alpha);
  w.f64(params.rho[0]);
  std::uint32_t count = 0;
  for_each_parameter(params, [&](const std::string& name, const Tensor&) { count += name != "rho"; });
  w.le<std::uint32_t>(count);
  for_each_parameter(params, [&](const std::string& name, const Tensor& t) {
    if (name == "rho") return;
    w.le<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.raw(name.data(), name.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.le<std::uint64_t>(d);
    for (double v : t.data()) w.f64(v);
  });
  const std::uint64_t hash = detail::fnv1a(w.bytes().data(), w.bytes().size());
  w.le<std::uint64_t>(hash);
  return std::move(w.bytes());
}

inline ModelParams deserialize_checkpoint(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < 4 + 4 + 8) throw IoError("checkpoint truncated");
  if (std::memcmp(bytes.data(), "MRDR", 4) != 0) throw IoError("not a checkpoint (bad magic)");
  {
    detail::ByteReader header(bytes, 8);
    char magic[4];
    header.raw(magic, 4);
    const auto version = header.le<std::uint32_t>();
    if (version != kCheckpointVersion) {
      throw IoError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
    }
  }
  const std::size_t body = bytes.size() - 8;
  {
    std::uint64_t stored = 0;
    for (std::size_t i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
    if (stored != detail::fnv1a(bytes.data(), body)) throw IoError("checkpoint checksum mismatch (corrupted file)");
  }
  detail::ByteReader r(bytes, body);
  char magic[4];
  r.raw(magic, 4);
  (void)r.le<std::uint32_t>();
  ModelDims dims;
  dims.input_dim = r.le<std::uint64_t>();
  dims.latent_dim = r.le<std::uint64_t>();
  dims.embed_dim = r.le<std::uint64_t>();
  dims.hidden_dim = r.le<std::uint64_t>();
  const double alpha = r.f64();
  const double rho = r.f64();
  ModelParams params = init_params(0, dims, alpha);
  params.rho[0] = rho;
  const auto count = r.le<std::uint32_t>();
  std::uint32_t seen = 0;
  for_each_parameter(params, [&](const std::string& name, Tensor& t) {
    if (name == "rho") return;
    if (seen++ >= count) throw IoError("checkpoint is missing tensor " + name);
    const auto len = r.le<std::uint32_t>();
    if (len > 256) throw IoError("checkpoint tensor name too long");
    std::string stored(len, '\0');
    r.raw(stored.data(), len);
    if (stored != name) throw IoError("checkpoint tensor '" + stored + "' where '" + name + "' was expected");
    const auto rank = r.le<std::uint32_t>();
    numgrad::Shape shape(rank);
    for (auto& d : shape) d = r.le<std::uint64_t>();
    if (shape != t.shape()) throw IoError("checkpoint tensor " + name + " has unexpected shape");
    for (double& v : t.data()) v = r.f64();
  });
  if (seen != count || !r.done()) throw IoError("checkpoint has unexpected trailing content");
  return params;
}

inline void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace meta_rdre
