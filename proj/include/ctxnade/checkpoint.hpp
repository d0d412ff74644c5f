#pragma once

// Binary checkpoints. Layout (all integers and floats little-endian):
//
//   magic "CTXNADE\0" | u32 version
//   u32 kind | u32 activation | u32 embedding mode
//   u64 K | u64 H | u64 docnade depth | u64 lstm depth | f64 lambda
//   f64 tensors in for_each_tensor order (DocNADE, then LSTM), row-major
//   u8 has_prior [ f64 E (K x H) | u8 covered[K] ]
//   u32 vocabulary mode | u64 byte count | vocabulary dump text

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ctxnade/corpus.hpp"
#include "ctxnade/model.hpp"

namespace ctxnade {

class CheckpointError : public Error {
 public:
  using Error::Error;
};

inline constexpr std::array<char, 8> kCheckpointMagic = {'C', 'T', 'X', 'N', 'A', 'D', 'E', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TopicModel model;
  Vocabulary vocabulary;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) { le(v, 4); }
  void u64(std::uint64_t v) { le(v, 8); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v), 8); }
  void raw(std::string_view s) { bytes_.append(s); }
  void f64s(std::span<const double> xs) {
    for (double x : xs) f64(x);
  }
  const std::string& bytes() const { return bytes_; }

 private:
  void le(std::uint64_t v, int n) {
    for (int k = 0; k < n; ++k) bytes_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  std::string bytes_;
};

class ByteReader {
 public:
  ByteReader(std::string bytes, std::string origin) : bytes_(std::move(bytes)), origin_(std::move(origin)) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(le(1)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(le(4)); }
  std::uint64_t u64() { return le(8); }
  double f64() { return std::bit_cast<double>(le(8)); }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f64s(std::span<double> xs) {
    need(8 * xs.size());
    for (auto& x : xs) x = f64();
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& origin() const { return origin_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint '" + origin_ + "' is truncated");
  }
  std::uint64_t le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int k = 0; k < n; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * k);
    return v;
  }
  std::string bytes_;
  std::string origin_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const auto& p = ck.model.params;
  detail::ByteWriter w;
  w.raw({kCheckpointMagic.data(), kCheckpointMagic.size()});
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(ck.model.kind));
  w.u32(static_cast<std::uint32_t>(p.dn.activation));
  w.u32(static_cast<std::uint32_t>(p.mix.mode));
  w.u64(p.K());
  w.u64(p.H());
  w.u64(p.dn.depth());
  w.u64(p.lm.depth());
  w.f64(p.mix.lambda);
  for_each_tensor(p, [&](const std::string&, std::span<const double> t) { w.f64s(t); });
  w.u8(p.prior ? 1 : 0);
  if (p.prior) {
    w.f64s(p.prior->E.flat());
    for (bool c : p.prior->covered) w.u8(c ? 1 : 0);
  }
  std::ostringstream vocab;
  ck.vocabulary.write(vocab);
  w.u32(static_cast<std::uint32_t>(ck.vocabulary.mode()));
  w.u64(vocab.str().size());
  w.raw(vocab.str());
  return w.bytes();
}

inline Checkpoint deserialize_checkpoint(std::string bytes, const std::string& origin) {
  detail::ByteReader r(std::move(bytes), origin);
  const std::string magic = r.raw(kCheckpointMagic.size());
  if (std::memcmp(magic.data(), kCheckpointMagic.data(), kCheckpointMagic.size()) != 0) {
    throw CheckpointError("'" + origin + "' is not a checkpoint (bad magic bytes)");
  }
  if (const auto version = r.u32(); version != kCheckpointVersion) {
    throw CheckpointError("checkpoint '" + origin + "' has version " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
  }
  Checkpoint ck;
  const auto kind = r.u32();
  const auto activation = r.u32();
  const auto mode = r.u32();
  if (kind > 2 || activation > 1 || mode > 1) throw CheckpointError("checkpoint '" + origin + "' has a corrupt header");
  ck.model.kind = static_cast<ModelKind>(kind);
  const std::uint64_t K = r.u64(), H = r.u64(), dn_depth = r.u64(), lm_depth = r.u64();
  if (K == 0 || H == 0 || dn_depth == 0 || K > (1u << 26) || H > (1u << 16) || dn_depth > 64 || lm_depth > 64) {
    throw CheckpointError("checkpoint '" + origin + "' has implausible dimensions");
  }
  auto& p = ck.model.params;
  p.dn.activation = static_cast<Activation>(activation);
  p.dn.W = Matrix(H, K);
  p.dn.U = Matrix(K, H);
  p.dn.b.assign(K, 0.0);
  p.dn.e.assign(H, 0.0);
  for (std::uint64_t d = 1; d < dn_depth; ++d) p.dn.layers.push_back({Matrix(H, H), Vector(H, 0.0)});
  for (std::uint64_t l = 0; l < lm_depth; ++l) {
    p.lm.layers.push_back({Matrix(4 * H, H), Matrix(4 * H, H), Vector(4 * H, 0.0)});
  }
  p.lm.w_bos.assign(lm_depth > 0 ? H : 0, 0.0);
  p.mix.mode = static_cast<EmbeddingMode>(mode);
  p.mix.lambda = r.f64();
  for_each_tensor(p, [&](const std::string&, std::span<double> t) { r.f64s(t); });
  if (r.u8()) {
    auto table = std::make_shared<EmbeddingTable>();
    table->E = Matrix(K, H);
    r.f64s(table->E.flat());
    table->covered.resize(K);
    for (std::uint64_t k = 0; k < K; ++k) table->covered[k] = r.u8() != 0;
    p.prior = std::move(table);
  }
  const auto vocab_mode = r.u32();
  if (vocab_mode > 1) throw CheckpointError("checkpoint '" + origin + "' has a corrupt vocabulary header");
  std::istringstream vocab(r.raw(r.u64()));
  ck.vocabulary = Vocabulary::read(vocab, static_cast<VocabMode>(vocab_mode), origin);
  if (!r.done()) throw CheckpointError("checkpoint '" + origin + "' has trailing bytes");
  if (ck.vocabulary.size() != K) throw CheckpointError("checkpoint '" + origin + "' vocabulary size differs from K");
  if (ck.model.has_lm()) p.validate();
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  const std::string bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(std::move(bytes), path);
}

}  // namespace ctxnade
