#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "locrel/errors.hpp"
#include "locrel/graph.hpp"

namespace locrel {

// Checkpoint container, little-endian throughout:
//   magic "LRCKPT01" | u32 version | u32 scalar width (4|8) | u64 fingerprint
//   | u32 n_param_layers | u32 metadata_len | metadata JSON bytes
//   | per param layer: u32 node id, weights tensor, bias tensor
//   | u64 FNV-1a checksum of all preceding bytes
// Tensors are serialized as u32 rank, u64 dims..., raw LE IEEE-754 data.

namespace detail {

inline void put_bytes(std::vector<uint8_t>& buf, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf.insert(buf.end(), b, b + n);
}

inline void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

struct ByteReader {
  const std::vector<uint8_t>& buf;
  size_t pos = 0;

  void need(size_t n) const {
    if (pos + n > buf.size()) throw DataError("checkpoint: truncated file");
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(buf[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  void raw(void* out, size_t n) {
    need(n);
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
};

template <class T>
void put_scalar(std::vector<uint8_t>& buf, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  if constexpr (sizeof(T) == 4) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
  } else {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
  }
}

template <class T>
void put_tensor(std::vector<uint8_t>& buf, const Tensor<T>& t) {
  put_u32(buf, static_cast<uint32_t>(t.rank()));
  for (size_t d : t.shape) put_u64(buf, d);
  for (const T& v : t.data) put_scalar(buf, v);
}

template <class T>
Tensor<T> read_tensor(ByteReader& r) {
  const uint32_t rank = r.u32();
  if (rank > 8) throw DataError("checkpoint: implausible tensor rank");
  std::vector<size_t> shape(rank);
  for (auto& d : shape) d = static_cast<size_t>(r.u64());
  Tensor<T> t(shape);
  for (auto& v : t.data) {
    if constexpr (sizeof(T) == 4) {
      uint32_t bits = r.u32();
      std::memcpy(&v, &bits, 4);
    } else {
      uint64_t bits = r.u64();
      std::memcpy(&v, &bits, 8);
    }
  }
  return t;
}

}  // namespace detail

/// Structural hash of the architecture: layer kinds, wiring and
/// hyperparameters, but not the parameter values.
template <class T>
uint64_t architecture_fingerprint(const LayerGraph<T>& g) {
  std::string s = "in=" + shape_str(g.input_shape) + ";out=" + std::to_string(g.output_dim) + ";";
  for (const auto& l : g.layers) {
    s += std::string(kind_name(l.kind)) + "#" + std::to_string(l.id) + "(";
    for (int in : l.inputs) s += std::to_string(in) + ",";
    s += ")";
    switch (l.kind) {
      case LayerKind::Conv1D:
        s += "c" + std::to_string(l.in_channels) + ">" + std::to_string(l.out_channels) + "k" +
             std::to_string(l.kernel) + "s" + std::to_string(l.stride) +
             (l.padding == Padding::Same ? "same" : "valid");
        break;
      case LayerKind::MaxPool1D: s += "p" + std::to_string(l.pool); break;
      case LayerKind::Dense: s += "d" + std::to_string(l.in_dim) + ">" + std::to_string(l.out_dim); break;
      case LayerKind::Dropout: s += "r" + std::to_string(l.rate); break;
      default: break;
    }
    s += ";";
  }
  return fnv1a(s);
}

constexpr uint32_t kCheckpointVersion = 1;

template <class T>
void save_weights(const LayerGraph<T>& g, const std::string& path, const std::string& metadata = "{}") {
  std::vector<uint8_t> buf;
  detail::put_bytes(buf, "LRCKPT01", 8);
  detail::put_u32(buf, kCheckpointVersion);
  detail::put_u32(buf, static_cast<uint32_t>(sizeof(T)));
  detail::put_u64(buf, architecture_fingerprint(g));
  uint32_t n_param = 0;
  for (const auto& l : g.layers)
    if (l.has_params()) ++n_param;
  detail::put_u32(buf, n_param);
  detail::put_u32(buf, static_cast<uint32_t>(metadata.size()));
  detail::put_bytes(buf, metadata.data(), metadata.size());
  for (const auto& l : g.layers) {
    if (!l.has_params()) continue;
    detail::put_u32(buf, static_cast<uint32_t>(l.id));
    detail::put_tensor(buf, l.weights);
    detail::put_tensor(buf, l.bias);
  }
  detail::put_u64(buf, fnv1a(buf.data(), buf.size()));

  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("checkpoint: cannot open " + path + " for writing");
  const size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
  std::fclose(f);
  if (written != buf.size()) throw DataError("checkpoint: short write to " + path);
}

/// Loads parameters into a graph with matching architecture. The file is
/// validated in full (fingerprint, checksum, shapes) before any parameter
/// is touched, so a failed load leaves the graph unchanged.
template <class T>
std::string load_weights(LayerGraph<T>& g, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("checkpoint: cannot open " + path);
  std::fseek(f, 0, SEEK_END);
  const long sz = std::ftell(f);
  std::fseek(f, 0, SEEK_SET);
  std::vector<uint8_t> buf(static_cast<size_t>(sz));
  if (std::fread(buf.data(), 1, buf.size(), f) != buf.size()) {
    std::fclose(f);
    throw DataError("checkpoint: short read from " + path);
  }
  std::fclose(f);

  if (buf.size() < 8 + 4 + 4 + 8 + 4 + 4 + 8) throw DataError("checkpoint: truncated file");
  const uint64_t expect = fnv1a(buf.data(), buf.size() - 8);
  detail::ByteReader tail{buf, buf.size() - 8};
  if (tail.u64() != expect) throw DataError("checkpoint: checksum mismatch (truncated or corrupt file)");

  detail::ByteReader r{buf};
  char magic[9] = {};
  r.raw(magic, 8);
  if (std::string(magic) != "LRCKPT01") throw DataError("checkpoint: bad magic");
  if (r.u32() != kCheckpointVersion) throw DataError("checkpoint: unsupported version");
  if (r.u32() != sizeof(T)) throw DataError("checkpoint: scalar width mismatch");
  if (r.u64() != architecture_fingerprint(g))
    throw DataError("checkpoint: architecture fingerprint mismatch");
  const uint32_t n_param = r.u32();
  const uint32_t meta_len = r.u32();
  std::string metadata(meta_len, '\0');
  r.raw(metadata.data(), meta_len);

  std::vector<std::pair<int, std::pair<Tensor<T>, Tensor<T>>>> loaded;
  for (uint32_t p = 0; p < n_param; ++p) {
    const int id = static_cast<int>(r.u32());
    auto w = detail::read_tensor<T>(r);
    auto b = detail::read_tensor<T>(r);
    if (id < 0 || id >= static_cast<int>(g.layers.size()) || !g.layers[id].has_params())
      throw DataError("checkpoint: parameter block for unknown node " + std::to_string(id));
    if (w.shape != g.layers[id].weights.shape || b.shape != g.layers[id].bias.shape)
      throw DataError("checkpoint: parameter shape mismatch at node " + std::to_string(id));
    loaded.emplace_back(id, std::make_pair(std::move(w), std::move(b)));
  }
  for (auto& [id, wb] : loaded) {
    g.layers[id].weights = std::move(wb.first);
    g.layers[id].bias = std::move(wb.second);
  }
  g.bump();
  return metadata;
}

}  // namespace locrel
