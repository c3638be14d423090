#pragma once

// `SARTNET1` weight container.
//
//   magic "SARTNET1" | u32 version | u8 role | u32 3, u32 C, H, W (input shape)
//   u32 layer_count, then per layer:
//     u16 kind | u32 name_len, name bytes | u32 ndims, u32 dims[ndims]
//     u64 nparams | float32 params[nparams]
//
// All integers and floats are little-endian. Parameters are the layer's
// tensors concatenated in declaration order. A SpectralNormWrapper's dims
// are [inner_kind, inner dims...] and its parameters end with the cached
// left singular vector. Residual composites (ResBlock*) are stored with
// dims [cin, cout, h, w, spectral] and expanded to primitives on load.

#include <fstream>
#include <map>
#include <sstream>

#include "latentmc/io/binary.hpp"
#include "latentmc/nn/network.hpp"

namespace latentmc::nn {

inline constexpr std::string_view kNetworkMagic = "SARTNET1";
inline constexpr std::uint32_t kNetworkVersion = 1;

class LoadError : public IoError {
public:
  enum class Code { BadMagic, UnsupportedVersion, Truncated, UnknownKind, ShapeInconsistent, NonFinite, TrailingData };

  LoadError(Code c, const std::string& what) : IoError(what), code_(c) {}
  Code code() const { return code_; }

private:
  Code code_;
};

namespace detail {

using Dims = std::vector<std::uint32_t>;

inline Dims shape_dims(Shape s) { return {s.c, s.h, s.w}; }

inline Dims layer_dims(const Layer& layer);

inline Dims op_dims(const LayerOp& op) {
  return std::visit(
      [](const auto& l) -> Dims {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Dense>) {
          return {l.in.c, l.in.h, l.in.w, l.out_features};
        } else if constexpr (std::is_same_v<T, Conv> || std::is_same_v<T, ConvTranspose>) {
          return {l.cin, l.cout, l.kernel, l.stride, l.pad, l.h, l.w};
        } else if constexpr (std::is_same_v<T, AvgPool> || std::is_same_v<T, Upsample>) {
          return {l.shape.c, l.shape.h, l.shape.w, l.factor};
        } else if constexpr (std::is_same_v<T, SelfAttention>) {
          return {l.channels, l.reduced, l.h, l.w};
        } else if constexpr (std::is_same_v<T, Flatten>) {
          return shape_dims(l.from);
        } else if constexpr (std::is_same_v<T, Reshape>) {
          return {l.from.c, l.from.h, l.from.w, l.to.c, l.to.h, l.to.w};
        } else if constexpr (std::is_same_v<T, SpectralNorm>) {
          Dims d{static_cast<std::uint32_t>(l.inner_kind())};
          const Dims inner = std::visit([](const auto& i) { return op_dims(LayerOp(i)); }, l.inner);
          d.insert(d.end(), inner.begin(), inner.end());
          return d;
        } else if constexpr (std::is_same_v<T, Residual>) {
          return {l.cin, l.cout, l.h, l.w, l.spectral ? 1u : 0u};
        } else {
          return shape_dims(l.shape);
        }
      },
      op);
}

inline Dims layer_dims(const Layer& layer) { return op_dims(layer.op); }

[[noreturn]] inline void bad_dims(LayerKind k, const Dims& d) {
  throw LoadError(LoadError::Code::ShapeInconsistent,
                  "layer kind " + kind_name(k) + " has invalid dims (count " + std::to_string(d.size()) + ")");
}

inline LayerOp make_op(LayerKind kind, const Dims& d) {
  auto need = [&](std::size_t n) {
    if (d.size() != n) bad_dims(kind, d);
  };
  auto shape3 = [&](std::size_t off = 0) { return Shape{d[off], d[off + 1], d[off + 2]}; };
  try {
    switch (kind) {
      case LayerKind::Dense: need(4); return Dense(shape3(), d[3]);
      case LayerKind::Conv: need(7); return Conv(d[0], d[1], d[2], d[3], d[4], d[5], d[6]);
      case LayerKind::ConvTranspose: need(7); return ConvTranspose(d[0], d[1], d[2], d[3], d[4], d[5], d[6]);
      case LayerKind::FRN: need(3); return Frn(shape3());
      case LayerKind::TLU: need(3); return Tlu(shape3());
      case LayerKind::LeakyReLU: need(3); return LeakyRelu(shape3());
      case LayerKind::Tanh: need(3); return TanhLayer(shape3());
      case LayerKind::BatchNormInference: need(3); return BatchNorm(shape3());
      case LayerKind::AvgPool: need(4); return AvgPool(shape3(), d[3]);
      case LayerKind::GlobalAvgPool: need(3); return GlobalAvgPool(shape3());
      case LayerKind::SelfAttention: need(4); return SelfAttention(d[0], d[1], d[2], d[3]);
      case LayerKind::Upsample: need(4); return Upsample(shape3(), d[3]);
      case LayerKind::Flatten: need(3); return Flatten(shape3());
      case LayerKind::Reshape: need(6); return Reshape(shape3(), shape3(3));
      case LayerKind::ResBlock:
      case LayerKind::ResBlockUp:
      case LayerKind::ResBlockDown:
        need(5);
        if (d[4] > 1) bad_dims(kind, d);
        return make_residual(kind, d[0], d[1], d[2], d[3], d[4] == 1);
      case LayerKind::SpectralNormWrapper: {
        if (d.empty()) bad_dims(kind, d);
        const auto inner_kind = static_cast<LayerKind>(d[0]);
        const Dims rest(d.begin() + 1, d.end());
        switch (inner_kind) {
          case LayerKind::Dense: return SpectralNorm(std::get<Dense>(make_op(inner_kind, rest)));
          case LayerKind::Conv: return SpectralNorm(std::get<Conv>(make_op(inner_kind, rest)));
          case LayerKind::ConvTranspose: return SpectralNorm(std::get<ConvTranspose>(make_op(inner_kind, rest)));
          default:
            throw LoadError(LoadError::Code::UnknownKind,
                            "spectral norm can only wrap Dense/Conv/ConvTranspose, got " + kind_name(inner_kind));
        }
      }
    }
  } catch (const ShapeError& e) {
    throw LoadError(LoadError::Code::ShapeInconsistent, std::string("layer ") + kind_name(kind) + ": " + e.what());
  }
  throw LoadError(LoadError::Code::UnknownKind, "unknown layer kind code " + std::to_string(static_cast<int>(kind)));
}

inline std::size_t param_count(const Layer& l) {
  std::size_t n = 0;
  for (const auto* p : l.params()) n += p->size();
  return n;
}

}  // namespace detail

inline std::vector<unsigned char> encode_network(const NetworkGraph& net) {
  io::Writer w;
  w.magic(kNetworkMagic);
  w.u32(kNetworkVersion);
  w.u8(static_cast<std::uint8_t>(net.role));
  w.u32(3);
  for (auto v : detail::shape_dims(net.input_shape)) w.u32(v);
  w.u32(static_cast<std::uint32_t>(net.layers.size()));
  for (const auto& l : net.layers) {
    w.u16(static_cast<std::uint16_t>(l.kind()));
    w.str(l.name);
    const auto dims = detail::layer_dims(l);
    w.u32(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.u32(d);
    w.u64(detail::param_count(l));
    for (const auto* p : l.params())
      for (double v : *p) w.f32(static_cast<float>(v));
  }
  return w.buffer();
}

inline void save_network(const std::string& path, const NetworkGraph& net) {
  io::Writer w;
  const auto bytes = encode_network(net);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

/// Parses and validates a network: shape chaining and finite parameters.
inline NetworkGraph decode_network(std::vector<unsigned char> bytes) {
  io::Reader r(std::move(bytes));
  NetworkGraph net;
  try {
    if (!r.magic(kNetworkMagic)) throw LoadError(LoadError::Code::BadMagic, "not a SARTNET1 file (bad magic)");
    const auto version = r.u32();
    if (version != kNetworkVersion)
      throw LoadError(LoadError::Code::UnsupportedVersion, "unsupported SARTNET version " + std::to_string(version));
    const auto role = r.u8();
    if (role > 1) throw LoadError(LoadError::Code::ShapeInconsistent, "invalid network role");
    net.role = static_cast<NetworkRole>(role);
    if (r.u32() != 3) throw LoadError(LoadError::Code::ShapeInconsistent, "input shape must have 3 dims");
    net.input_shape = {r.u32(), r.u32(), r.u32()};
    const auto count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      const auto kind = static_cast<LayerKind>(r.u16());
      std::string name = r.str();
      const auto ndims = r.u32();
      if (ndims > 64) throw LoadError(LoadError::Code::ShapeInconsistent, "layer '" + name + "': too many dims");
      detail::Dims dims(ndims);
      for (auto& d : dims) d = r.u32();
      Layer layer(name, detail::make_op(kind, dims));
      const auto nparams = r.u64();
      const auto expected = detail::param_count(layer);
      if (nparams != expected)
        throw LoadError(LoadError::Code::ShapeInconsistent,
                        "layer '" + name + "': expected " + std::to_string(expected) + " parameters, file has " +
                            std::to_string(nparams));
      if (r.remaining() < nparams * 4) throw LoadError(LoadError::Code::Truncated, "layer '" + name + "': truncated parameters");
      for (auto* p : layer.params())
        for (auto& v : *p) {
          v = r.f32();
          if (!std::isfinite(v))
            throw LoadError(LoadError::Code::NonFinite, "layer '" + name + "': non-finite parameter");
        }
      net.layers.push_back(std::move(layer));
    }
  } catch (const io::TruncatedError& e) {
    throw LoadError(LoadError::Code::Truncated, std::string("truncated network file: ") + e.what());
  }
  if (!r.at_end()) throw LoadError(LoadError::Code::TrailingData, "unexpected trailing bytes after last layer");
  try {
    net.validate_shapes();
  } catch (const ShapeError& e) {
    throw LoadError(LoadError::Code::ShapeInconsistent, e.what());
  }
  return net;
}

inline NetworkGraph load_network(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open network file: " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_network(std::move(bytes));
}

// ---------------------------------------------------------------------------
// Plain-text key=value sidecar

using Manifest = std::map<std::string, std::string>;

inline void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  for (const auto& [k, v] : m) out << k << '=' << v << '\n';
}

inline Manifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed manifest line in " + path + ": " + line);
    m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

/// 64-bit FNV-1a, used as a content fingerprint in manifests.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

inline Manifest network_manifest(const NetworkGraph& net, std::size_t image_side) {
  const auto bytes = encode_network(net);
  const auto latent = net.role == NetworkRole::Generator ? net.input_shape.size() : net.output_shape().size();
  return {{"role", net.role == NetworkRole::Generator ? "generator" : "encoder"},
          {"latent_dim", std::to_string(latent)},
          {"image_side", std::to_string(image_side)},
          {"provenance", "fnv1a64:" + hex64(fnv1a64(bytes))}};
}

}  // namespace latentmc::nn
