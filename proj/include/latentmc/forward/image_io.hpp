#pragma once

// `LMCIMG01` container: 8-byte magic, u32 rows, u32 cols, rows*cols float32,
// all little-endian, row-major. PGM export is for inspection only.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "latentmc/forward/image.hpp"
#include "latentmc/io/binary.hpp"

namespace latentmc {

inline constexpr std::string_view kImageMagic = "LMCIMG01";

inline std::vector<unsigned char> encode_matrix(const Matrix& m) {
  io::Writer w;
  w.magic(kImageMagic);
  w.u32(static_cast<std::uint32_t>(m.rows));
  w.u32(static_cast<std::uint32_t>(m.cols));
  for (double v : m.values) w.f32(static_cast<float>(v));
  return w.buffer();
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  io::Writer w;
  auto bytes = encode_matrix(m);
  w.bytes(bytes.data(), bytes.size());
  w.save(path);
}

inline Matrix decode_matrix(io::Reader& r) {
  if (!r.magic(kImageMagic)) throw IoError("not an LMCIMG01 container (bad magic)");
  const auto rows = r.u32();
  const auto cols = r.u32();
  const auto count = static_cast<std::uint64_t>(rows) * cols;
  if (r.remaining() < count * 4) throw io::TruncatedError("LMCIMG01: truncated payload");
  Matrix m(rows, cols);
  for (auto& v : m.values) v = r.f32();
  return m;
}

inline Matrix read_matrix(const std::string& path) {
  auto r = io::Reader::from_file(path);
  return decode_matrix(r);
}

inline void write_image(const std::string& path, const ImageGrid& img) { write_matrix(path, img.to_matrix()); }
inline ImageGrid read_image(const std::string& path) { return ImageGrid::from_matrix(read_matrix(path)); }

/// Binary PGM (P5), 8-bit. Values are clamped to [0,1] and scaled by 255.
inline void write_pgm(const std::string& path, const Matrix& m) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << m.cols << " " << m.rows << "\n255\n";
  for (double v : m.values) {
    const double c = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0))));
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Matrix read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  auto token = [&] {
    std::string t;
    while (in >> std::ws && in.peek() == '#') {
      std::string skip;
      std::getline(in, skip);
    }
    in >> t;
    return t;
  };
  if (token() != "P5") throw IoError("not a binary PGM: " + path);
  const auto cols = std::stoul(token());
  const auto rows = std::stoul(token());
  const auto maxval = std::stoul(token());
  if (maxval != 255) throw IoError("only 8-bit PGM is supported: " + path);
  in.get();
  Matrix m(rows, cols);
  for (auto& v : m.values) {
    const int c = in.get();
    if (c == EOF) throw IoError("truncated PGM: " + path);
    v = static_cast<double>(c) / 255.0;
  }
  return m;
}

}  // namespace latentmc
