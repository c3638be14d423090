#pragma once

// Little-endian primitive encoding shared by every on-disk container.

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

#include "latentmc/core.hpp"

namespace latentmc::io {

static_assert(std::endian::native == std::endian::little,
              "containers are written in native order; big-endian hosts need byte swapping");

class Writer {
public:
  void bytes(const void* p, std::size_t n) {
    auto c = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void magic(std::string_view m) { bytes(m.data(), m.size()); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void u64(std::uint64_t v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  const std::vector<unsigned char>& buffer() const { return buf_; }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError("write failed: " + path);
  }

private:
  std::vector<unsigned char> buf_;
};

/// Thrown by Reader when the input ends before a requested field.
class TruncatedError : public IoError {
public:
  using IoError::IoError;
};

class Reader {
public:
  explicit Reader(std::vector<unsigned char> data) : data_(std::move(data)) {}

  static Reader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::vector<unsigned char> d((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
    return Reader(std::move(d));
  }

  void bytes(void* p, std::size_t n) {
    if (remaining() < n) throw TruncatedError("unexpected end of data");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  bool magic(std::string_view m) {
    if (remaining() < m.size()) return false;
    bool ok = std::memcmp(data_.data() + pos_, m.data(), m.size()) == 0;
    pos_ += m.size();
    return ok;
  }
  template <class T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint16_t u16() { return get<std::uint16_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return get<float>(); }
  std::string str() {
    auto n = u32();
    if (remaining() < n) throw TruncatedError("unexpected end of data in string");
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  bool at_end() const { return pos_ == data_.size(); }

private:
  std::vector<unsigned char> data_;
  std::size_t pos_ = 0;
};

}  // namespace latentmc::io
