#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "aurora/errors.hpp"

namespace aurora::io {

/// FNV-1a 64 over every byte written or read. Files end with this digest so
/// corruption is caught on load.
class Fnv64 {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t digest() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

/// Little-endian writer.
class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    sum_.update(data, n);
  }
  template <class T>
  void le(T v) {
    unsigned char buf[sizeof(T)];
    std::uint64_t bits = 0;
    if constexpr (sizeof(T) == 8) {
      std::memcpy(&bits, &v, 8);
    } else if constexpr (sizeof(T) == 4) {
      std::uint32_t b32;
      std::memcpy(&b32, &v, 4);
      bits = b32;
    } else {
      std::uint16_t b16;
      std::memcpy(&b16, &v, 2);
      bits = b16;
    }
    for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
    bytes(buf, sizeof(T));
  }
  void checksum() {
    const std::uint64_t d = sum_.digest();
    le(d);
    if (!out_) throw ConfigError("write failed");
  }

 private:
  std::ostream& out_;
  Fnv64 sum_;
};

/// Little-endian reader; every read failure is a ConfigError.
class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw ConfigError("unexpected end of file");
    sum_.update(data, n);
  }
  template <class T>
  T le() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    T v;
    if constexpr (sizeof(T) == 8) {
      std::memcpy(&v, &bits, 8);
    } else if constexpr (sizeof(T) == 4) {
      const auto b32 = static_cast<std::uint32_t>(bits);
      std::memcpy(&v, &b32, 4);
    } else {
      const auto b16 = static_cast<std::uint16_t>(bits);
      std::memcpy(&v, &b16, 2);
    }
    return v;
  }
  void verify_checksum() {
    const std::uint64_t expected = sum_.digest();
    const auto stored = le<std::uint64_t>();
    if (stored != expected) throw ConfigError("checksum mismatch: file is corrupt");
    if (in_.peek() != std::char_traits<char>::eof()) throw ConfigError("trailing bytes after checksum");
  }

 private:
  std::istream& in_;
  Fnv64 sum_;
};

}  // namespace aurora::io
