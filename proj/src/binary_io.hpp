#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <type_traits>

#include "evcoord/errors.hpp"

namespace evcoord::binary {

/// Leading bytes of every serialized regressor.
inline const std::string kRegressorMagic = "EVREG001";

static_assert(std::endian::native == std::endian::little, "binary formats assume little-endian hosts");

template <typename T>
void write(std::ostream& out, const T& value) {
  static_assert(std::is_trivially_copyable_v<T>);
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read(std::istream& in) {
  static_assert(std::is_trivially_copyable_v<T>);
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("unexpected end of binary stream", 0);
  return value;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, std::uint32_t max_len = 1U << 16) {
  const auto n = read<std::uint32_t>(in);
  if (n > max_len) throw ParseError("string field too long in binary stream", 0);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw ParseError("unexpected end of binary stream", 0);
  return s;
}

inline void expect_magic(std::istream& in, const std::string& magic, const char* what) {
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(got.size()));
  if (!in || got != magic) throw ParseError(std::string("not a ") + what + " file", 0);
}

}  // namespace evcoord::binary
