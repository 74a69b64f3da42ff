#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>

#include "dqmp/errors.hpp"

// Little-endian primitives shared by the dataset and weight containers.
namespace dqmp::binio {

template <class U>
void put_uint(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <class U>
U get_uint(std::istream& is, const std::string& path) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError(path + ": truncated file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(buf[i]) << (8 * i));
  return v;
}

inline void put_floats(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float f : values) put_uint(os, std::bit_cast<std::uint32_t>(f));
  }
}

inline void get_floats(std::istream& is, std::span<float> out, const std::string& path) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()))) {
      throw FormatError(path + ": truncated file");
    }
  } else {
    for (float& f : out) f = std::bit_cast<float>(get_uint<std::uint32_t>(is, path));
  }
}

}  // namespace dqmp::binio
