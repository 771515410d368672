#pragma once

// Little-endian stream helpers for the checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace rgcl::detail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writers assume a little-endian host");

template <typename T>
void write_pod(std::ostream& os, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  char buf[sizeof(T)];
  if (!is.read(buf, sizeof(T))) throw std::runtime_error("checkpoint truncated");
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void write_doubles(std::ostream& os, std::span<const double> values) {
  for (double v : values) write_pod(os, v);
}

inline void read_doubles(std::istream& is, std::span<double> out) {
  for (double& v : out) v = read_pod<double>(is);
}

inline void write_magic(std::ostream& os, std::string_view magic) {
  os.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

inline void expect_magic(std::istream& is, std::string_view magic) {
  std::string got(magic.size(), '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic)
    throw std::runtime_error("bad checkpoint magic, expected " + std::string(magic));
}

}  // namespace rgcl::detail
