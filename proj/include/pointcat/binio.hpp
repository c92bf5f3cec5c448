#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "pointcat/tensor.hpp"

namespace pointcat::binio {

// Little-endian scalar IO. The in-memory byte order on every supported
// target is already little-endian; memcpy keeps the payload bit-exact.

template <typename T>
void write_raw(std::ostream& os, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  os.write(buf, sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const char* what) {
  char buf[sizeof(T)];
  is.read(buf, sizeof(T));
  if (!is) throw Error(std::string("binary read: truncated file at ") + what);
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

inline void write_string(std::ostream& os, const std::string& s) {
  write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is, const char* what) {
  const auto n = read_raw<std::uint32_t>(is, what);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw Error(std::string("binary read: truncated string at ") + what);
  return s;
}

inline void write_f64_block(std::ostream& os, const double* data, Index n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 8));
}

inline void read_f64_block(std::istream& is, double* data, Index n, const char* what) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 8));
  if (!is) throw Error(std::string("binary read: truncated payload at ") + what);
}

}  // namespace pointcat::binio
