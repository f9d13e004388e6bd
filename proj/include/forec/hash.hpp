#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace forec {

// FNV-1a 64-bit, used for provenance hashes in manifests and reports.
inline std::uint64_t fnv1a64(std::string_view bytes,
                             std::uint64_t h = 1469598103934665603ULL) {
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string hash_hex(std::uint64_t h) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline std::string hash_string(std::string_view bytes) {
  return hash_hex(fnv1a64(bytes));
}

inline std::string hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for hashing: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_string(ss.str());
}

}  // namespace forec
