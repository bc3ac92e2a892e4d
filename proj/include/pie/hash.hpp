#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace pie {

// FNV-1a 64-bit. Used for artifact digests in checkpoints and the CLI
// reproducibility header; collision resistance beyond accident detection is
// not required.
inline uint64_t fnv1a64(std::string_view data, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string digest_hex(std::string_view data) {
  uint64_t h = fnv1a64(data);
  static const char* hexd = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = hexd[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace pie
