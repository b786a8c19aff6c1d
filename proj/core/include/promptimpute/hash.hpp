#pragma once

#include <cstdint>
#include <string>

namespace prompt_impute {

// FNV-1a 64-bit running hash. Used to fingerprint datasets so experiment
// runs can prove that every protocol saw byte-identical preprocessing.
class Fnv1a {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
  }

  void update_u64(std::uint64_t v) {
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    update(bytes, 8);
  }

  void update_f64(double v);

  std::uint64_t digest() const { return state_; }

  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace prompt_impute
