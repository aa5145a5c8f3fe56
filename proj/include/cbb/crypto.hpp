#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cbb/error.hpp"

namespace cbb {

using Digest = std::array<uint8_t, 32>;
using Bytes = std::vector<uint8_t>;

// ---------------------------------------------------------------------------
// SHA-256 (FIPS 180-4)

namespace sha256_detail {

inline constexpr std::array<uint32_t, 64> kRound = {
    0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4, 0xab1c5ed5,
    0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7, 0xc19bf174,
    0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da,
    0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967,
    0x27b70a85, 0x2e1b2138, 0x4d2c6dfc, 0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
    0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070,
    0x19a4c116, 0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
    0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};

inline uint32_t rotr(uint32_t x, int n) { return (x >> n) | (x << (32 - n)); }

}  // namespace sha256_detail

class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    state_ = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
              0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
    buffer_len_ = 0;
    total_len_ = 0;
  }

  void update(const uint8_t* data, size_t len) {
    total_len_ += len;
    while (len > 0) {
      const size_t take = std::min(len, sizeof(buffer_) - buffer_len_);
      std::memcpy(buffer_ + buffer_len_, data, take);
      buffer_len_ += take;
      data += take;
      len -= take;
      if (buffer_len_ == sizeof(buffer_)) {
        compress(buffer_);
        buffer_len_ = 0;
      }
    }
  }

  Digest finish() {
    uint64_t bit_len = total_len_ * 8;
    uint8_t pad = 0x80;
    update(&pad, 1);
    uint8_t zero = 0;
    while (buffer_len_ != 56) update(&zero, 1);
    uint8_t len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<uint8_t>(bit_len >> (56 - 8 * i));
    // bypass total_len_ bookkeeping for the length block
    std::memcpy(buffer_ + 56, len_be, 8);
    compress(buffer_);
    Digest out;
    for (int i = 0; i < 8; ++i) {
      out[4 * i] = static_cast<uint8_t>(state_[i] >> 24);
      out[4 * i + 1] = static_cast<uint8_t>(state_[i] >> 16);
      out[4 * i + 2] = static_cast<uint8_t>(state_[i] >> 8);
      out[4 * i + 3] = static_cast<uint8_t>(state_[i]);
    }
    return out;
  }

  static Digest hash(const uint8_t* data, size_t len) {
    Sha256 h;
    h.update(data, len);
    return h.finish();
  }

  static Digest hash(const Bytes& data) { return hash(data.data(), data.size()); }

  static Digest hash(std::string_view s) {
    return hash(reinterpret_cast<const uint8_t*>(s.data()), s.size());
  }

 private:
  void compress(const uint8_t* block) {
    using namespace sha256_detail;
    uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (uint32_t(block[4 * i]) << 24) | (uint32_t(block[4 * i + 1]) << 16) |
             (uint32_t(block[4 * i + 2]) << 8) | uint32_t(block[4 * i + 3]);
    for (int i = 16; i < 64; ++i) {
      uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    uint32_t a = state_[0], b = state_[1], c = state_[2], d = state_[3];
    uint32_t e = state_[4], f = state_[5], g = state_[6], h = state_[7];
    for (int i = 0; i < 64; ++i) {
      uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      uint32_t ch = (e & f) ^ (~e & g);
      uint32_t t1 = h + s1 + ch + kRound[i] + w[i];
      uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      uint32_t t2 = s0 + maj;
      h = g;
      g = f;
      f = e;
      e = d + t1;
      d = c;
      c = b;
      b = a;
      a = t1 + t2;
    }
    state_[0] += a;
    state_[1] += b;
    state_[2] += c;
    state_[3] += d;
    state_[4] += e;
    state_[5] += f;
    state_[6] += g;
    state_[7] += h;
  }

  std::array<uint32_t, 8> state_;
  uint8_t buffer_[64];
  size_t buffer_len_ = 0;
  uint64_t total_len_ = 0;
};

// ---------------------------------------------------------------------------
// Hex helpers

inline std::string to_hex(const uint8_t* data, size_t len) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (size_t i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xf]);
  }
  return out;
}

inline std::string to_hex(const Digest& d) { return to_hex(d.data(), d.size()); }
inline std::string to_hex(const Bytes& b) { return to_hex(b.data(), b.size()); }

inline std::optional<Bytes> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) return std::nullopt;
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  Bytes out;
  out.reserve(hex.size() / 2);
  for (size_t i = 0; i < hex.size(); i += 2) {
    int hi = nibble(hex[i]), lo = nibble(hex[i + 1]);
    if (hi < 0 || lo < 0) return std::nullopt;
    out.push_back(static_cast<uint8_t>((hi << 4) | lo));
  }
  return out;
}

inline std::optional<Digest> digest_from_hex(std::string_view hex) {
  auto bytes = from_hex(hex);
  if (!bytes || bytes->size() != 32) return std::nullopt;
  Digest d;
  std::memcpy(d.data(), bytes->data(), 32);
  return d;
}

// ---------------------------------------------------------------------------
// Pluggable hash registry. Token chains name their hash so claims stay
// self-describing; tests wrap a function to count invocations.

using HashFn = std::function<Digest(const uint8_t*, size_t)>;

inline HashFn hash_by_name(const std::string& name) {
  if (name == "sha-256")
    return [](const uint8_t* d, size_t n) { return Sha256::hash(d, n); };
  throw Error(Errc::CONFIG_INVALID, "unknown hash algorithm '" + name + "'");
}

// ---------------------------------------------------------------------------
// Schnorr signatures over the order-q subgroup of Z_p*, p a safe prime.
// Deterministic nonces; small enough for simulation-grade keys, shaped like
// the real thing (public verification keys, tamper detection).

namespace sig_detail {

inline constexpr uint64_t kP = 0x3fffffffffffd6bbULL;  // safe prime, p = 2q + 1
inline constexpr uint64_t kQ = 0x1fffffffffffeb5dULL;  // subgroup order
inline constexpr uint64_t kG = 4;                      // generator of the order-q subgroup

inline uint64_t mulmod(uint64_t a, uint64_t b) {
  return static_cast<uint64_t>((static_cast<unsigned __int128>(a) * b) % kP);
}

inline uint64_t powmod(uint64_t base, uint64_t exp) {
  uint64_t result = 1;
  base %= kP;
  while (exp > 0) {
    if (exp & 1) result = mulmod(result, base);
    base = mulmod(base, base);
    exp >>= 1;
  }
  return result;
}

inline uint64_t hash_to_scalar(uint8_t domain, const Bytes& fixed, std::string_view msg) {
  Sha256 h;
  h.update(&domain, 1);
  h.update(fixed.data(), fixed.size());
  h.update(reinterpret_cast<const uint8_t*>(msg.data()), msg.size());
  Digest d = h.finish();
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | d[i];
  v %= kQ;
  return v == 0 ? 1 : v;
}

inline Bytes u64_bytes(uint64_t v) {
  Bytes out(8);
  for (int i = 0; i < 8; ++i) out[i] = static_cast<uint8_t>(v >> (56 - 8 * i));
  return out;
}

}  // namespace sig_detail

struct Signature {
  uint64_t challenge = 0;
  uint64_t response = 0;

  std::string to_hex() const {
    return cbb::to_hex(sig_detail::u64_bytes(challenge)) + cbb::to_hex(sig_detail::u64_bytes(response));
  }

  static std::optional<Signature> from_hex(std::string_view hex) {
    auto bytes = cbb::from_hex(hex);
    if (!bytes || bytes->size() != 16) return std::nullopt;
    auto read_u64 = [&](size_t off) {
      uint64_t v = 0;
      for (int i = 0; i < 8; ++i) v = (v << 8) | (*bytes)[off + i];
      return v;
    };
    return Signature{read_u64(0), read_u64(8)};
  }

  friend bool operator==(const Signature&, const Signature&) = default;
};

struct KeyPair {
  uint64_t secret = 0;
  uint64_t public_key = 0;
};

/// Derive a keypair deterministically from seed bytes.
inline KeyPair keypair_from_seed(const Bytes& seed) {
  using namespace sig_detail;
  Digest d = Sha256::hash(seed);
  uint64_t sk = 0;
  for (int i = 0; i < 8; ++i) sk = (sk << 8) | d[i];
  sk = sk % (kQ - 1) + 1;
  return {sk, powmod(kG, sk)};
}

inline std::string public_key_hex(uint64_t pk) { return to_hex(sig_detail::u64_bytes(pk)); }

inline std::optional<uint64_t> public_key_from_hex(std::string_view hex) {
  auto bytes = from_hex(hex);
  if (!bytes || bytes->size() != 8) return std::nullopt;
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | (*bytes)[i];
  return v;
}

inline Signature sign(uint64_t secret, std::string_view msg) {
  using namespace sig_detail;
  const uint64_t nonce = hash_to_scalar(0x01, u64_bytes(secret), msg);
  const uint64_t commitment = powmod(kG, nonce);
  const uint64_t challenge = hash_to_scalar(0x02, u64_bytes(commitment), msg);
  const uint64_t response =
      (nonce + static_cast<uint64_t>((static_cast<unsigned __int128>(challenge) * secret) % kQ)) % kQ;
  return {challenge, response};
}

inline bool verify(uint64_t public_key, std::string_view msg, const Signature& sig) {
  using namespace sig_detail;
  if (public_key == 0 || public_key >= kP || sig.challenge == 0 || sig.challenge >= kQ ||
      sig.response >= kQ)
    return false;
  // R' = g^s * pk^(q - e), then the challenge must reproduce
  const uint64_t commitment = mulmod(powmod(kG, sig.response), powmod(public_key, kQ - sig.challenge));
  return hash_to_scalar(0x02, u64_bytes(commitment), msg) == sig.challenge;
}

}  // namespace cbb
