#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "cbb/error.hpp"

namespace cbb {

/// IPv4 address as a host-order integer.
struct Ipv4 {
  uint32_t value = 0;

  friend bool operator==(const Ipv4&, const Ipv4&) = default;
};

inline std::optional<Ipv4> parse_ipv4(const std::string& s) {
  uint32_t octets[4];
  int idx = 0;
  size_t pos = 0;
  while (idx < 4) {
    if (pos >= s.size() || !isdigit(static_cast<unsigned char>(s[pos]))) return std::nullopt;
    uint32_t v = 0;
    size_t start = pos;
    while (pos < s.size() && isdigit(static_cast<unsigned char>(s[pos]))) {
      v = v * 10 + (s[pos] - '0');
      if (v > 255 || pos - start >= 3) return std::nullopt;
      ++pos;
    }
    octets[idx++] = v;
    if (idx < 4) {
      if (pos >= s.size() || s[pos] != '.') return std::nullopt;
      ++pos;
    }
  }
  if (pos != s.size()) return std::nullopt;
  return Ipv4{(octets[0] << 24) | (octets[1] << 16) | (octets[2] << 8) | octets[3]};
}

inline std::string format_ipv4(Ipv4 a) {
  return std::to_string(a.value >> 24) + "." + std::to_string((a.value >> 16) & 0xff) + "." +
         std::to_string((a.value >> 8) & 0xff) + "." + std::to_string(a.value & 0xff);
}

/// IPv4 prefix, "a.b.c.d/len". len 0 matches everything.
struct Cidr {
  Ipv4 base;
  int prefix_len = 32;

  bool contains(Ipv4 addr) const {
    if (prefix_len <= 0) return true;
    uint32_t mask = prefix_len >= 32 ? 0xffffffffu : ~(0xffffffffu >> prefix_len);
    return (addr.value & mask) == (base.value & mask);
  }

  friend bool operator==(const Cidr&, const Cidr&) = default;
};

inline std::optional<Cidr> parse_cidr(const std::string& s) {
  auto slash = s.find('/');
  if (slash == std::string::npos) {
    auto addr = parse_ipv4(s);
    if (!addr) return std::nullopt;
    return Cidr{*addr, 32};
  }
  auto addr = parse_ipv4(s.substr(0, slash));
  if (!addr) return std::nullopt;
  const std::string len_str = s.substr(slash + 1);
  if (len_str.empty() || len_str.size() > 2) return std::nullopt;
  for (char c : len_str)
    if (!isdigit(static_cast<unsigned char>(c))) return std::nullopt;
  int len = std::stoi(len_str);
  if (len < 0 || len > 32) return std::nullopt;
  return Cidr{*addr, len};
}

inline std::string format_cidr(const Cidr& c) {
  return format_ipv4(c.base) + "/" + std::to_string(c.prefix_len);
}

/// Transport protocol. Anything that is not TCP or UDP keeps its numeric code.
struct Protocol {
  enum class Kind : uint8_t { TCP, UDP, OTHER };
  Kind kind = Kind::OTHER;
  uint8_t code = 0;  // meaningful only for OTHER

  static Protocol tcp() { return {Kind::TCP, 6}; }
  static Protocol udp() { return {Kind::UDP, 17}; }
  static Protocol other(uint8_t code) { return {Kind::OTHER, code}; }

  friend bool operator==(const Protocol& a, const Protocol& b) {
    if (a.kind != b.kind) return false;
    return a.kind != Kind::OTHER || a.code == b.code;
  }
};

struct PortRange {
  uint16_t lo = 0;
  uint16_t hi = 65535;

  bool contains(uint16_t p) const { return p >= lo && p <= hi; }

  friend bool operator==(const PortRange&, const PortRange&) = default;
};

/// Glob match with '*' (any run, including empty) and '?' (exactly one
/// character). Case-sensitive.
inline bool glob_match(std::string_view pattern, std::string_view text) {
  size_t p = 0, t = 0;
  size_t star = std::string_view::npos, mark = 0;
  while (t < text.size()) {
    if (p < pattern.size() && (pattern[p] == '?' || pattern[p] == text[t])) {
      ++p;
      ++t;
    } else if (p < pattern.size() && pattern[p] == '*') {
      star = p++;
      mark = t;
    } else if (star != std::string_view::npos) {
      p = star + 1;
      t = ++mark;
    } else {
      return false;
    }
  }
  while (p < pattern.size() && pattern[p] == '*') ++p;
  return p == pattern.size();
}

}  // namespace cbb
