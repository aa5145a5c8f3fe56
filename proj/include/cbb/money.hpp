#pragma once

#include <cstdint>
#include <string>

#include "cbb/error.hpp"

namespace cbb {

/// Integer count of minor currency units. No floating point anywhere in
/// the charging path.
struct Money {
  int64_t amount = 0;
  std::string currency;

  friend bool operator==(const Money&, const Money&) = default;

  Money& operator+=(const Money& other) {
    if (other.amount == 0 && other.currency.empty()) return *this;
    if (amount == 0 && currency.empty()) {
      *this = other;
      return *this;
    }
    if (currency != other.currency)
      throw Error(Errc::CURRENCY_MISMATCH, currency + " vs " + other.currency);
    amount += other.amount;
    return *this;
  }

  friend Money operator+(Money a, const Money& b) {
    a += b;
    return a;
  }

  friend Money operator*(const Money& a, int64_t n) { return {a.amount * n, a.currency}; }
};

}  // namespace cbb
