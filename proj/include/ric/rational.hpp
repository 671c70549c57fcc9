#pragma once

// Exact rational arithmetic over 128-bit integers.
//
// Every ratio in this library (system share, asymptotes, bounds) is kept
// exact until presentation; floating point never enters a comparison.
// Arithmetic is overflow-checked: an operation whose true result cannot
// be represented throws MagnitudeOverflowError instead of wrapping.

#include <cstdint>
#include <string>
#include <string_view>

#include "ric/errors.hpp"

namespace ric {

__extension__ typedef __int128 Int128;
__extension__ typedef unsigned __int128 UInt128;

namespace detail {

inline UInt128 umag(Int128 v) {
  return v < 0 ? UInt128(0) - UInt128(v) : UInt128(v);
}

inline UInt128 ugcd(UInt128 a, UInt128 b) {
  while (b != 0) {
    UInt128 r = a % b;
    a = b;
    b = r;
  }
  return a;
}

inline Int128 checked_add(Int128 a, Int128 b) {
  Int128 r;
  if (__builtin_add_overflow(a, b, &r)) throw MagnitudeOverflowError("rational add overflow");
  return r;
}

inline Int128 checked_mul(Int128 a, Int128 b) {
  Int128 r;
  if (__builtin_mul_overflow(a, b, &r)) throw MagnitudeOverflowError("rational mul overflow");
  return r;
}

inline Int128 checked_neg(Int128 a) {
  Int128 r;
  if (__builtin_sub_overflow(Int128(0), a, &r)) throw MagnitudeOverflowError("rational negate overflow");
  return r;
}

}  // namespace detail

// Normalized rational: den > 0, gcd(|num|, den) == 1.
class Rational {
 public:
  Rational() : num_(0), den_(1) {}
  Rational(Int128 n) : num_(n), den_(1) {}  // NOLINT: implicit from integers is intended
  Rational(std::int64_t n) : num_(n), den_(1) {}
  Rational(std::uint64_t n) : num_(Int128(n)), den_(1) {}
  Rational(int n) : num_(n), den_(1) {}

  Rational(Int128 n, Int128 d) : num_(n), den_(d) { normalize(); }

  Int128 num() const { return num_; }
  Int128 den() const { return den_; }

  bool is_zero() const { return num_ == 0; }
  int sign() const { return num_ < 0 ? -1 : (num_ > 0 ? 1 : 0); }

  Rational operator-() const { return Rational(detail::checked_neg(num_), den_); }

  friend Rational operator+(const Rational& a, const Rational& b) {
    // a/b + c/d with the classic gcd reduction on denominators.
    UInt128 g = detail::ugcd(detail::umag(a.den_), detail::umag(b.den_));
    Int128 bd = a.den_ / Int128(g);
    Int128 dd = b.den_ / Int128(g);
    Int128 n = detail::checked_add(detail::checked_mul(a.num_, dd), detail::checked_mul(b.num_, bd));
    Int128 d = detail::checked_mul(a.den_, dd);
    return Rational(n, d);
  }

  friend Rational operator-(const Rational& a, const Rational& b) { return a + (-b); }

  friend Rational operator*(const Rational& a, const Rational& b) {
    // Cross-cancel before multiplying so intermediate products stay small.
    // Denominators are >= 1, so both gcds are nonzero.
    UInt128 g1 = detail::ugcd(detail::umag(a.num_), detail::umag(b.den_));
    UInt128 g2 = detail::ugcd(detail::umag(b.num_), detail::umag(a.den_));
    Int128 n = detail::checked_mul(a.num_ / Int128(g1), b.num_ / Int128(g2));
    Int128 d = detail::checked_mul(a.den_ / Int128(g2), b.den_ / Int128(g1));
    return Rational(n, d);
  }

  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.num_ == 0) throw UndefinedRatioError("division by zero rational");
    return a * Rational(b.den_, b.num_);
  }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

  friend bool operator<(const Rational& a, const Rational& b) {
    if (a.num_ == 0) return b.num_ > 0;
    if (b.num_ == 0) return a.num_ < 0;
    if (a.num_ < 0 && b.num_ > 0) return true;
    if (a.num_ > 0 && b.num_ < 0) return false;
    // Same sign, both nonzero: compare a.num*b.den vs b.num*a.den,
    // pre-reduced so the cross products stay representable.
    UInt128 g1 = detail::ugcd(detail::umag(a.num_), detail::umag(b.num_));
    UInt128 g2 = detail::ugcd(detail::umag(a.den_), detail::umag(b.den_));
    Int128 lhs = detail::checked_mul(a.num_ / Int128(g1), b.den_ / Int128(g2));
    Int128 rhs = detail::checked_mul(b.num_ / Int128(g1), a.den_ / Int128(g2));
    return lhs < rhs;
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  Rational abs() const { return num_ < 0 ? -*this : *this; }

 private:
  void normalize() {
    if (den_ == 0) throw UndefinedRatioError("rational with zero denominator");
    if (den_ < 0) {
      num_ = detail::checked_neg(num_);
      den_ = detail::checked_neg(den_);
    }
    if (num_ == 0) {
      den_ = 1;
      return;
    }
    UInt128 g = detail::ugcd(detail::umag(num_), detail::umag(den_));
    num_ /= Int128(g);
    den_ /= Int128(g);
  }

  Int128 num_;
  Int128 den_;
};

// base^exp by repeated squaring, exact and overflow-checked.
// `exponent_cap` bounds exp up front; the checked multiplies still guard
// against overflow below the cap.
inline Rational pow_checked(const Rational& base, std::uint64_t exp, std::uint64_t exponent_cap) {
  if (exp > exponent_cap) {
    throw MagnitudeOverflowError("exponent " + std::to_string(exp) + " exceeds cap " +
                                 std::to_string(exponent_cap));
  }
  Rational result(1);
  Rational b = base;
  while (exp > 0) {
    if (exp & 1) result = result * b;
    exp >>= 1;
    if (exp > 0) b = b * b;
  }
  return result;
}

namespace detail {

inline std::string uint128_to_string(UInt128 v) {
  if (v == 0) return "0";
  char buf[40];
  int i = 40;
  while (v > 0) {
    buf[--i] = char('0' + int(v % 10));
    v /= 10;
  }
  return std::string(buf + i, buf + 40);
}

}  // namespace detail

inline std::string to_string(Int128 v) {
  std::string s = detail::uint128_to_string(detail::umag(v));
  return v < 0 ? "-" + s : s;
}

// Exact fraction form "num/den" ("num" when den == 1).
inline std::string to_fraction_string(const Rational& r) {
  std::string s = to_string(r.num());
  if (r.den() != 1) s += "/" + to_string(r.den());
  return s;
}

// Decimal rendering with `sig_digits` significant digits, computed by long
// division (no floating point). Fixed notation while the decimal exponent
// is in [-6, 15], scientific otherwise. Ties round away from zero.
inline std::string to_decimal_string(const Rational& r, int sig_digits = 9) {
  if (sig_digits < 1) sig_digits = 1;
  if (r.is_zero()) return "0";

  UInt128 n = detail::umag(r.num());
  UInt128 d = detail::umag(r.den());

  // exp10 = floor(log10(n/d)): scale until 1 <= scaled(n)/d < 10.
  int exp10 = 0;
  UInt128 ns = n;
  UInt128 ds = d;
  const UInt128 kLimit = ~UInt128(0) / 10;
  while (ns / ds == 0) {
    if (ns > kLimit) throw MagnitudeOverflowError("decimal rendering scale overflow");
    ns *= 10;
    --exp10;
  }
  while (ns / ds >= 10) {
    if (ds > kLimit) throw MagnitudeOverflowError("decimal rendering scale overflow");
    ds *= 10;
    ++exp10;
  }

  // Long-divide for sig_digits + 1 digits, then round.
  std::string digits;
  digits.reserve(size_t(sig_digits) + 1);
  UInt128 rem = ns;
  for (int i = 0; i < sig_digits + 1; ++i) {
    UInt128 q = rem / ds;
    digits.push_back(char('0' + int(q)));
    rem -= q * ds;
    if (rem > kLimit) throw MagnitudeOverflowError("decimal rendering scale overflow");
    rem *= 10;
  }
  bool round_up = digits.back() > '4';
  digits.pop_back();
  if (round_up) {
    int i = sig_digits - 1;
    while (i >= 0) {
      if (digits[size_t(i)] != '9') {
        ++digits[size_t(i)];
        break;
      }
      digits[size_t(i)] = '0';
      --i;
    }
    if (i < 0) {  // 9.99... rolled over to 10.0...
      digits.insert(digits.begin(), '1');
      digits.pop_back();
      ++exp10;
    }
  }

  std::string out;
  if (r.sign() < 0) out.push_back('-');
  if (exp10 >= -6 && exp10 <= 15) {
    if (exp10 >= 0) {
      if (exp10 + 1 >= sig_digits) {
        out += digits;
        out.append(size_t(exp10 + 1 - sig_digits), '0');
      } else {
        out += digits.substr(0, size_t(exp10 + 1));
        out.push_back('.');
        out += digits.substr(size_t(exp10 + 1));
      }
    } else {
      out += "0.";
      out.append(size_t(-exp10 - 1), '0');
      out += digits;
    }
  } else {
    out.push_back(digits[0]);
    if (sig_digits > 1) {
      out.push_back('.');
      out += digits.substr(1);
    }
    out.push_back('e');
    out += (exp10 < 0 ? "-" : "+");
    int mag = exp10 < 0 ? -exp10 : exp10;
    std::string e = std::to_string(mag);
    if (e.size() < 2) e.insert(e.begin(), '0');
    out += e;
  }
  return out;
}

}  // namespace ric
