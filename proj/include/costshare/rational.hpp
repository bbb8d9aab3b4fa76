#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <cstdlib>
#include <string>
#include <string_view>
#include <vector>

#include "costshare/errors.hpp"

namespace costshare {

/// Exact rational used for every cost, share and potential in the engine.
/// Floating point never touches cost arithmetic.
using Rational = mpq_class;

inline Rational rational(long num, long den = 1) {
  if (den == 0) throw Error("rational: zero denominator");
  Rational r{mpz_class(num), mpz_class(den)};
  r.canonicalize();
  return r;
}

/// Canonical "p/q" form; integers are written "p/1".
inline std::string to_string(const Rational& x) {
  return x.get_num().get_str() + "/" + x.get_den().get_str();
}

namespace detail {

inline bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (c < '0' || c > '9') return false;
  return true;
}

}  // namespace detail

/// Accepts "p/q", "p" and plain decimals such as "0.25" or "-3.5".
inline Rational parse_rational(std::string_view text) {
  const std::string original(text);
  auto malformed = [&] { return ConfigError("malformed rational '" + original + "'"); };

  std::string_view s = text;
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }

  mpz_class num;
  mpz_class den = 1;
  if (auto slash = s.find('/'); slash != std::string_view::npos) {
    auto p = s.substr(0, slash);
    auto q = s.substr(slash + 1);
    if (!detail::all_digits(p) || !detail::all_digits(q)) throw malformed();
    num.set_str(std::string(p), 10);
    den.set_str(std::string(q), 10);
    if (den == 0) throw malformed();
  } else if (auto dot = s.find('.'); dot != std::string_view::npos) {
    auto whole = s.substr(0, dot);
    auto frac = s.substr(dot + 1);
    if (whole.empty()) whole = "0";
    if (!detail::all_digits(whole) || (!frac.empty() && !detail::all_digits(frac))) throw malformed();
    num.set_str(std::string(whole) + std::string(frac), 10);
    mpz_ui_pow_ui(den.get_mpz_t(), 10, frac.size());
  } else {
    if (!detail::all_digits(s)) throw malformed();
    num.set_str(std::string(s), 10);
  }
  if (negative) num = -num;
  Rational r{num, den};
  r.canonicalize();
  return r;
}

/// 2^exponent, exact for negative exponents too.
inline Rational pow2(int exponent) {
  mpz_class p = 1;
  mpz_mul_2exp(p.get_mpz_t(), p.get_mpz_t(), static_cast<mp_bitcnt_t>(std::abs(exponent)));
  if (exponent >= 0) return Rational(p);
  return Rational(mpz_class(1), p);
}

/// floor(log2 x) for x > 0, by bit lengths plus one exact comparison.
inline int floor_log2(const Rational& x) {
  if (sgn(x) <= 0) throw Error("floor_log2 of a non-positive value");
  const auto num_bits = static_cast<long>(mpz_sizeinbase(x.get_num_mpz_t(), 2));
  const auto den_bits = static_cast<long>(mpz_sizeinbase(x.get_den_mpz_t(), 2));
  int k = static_cast<int>(num_bits - den_bits);
  // x lies in [2^(k-1), 2^(k+1)).
  if (x < pow2(k)) --k;
  return k;
}

inline int ceil_log2(const Rational& x) {
  const int k = floor_log2(x);
  return x == pow2(k) ? k : k + 1;
}

/// Decimal rendering rounded half away from zero, e.g. to_decimal(2/3, 6) == "0.666667".
inline std::string to_decimal(const Rational& x, int digits = 6) {
  mpz_class scale;
  mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(digits));
  Rational scaled = abs(x) * scale + Rational(1, 2);
  mpz_class rounded;
  mpz_fdiv_q(rounded.get_mpz_t(), scaled.get_num_mpz_t(), scaled.get_den_mpz_t());
  std::string body = rounded.get_str();
  if (digits > 0) {
    if (body.size() <= static_cast<std::size_t>(digits))
      body.insert(0, static_cast<std::size_t>(digits) + 1 - body.size(), '0');
    body.insert(body.size() - static_cast<std::size_t>(digits), ".");
  }
  if (sgn(x) < 0 && rounded != 0) body.insert(0, "-");
  return body;
}

inline double to_double(const Rational& x) { return x.get_d(); }

/// H(n) = 1 + 1/2 + ... + 1/n, cached per thread.
inline Rational harmonic(std::uint64_t n) {
  thread_local std::vector<Rational> table{Rational(0)};
  while (table.size() <= n) {
    const auto i = static_cast<unsigned long>(table.size());
    table.push_back(table.back() + Rational(mpz_class(1), mpz_class(i)));
  }
  return table[n];
}

}  // namespace costshare
