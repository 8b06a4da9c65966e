#pragma once

#include <cmath>
#include <limits>

namespace bdm::detail {

/// A real number stored as sign and natural log of its magnitude. Products of
/// hundreds of rates and characteristic polynomials of large generators stay
/// representable where a plain double would overflow.
struct SignedLog {
  double log_mag = -std::numeric_limits<double>::infinity();
  int sign = 0;

  SignedLog() = default;
  SignedLog(double x) {  // NOLINT(google-explicit-constructor)
    if (x > 0) {
      log_mag = std::log(x);
      sign = 1;
    } else if (x < 0) {
      log_mag = std::log(-x);
      sign = -1;
    }
  }

  static SignedLog from_log(double log_mag, int sign = 1) {
    SignedLog r;
    r.log_mag = log_mag;
    r.sign = sign;
    return r;
  }

  bool is_zero() const { return sign == 0; }
  double log_abs() const { return log_mag; }
  double to_double() const { return sign == 0 ? 0.0 : sign * std::exp(log_mag); }

  friend SignedLog operator*(SignedLog a, const SignedLog& b) {
    if (a.sign == 0 || b.sign == 0) return {};
    a.log_mag += b.log_mag;
    a.sign *= b.sign;
    return a;
  }
  friend SignedLog operator/(SignedLog a, const SignedLog& b) {
    if (a.sign == 0) return {};
    a.log_mag -= b.log_mag;
    a.sign *= b.sign;
    return a;
  }
  friend SignedLog operator-(SignedLog a) {
    a.sign = -a.sign;
    return a;
  }
  friend SignedLog operator+(const SignedLog& a, const SignedLog& b) {
    if (a.sign == 0) return b;
    if (b.sign == 0) return a;
    const SignedLog& hi = a.log_mag >= b.log_mag ? a : b;
    const SignedLog& lo = a.log_mag >= b.log_mag ? b : a;
    const double d = lo.log_mag - hi.log_mag;
    if (hi.sign == lo.sign) return from_log(hi.log_mag + std::log1p(std::exp(d)), hi.sign);
    if (d == 0.0) return {};
    return from_log(hi.log_mag + std::log1p(-std::exp(d)), hi.sign);
  }
  friend SignedLog operator-(const SignedLog& a, const SignedLog& b) { return a + (-b); }
  SignedLog& operator+=(const SignedLog& o) { return *this = *this + o; }
  SignedLog& operator-=(const SignedLog& o) { return *this = *this - o; }
  SignedLog& operator*=(const SignedLog& o) { return *this = *this * o; }
  SignedLog& operator/=(const SignedLog& o) { return *this = *this / o; }
};

}  // namespace bdm::detail
