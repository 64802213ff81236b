#pragma once

#include <cstdint>
#include <string>

namespace exprtree {

// Exact rational with int64 numerator/denominator, always reduced, den > 0.
// Arithmetic goes through 128-bit intermediates and throws Error(Overflow)
// if a reduced result no longer fits.
class Rational {
 public:
  Rational() : num_(0), den_(1) {}
  Rational(std::int64_t n) : num_(n), den_(1) {}  // NOLINT(runtime/explicit)
  Rational(std::int64_t n, std::int64_t d);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }

  bool is_zero() const { return num_ == 0; }
  bool is_integer() const { return den_ == 1; }
  double to_double() const;

  Rational operator-() const { return Rational(-num_, den_); }
  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);  // throws DivisionByZero
  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

  // a^e for integer exponent; throws DivisionByZero for 0^negative.
  Rational pow_int(std::int64_t e) const;

  // "7", "-3", "2/3", "0.5" (exact decimal), "50%" -> 1/2.
  static Rational parse(const std::string& text);
  static bool try_parse(const std::string& text, Rational* out);

  // Minimal exact string: integers as "7", otherwise "num/den".
  std::string str() const;
  // Decimal string when den is 2^a*5^b ("0.5"), otherwise falls back to str().
  std::string decimal_str() const;

 private:
  std::int64_t num_;
  std::int64_t den_;
};

// Evaluation result: exact rational when possible, double once any
// non-rational step (pi, fractional exponent) is involved.
class Value {
 public:
  Value() : exact_(true), rat_(0), real_(0.0) {}
  Value(Rational r) : exact_(true), rat_(r), real_(r.to_double()) {}  // NOLINT
  static Value real(double d) {
    Value v;
    v.exact_ = false;
    v.rat_ = Rational(0);
    v.real_ = d;
    return v;
  }

  bool is_exact() const { return exact_; }
  const Rational& rat() const { return rat_; }
  double to_double() const { return exact_ ? rat_.to_double() : real_; }
  bool is_zero() const { return exact_ ? rat_.is_zero() : real_ == 0.0; }

  friend Value operator+(const Value& a, const Value& b);
  friend Value operator-(const Value& a, const Value& b);
  friend Value operator*(const Value& a, const Value& b);
  friend Value operator/(const Value& a, const Value& b);
  static Value pow(const Value& base, const Value& exp);

  // Exact equality for two exact values, double equality otherwise.
  friend bool operator==(const Value& a, const Value& b);

  bool close_to(const Value& other, double rel_tol) const;

  // Exact values render via Rational::str(); reals as shortest round-trip decimal.
  std::string str() const;
  static Value parse(const std::string& text);

 private:
  bool exact_;
  Rational rat_;
  double real_;
};

}  // namespace exprtree
