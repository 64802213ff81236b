#include "exprtree/rational.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>

#include "exprtree/errors.hpp"

namespace exprtree {

namespace {

using int128 = __int128;

std::int64_t to_i64_checked(int128 v) {
  if (v > std::numeric_limits<std::int64_t>::max() ||
      v < std::numeric_limits<std::int64_t>::min()) {
    throw Error(ErrorCode::Overflow, "rational out of int64 range");
  }
  return static_cast<std::int64_t>(v);
}

int128 gcd128(int128 a, int128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

Rational make_reduced(int128 num, int128 den) {
  if (den == 0) throw Error(ErrorCode::DivisionByZero, "zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return Rational(to_i64_checked(num), to_i64_checked(den));
}

}  // namespace

Rational::Rational(std::int64_t n, std::int64_t d) : num_(n), den_(d) {
  if (den_ == 0) throw Error(ErrorCode::DivisionByZero, "zero denominator");
  if (den_ < 0) {
    num_ = -num_;
    den_ = -den_;
  }
  std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
}

double Rational::to_double() const {
  return static_cast<double>(num_) / static_cast<double>(den_);
}

Rational operator+(const Rational& a, const Rational& b) {
  return make_reduced(int128(a.num_) * b.den_ + int128(b.num_) * a.den_,
                      int128(a.den_) * b.den_);
}

Rational operator-(const Rational& a, const Rational& b) {
  return make_reduced(int128(a.num_) * b.den_ - int128(b.num_) * a.den_,
                      int128(a.den_) * b.den_);
}

Rational operator*(const Rational& a, const Rational& b) {
  return make_reduced(int128(a.num_) * b.num_, int128(a.den_) * b.den_);
}

Rational operator/(const Rational& a, const Rational& b) {
  if (b.is_zero()) throw Error(ErrorCode::DivisionByZero, "division by zero");
  return make_reduced(int128(a.num_) * b.den_, int128(a.den_) * b.num_);
}

Rational Rational::pow_int(std::int64_t e) const {
  if (e == 0) return Rational(1);
  if (is_zero() && e < 0) {
    throw Error(ErrorCode::DivisionByZero, "0 raised to negative power");
  }
  Rational base = *this;
  if (e < 0) {
    base = Rational(1) / base;
    e = -e;
  }
  Rational acc(1);
  while (e > 0) {
    if (e & 1) acc = acc * base;
    e >>= 1;
    if (e) base = base * base;
  }
  return acc;
}

bool Rational::try_parse(const std::string& text, Rational* out) {
  if (text.empty()) return false;
  std::string s = text;
  bool percent = false;
  if (s.back() == '%') {
    percent = true;
    s.pop_back();
    if (s.empty()) return false;
  }
  auto parse_i64 = [](const std::string& t, std::int64_t* v) {
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto res = std::from_chars(first, last, *v);
    return res.ec == std::errc() && res.ptr == last;
  };
  Rational r;
  auto slash = s.find('/');
  if (slash != std::string::npos) {
    std::int64_t n, d;
    if (!parse_i64(s.substr(0, slash), &n) || !parse_i64(s.substr(slash + 1), &d) || d == 0) {
      return false;
    }
    r = Rational(n, d);
  } else {
    auto dot = s.find('.');
    if (dot == std::string::npos) {
      std::int64_t n;
      if (!parse_i64(s, &n)) return false;
      r = Rational(n);
    } else {
      std::string frac = s.substr(dot + 1);
      std::string whole = s.substr(0, dot);
      if (frac.empty() && (whole.empty() || whole == "-")) return false;
      if (frac.size() > 17) return false;
      bool neg = !whole.empty() && whole[0] == '-';
      if (neg) whole = whole.substr(1);
      std::int64_t w = 0;
      if (!whole.empty() && !parse_i64(whole, &w)) return false;
      std::int64_t f = 0;
      if (!frac.empty() && !parse_i64(frac, &f)) return false;
      if (f < 0) return false;
      int128 den = 1;
      for (size_t i = 0; i < frac.size(); ++i) den *= 10;
      int128 num = int128(w) * den + f;
      if (neg) num = -num;
      try {
        r = make_reduced(num, den);
      } catch (const Error&) {
        return false;
      }
    }
  }
  if (percent) r = r / Rational(100);
  *out = r;
  return true;
}

Rational Rational::parse(const std::string& text) {
  Rational r;
  if (!try_parse(text, &r)) {
    throw Error(ErrorCode::UnknownToken, "not a rational literal: '" + text + "'");
  }
  return r;
}

std::string Rational::str() const {
  if (den_ == 1) return std::to_string(num_);
  return std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rational::decimal_str() const {
  if (den_ == 1) return std::to_string(num_);
  std::int64_t d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  if (d != 1) return str();
  int digits = twos > fives ? twos : fives;
  int128 scale = 1;
  for (int i = 0; i < digits; ++i) scale *= 10;
  int128 scaled = int128(num_) * scale / den_;
  bool neg = scaled < 0;
  if (neg) scaled = -scaled;
  std::string intpart = std::to_string(static_cast<long long>(scaled / scale));
  std::string frac = std::to_string(static_cast<long long>(scaled % scale));
  frac.insert(frac.begin(), digits - frac.size(), '0');
  return (neg ? "-" : "") + intpart + "." + frac;
}

Value operator+(const Value& a, const Value& b) {
  if (a.exact_ && b.exact_) return Value(a.rat_ + b.rat_);
  return Value::real(a.to_double() + b.to_double());
}

Value operator-(const Value& a, const Value& b) {
  if (a.exact_ && b.exact_) return Value(a.rat_ - b.rat_);
  return Value::real(a.to_double() - b.to_double());
}

Value operator*(const Value& a, const Value& b) {
  if (a.exact_ && b.exact_) return Value(a.rat_ * b.rat_);
  return Value::real(a.to_double() * b.to_double());
}

Value operator/(const Value& a, const Value& b) {
  if (b.is_zero()) throw Error(ErrorCode::DivisionByZero, "division by zero");
  if (a.exact_ && b.exact_) return Value(a.rat_ / b.rat_);
  return Value::real(a.to_double() / b.to_double());
}

Value Value::pow(const Value& base, const Value& exp) {
  // exact path only for rational base with small integer exponent
  if (base.exact_ && exp.exact_ && exp.rat_.is_integer()) {
    std::int64_t e = exp.rat_.num();
    if (e >= -30 && e <= 30) {
      try {
        return Value(base.rat_.pow_int(e));
      } catch (const Error& err) {
        if (err.code() == ErrorCode::DivisionByZero) throw;
        // overflow: fall through to double
      }
    }
  }
  if (base.is_zero()) {
    double e = exp.to_double();
    if (e < 0) throw Error(ErrorCode::DivisionByZero, "0 raised to negative power");
  }
  return Value::real(std::pow(base.to_double(), exp.to_double()));
}

bool operator==(const Value& a, const Value& b) {
  if (a.exact_ && b.exact_) return a.rat_ == b.rat_;
  return a.to_double() == b.to_double();
}

bool Value::close_to(const Value& other, double rel_tol) const {
  if (exact_ && other.exact_) {
    if (rat_ == other.rat_) return true;
  }
  double x = to_double();
  double y = other.to_double();
  if (!std::isfinite(x) || !std::isfinite(y)) return false;
  double scale = std::fmax(1.0, std::fmax(std::fabs(x), std::fabs(y)));
  return std::fabs(x - y) <= rel_tol * scale;
}

std::string Value::str() const {
  if (exact_) return rat_.str();
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", real_);
  return buf;
}

Value Value::parse(const std::string& text) {
  Rational r;
  if (Rational::try_parse(text, &r)) return Value(r);
  char* end = nullptr;
  double d = std::strtod(text.c_str(), &end);
  if (end == text.c_str() || *end != '\0') {
    throw Error(ErrorCode::MalformedRecord, "not a numeric value: '" + text + "'");
  }
  return Value::real(d);
}

}  // namespace exprtree
