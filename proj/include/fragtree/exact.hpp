#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <string>

namespace fragtree {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// A rational parameter value given as num/den, used by the exact code paths.
struct RationalParam {
  std::int64_t num = 1;
  std::int64_t den = 1;

  Rational value() const { return Rational(num, den); }
  double approx() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Parses "2", "1/2" or "-3/4". Throws DomainError on malformed input or zero denominator.
RationalParam parse_rational(const std::string& text);

BigInt factorial(unsigned n);

}  // namespace fragtree
