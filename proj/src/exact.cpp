#include "fragtree/exact.hpp"

#include "fragtree/errors.hpp"

#include <charconv>

namespace fragtree {
namespace {

std::int64_t parse_int(std::string_view s, const std::string& whole) {
  std::int64_t v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (!s.empty() && s.front() == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last)
    throw DomainError("not a rational number: '" + whole + "'");
  return v;
}

}  // namespace

RationalParam parse_rational(const std::string& text) {
  RationalParam r;
  const auto slash = text.find('/');
  if (slash == std::string::npos) {
    r.num = parse_int(text, text);
    r.den = 1;
  } else {
    r.num = parse_int(std::string_view(text).substr(0, slash), text);
    r.den = parse_int(std::string_view(text).substr(slash + 1), text);
  }
  if (r.den == 0) throw DomainError("zero denominator in '" + text + "'");
  if (r.den < 0) {
    r.num = -r.num;
    r.den = -r.den;
  }
  return r;
}

BigInt factorial(unsigned n) {
  BigInt f = 1;
  for (unsigned i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace fragtree
