// Exact rational arithmetic used throughout; no floating point anywhere.
#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <stdexcept>
#include <string>

namespace paw {

using Rat = boost::multiprecision::cpp_rational;

inline std::string rat_str(const Rat& r) {
  if (denominator(r) == 1) return numerator(r).str();
  return numerator(r).str() + "/" + denominator(r).str();
}

// Parses "a/b" or "a"; throws on malformed input or zero denominator.
inline Rat rat_parse(const std::string& s) {
  auto slash = s.find('/');
  try {
    if (slash == std::string::npos)
      return Rat(boost::multiprecision::cpp_int(s));
    boost::multiprecision::cpp_int num(s.substr(0, slash));
    boost::multiprecision::cpp_int den(s.substr(slash + 1));
    if (den == 0) throw std::runtime_error("zero denominator");
    return Rat(num, den);
  } catch (const std::exception&) {
    throw std::runtime_error("malformed rational '" + s + "'");
  }
}

}  // namespace paw
