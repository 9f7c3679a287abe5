#include "sotkit/time.h"

#include <cmath>
#include <stdexcept>

namespace sotkit {

Time Time::FromSeconds(double seconds) {
  if (std::isnan(seconds)) throw std::invalid_argument("time is NaN");
  if (std::isinf(seconds)) {
    if (seconds > 0) return Infinite();
    throw std::invalid_argument("time is -inf");
  }
  const double us = std::round(seconds * 1e6);
  if (std::abs(us) >= static_cast<double>(kInfiniteMicros)) return Infinite();
  return Time(static_cast<int64_t>(us));
}

double Time::seconds() const {
  if (is_infinite()) return std::numeric_limits<double>::infinity();
  return static_cast<double>(us_) / 1e6;
}

std::string Time::ToString() const {
  if (is_infinite()) return "inf";
  const bool negative = us_ < 0;
  const uint64_t magnitude = negative ? -static_cast<uint64_t>(us_) : us_;
  std::string out = negative ? "-" : "";
  out += std::to_string(magnitude / 1000000);
  uint64_t frac = magnitude % 1000000;
  if (frac != 0) {
    std::string digits = std::to_string(frac);
    digits.insert(0, 6 - digits.size(), '0');
    while (digits.back() == '0') digits.pop_back();
    out += "." + digits;
  }
  return out;
}

}  // namespace sotkit
