#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <string>

namespace sotkit {

// Timeline position or duration in integer microseconds.
//
// Decimal seconds read from files are rounded to the nearest microsecond
// exactly once, at the boundary, so that comparisons such as "gap <= beta"
// are exact for any value with at most six fractional digits.
class Time {
 public:
  constexpr Time() = default;

  static constexpr Time FromMicros(int64_t us) { return Time(us); }
  static Time FromSeconds(double seconds);
  // Saturating "infinity"; kept well below INT64_MAX so sums and differences
  // of a few infinities never overflow.
  static constexpr Time Infinite() { return Time(kInfiniteMicros); }

  constexpr int64_t micros() const { return us_; }
  constexpr bool is_infinite() const { return us_ >= kInfiniteMicros; }
  double seconds() const;

  // Shortest decimal representation of the value in seconds ("4.1", "0.25").
  std::string ToString() const;

  constexpr Time operator+(Time o) const {
    return (is_infinite() || o.is_infinite()) ? Infinite() : Time(us_ + o.us_);
  }
  constexpr Time operator-(Time o) const { return Time(us_ - o.us_); }
  constexpr auto operator<=>(const Time&) const = default;

 private:
  static constexpr int64_t kInfiniteMicros =
      std::numeric_limits<int64_t>::max() / 8;
  constexpr explicit Time(int64_t us) : us_(us) {}

  int64_t us_ = 0;
};

}  // namespace sotkit
