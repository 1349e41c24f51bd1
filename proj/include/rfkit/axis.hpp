#pragma once

#include <algorithm>
#include <ostream>
#include <string>

namespace rfkit {

/// A pair of spatial sizes, always ordered (frequency, time).
struct Axis2 {
  int freq = 1;
  int time = 1;

  constexpr Axis2() = default;
  constexpr Axis2(int f, int t) : freq(f), time(t) {}
  static constexpr Axis2 square(int v) { return {v, v}; }

  constexpr bool operator==(const Axis2&) const = default;

  /// Componentwise <= (both axes).
  constexpr bool fits_within(const Axis2& bound) const {
    return freq <= bound.freq && time <= bound.time;
  }
  constexpr bool is_square() const { return freq == time; }

  std::string str() const { return std::to_string(freq) + "x" + std::to_string(time); }
};

constexpr Axis2 max(const Axis2& a, const Axis2& b) {
  return {std::max(a.freq, b.freq), std::max(a.time, b.time)};
}

constexpr Axis2 operator*(const Axis2& a, const Axis2& b) {
  return {a.freq * b.freq, a.time * b.time};
}

inline std::ostream& operator<<(std::ostream& os, const Axis2& a) { return os << a.str(); }

enum class AxisSel { both, time, freq };

}  // namespace rfkit
