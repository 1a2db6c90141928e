#pragma once

#include <compare>
#include <limits>
#include <ostream>

namespace dstune {

/// Objective value with a distinguished WORST marker.
///
/// WORST ranks after every finite value and never takes part in arithmetic.
/// It encodes infeasibility (e.g. an unstable closed loop) so the optimizer
/// only ever needs the ordering.
class ObjectiveValue {
 public:
  constexpr ObjectiveValue() = default;
  // NaN maps to WORST so the ordering stays total.
  constexpr ObjectiveValue(double v)  // NOLINT: implicit on purpose
      : value_(v), worst_(v != v) {}

  static constexpr ObjectiveValue worst() {
    ObjectiveValue o;
    o.worst_ = true;
    return o;
  }

  constexpr bool is_worst() const noexcept { return worst_; }
  constexpr bool is_finite() const noexcept { return !worst_; }

  /// Numeric value; +infinity for WORST. Only for reporting.
  constexpr double value() const noexcept {
    return worst_ ? std::numeric_limits<double>::infinity() : value_;
  }

  friend constexpr bool operator==(const ObjectiveValue& a, const ObjectiveValue& b) {
    if (a.worst_ || b.worst_) return a.worst_ == b.worst_;
    return a.value_ == b.value_;
  }

  friend constexpr std::partial_ordering operator<=>(const ObjectiveValue& a,
                                                     const ObjectiveValue& b) {
    if (a.worst_ && b.worst_) return std::partial_ordering::equivalent;
    if (a.worst_) return std::partial_ordering::greater;
    if (b.worst_) return std::partial_ordering::less;
    return a.value_ <=> b.value_;
  }

  friend std::ostream& operator<<(std::ostream& os, const ObjectiveValue& v) {
    if (v.worst_) return os << "inf";
    return os << v.value_;
  }

 private:
  double value_ = 0.0;
  bool worst_ = false;
};

}  // namespace dstune
